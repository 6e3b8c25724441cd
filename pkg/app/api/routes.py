"""
API routes for Flask application.
"""
import os

from flask import current_app, jsonify, request

from app.api import bp
from app.models import ConfigError, bundled_configs, config_dict, parse_config


@bp.route('/health')
def health():
    """Health check endpoint."""
    return jsonify({'status': 'healthy', 'message': 'Simulation API is running'})


@bp.route('/configs')
def configs():
    """Bundled acceptance configs."""
    entries = bundled_configs(current_app.config['EXPERIMENTS_FOLDER'])
    return jsonify({
        'configs': [{
            'name': e.name,
            'subcommand': e.subcommand,
            'description': e.description,
            'file': os.path.basename(e.path)
        } for e in entries]
    })


@bp.route('/configs/validate', methods=['POST'])
def validate_config():
    """Validate a YAML config body; returns the normalized config."""
    text = request.get_data(as_text=True)
    if not text.strip():
        return jsonify({'valid': False, 'error': 'Empty request body'}), 400
    try:
        config = parse_config(text)
    except ConfigError as exc:
        current_app.logger.info('config rejected: %s', exc)
        return jsonify({'valid': False, 'error': str(exc), 'messages': exc.messages}), 400
    return jsonify({'valid': True, 'config': config_dict(config)})
