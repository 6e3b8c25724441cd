"""
Flask application factory.
"""
import os
from flask import Flask, jsonify


def create_app(config_name=None):
    """Application factory pattern."""
    app = Flask(__name__)

    # Configuration
    if config_name is None:
        config_name = os.getenv('FLASK_ENV', 'development')

    from config import config
    settings = config[config_name]
    if hasattr(settings, 'validate_config'):
        settings.validate_config()
    app.config.from_object(settings)

    # Register blueprints
    from app.api import bp as api_bp
    app.register_blueprint(api_bp, url_prefix='/api/v1')

    # Error handlers
    @app.errorhandler(404)
    def not_found_error(error):
        return jsonify({'error': 'not found'}), 404

    @app.errorhandler(500)
    def internal_error(error):
        return jsonify({'error': 'internal server error'}), 500

    # Register CLI commands (import late to avoid circular import)
    from app.cli import register_cli
    register_cli(app)

    return app
