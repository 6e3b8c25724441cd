"""
Shared fixtures: a testing app with its CLI runner and client, small bases
and a temporary config writer.
"""
import pytest

from app import create_app
from processing.spectral import build_basis


@pytest.fixture
def app(tmp_path):
    app = create_app('testing')
    app.config['OUTPUT_FOLDER'] = str(tmp_path / 'runs')
    yield app


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def client(app):
    return app.test_client()


@pytest.fixture
def interval_basis():
    return build_basis('interval', 2, 4)


@pytest.fixture
def square_basis():
    return build_basis('square', 2, 3)


@pytest.fixture
def experiment_file(tmp_path):
    """Write a YAML document to a temporary config file."""

    def write(text, name='experiment.yaml'):
        path = tmp_path / name
        path.write_text(text, encoding='utf-8')
        return str(path)

    return write
