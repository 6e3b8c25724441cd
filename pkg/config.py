"""
Application configuration.
"""
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

BASE_DIR = os.path.dirname(os.path.abspath(__file__))


def _workers():
    value = os.getenv('SDD_WORKERS')
    return int(value) if value else (os.cpu_count() or 1)


class Config:
    """Base configuration."""

    # Flask settings
    SECRET_KEY = os.getenv('SECRET_KEY', 'dev-secret-key-change-in-production')

    # Worker pool for independent simulations
    WORKERS = _workers()

    # Artifacts
    OUTPUT_FOLDER = os.getenv('OUTPUT_FOLDER', os.path.join(BASE_DIR, 'runs'))
    EXPERIMENTS_FOLDER = os.path.join(BASE_DIR, 'app', 'experiments')
    EVENT_LOG_NAME = 'events.jsonl'

    # Config uploads to /api/v1/configs/validate
    MAX_CONTENT_LENGTH = 1024 * 1024  # 1MB


class DevelopmentConfig(Config):
    """Development configuration."""

    DEBUG = True
    TESTING = False


class ProductionConfig(Config):
    """Production configuration."""

    DEBUG = False
    TESTING = False

    @classmethod
    def validate_config(cls):
        """Validate production configuration."""
        if cls.WORKERS < 1:
            raise ValueError("SDD_WORKERS must be a positive integer")

        if not os.path.isdir(cls.EXPERIMENTS_FOLDER):
            raise ValueError("Bundled experiments folder is missing")


class TestingConfig(Config):
    """Testing configuration."""

    DEBUG = True
    TESTING = True

    # Keep tests single-process and deterministic
    WORKERS = 1


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
