"""
Django settings for the amifsite project.

Hosts the ``amif`` app: authorizable fusion, key files, training and
evaluation, all driven through management commands.
"""
import environ
from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

env = environ.Env(
    # set casting, default value
    DEBUG=(bool, False),
    SECRET_KEY=(str, 'amif-local-development-key'),
    AMIF_DATA_ROOT=(str, str(BASE_DIR / 'data')),
    AMIF_OUTPUT_ROOT=(str, str(BASE_DIR / 'runs')),
    AMIF_MANIFEST_PATH=(str, ''),
    AMIF_DEVICE=(str, 'cpu'),
    AMIF_SEED=(int, None),
    AMIF_LOG_LEVEL=(str, 'INFO'),
    AMIF_RUN_SLOW_TESTS=(bool, False),
)


# Take environment variables from .env file
environ.Env.read_env(os.path.join(BASE_DIR, '.env'))


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = env('SECRET_KEY')

DEBUG = env('DEBUG')

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'amif',
]

MIDDLEWARE = []

# Database

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# AMIF settings
AMIF_DATA_ROOT = Path(env('AMIF_DATA_ROOT')).absolute()
AMIF_OUTPUT_ROOT = Path(env('AMIF_OUTPUT_ROOT')).absolute()
AMIF_MANIFEST_PATH = Path(env('AMIF_MANIFEST_PATH') or AMIF_OUTPUT_ROOT / 'manifest.jsonl').absolute()
AMIF_DEVICE = env('AMIF_DEVICE')
# Overrides the seed of every training config when set
AMIF_SEED = env('AMIF_SEED')
AMIF_RUN_SLOW_TESTS = env('AMIF_RUN_SLOW_TESTS')


LOG_DIRECTORY = os.path.join(AMIF_OUTPUT_ROOT, 'logs')
if not os.path.exists(LOG_DIRECTORY):
    os.makedirs(LOG_DIRECTORY)

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'level': env('AMIF_LOG_LEVEL'),
            'formatter': 'simple',
        },
        'file': {
            'class': 'logging.handlers.RotatingFileHandler',
            'filename': os.path.join(LOG_DIRECTORY, 'amif.log'),
            'maxBytes': 5 * 1024 * 1024,
            'backupCount': 3,
            'level': 'DEBUG',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'amif': {
            'handlers': ['console', 'file'],
            'level': 'DEBUG',
            'propagate': False,
        },
        'django': {
            'handlers': ['console', 'file'],
            'level': 'INFO',
            'propagate': True,
        },
    }
}
