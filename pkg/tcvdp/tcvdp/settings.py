"""
Django settings for the tcvdp project.

Experiments run as management commands of the ``crystal`` app; the database
only holds the run registry, browsable through the admin.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
from decouple import config, Csv
import dj_database_url
import sys

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Detect if we're running tests
TESTING = 'test' in sys.argv


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='django-insecure-CHANGE-THIS-IN-PRODUCTION')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1', cast=Csv())


# Application definition

INSTALLED_APPS = [
    'crystal',
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
]

ROOT_URLCONF = 'tcvdp.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'tcvdp.wsgi.application'


# Database
# Use DATABASE_URL from environment if available
# Falls back to SQLite for local runs
DATABASES = {
    'default': dj_database_url.config(
        default=f'sqlite:///{BASE_DIR / "db.sqlite3"}',
        conn_max_age=600
    )
}

if TESTING:
    DATABASES['default'] = {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': ':memory:',  # Use in-memory database for faster tests
    }


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


STATIC_URL = "/static/"
STATIC_ROOT = BASE_DIR / "staticfiles"

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Simulation defaults
# Worker processes for Langevin ensembles (--workers overrides)
TCVDP_WORKERS = config('TCVDP_WORKERS', default=1, cast=int)
# Memory allowed for one Liouvillian (MiB)
TCVDP_MEMORY_BUDGET_MB = config('TCVDP_MEMORY_BUDGET_MB', default=2048, cast=int)
# Largest superoperator dimension handled with dense linear algebra
TCVDP_DENSE_LIMIT = config('TCVDP_DENSE_LIMIT', default=4096, cast=int)
# Parent of experiment directories when --out is not given
TCVDP_OUTPUT_ROOT = Path(config('TCVDP_OUTPUT_ROOT', default=str(BASE_DIR / 'runs')))


# Logging
# Progress goes to stderr; stdout is reserved for the JSON run summaries
TCVDP_LOG_LEVEL = config('TCVDP_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'progress': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'stderr': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'progress',
        },
    },
    'loggers': {
        'crystal': {
            'handlers': ['stderr'],
            'level': 'WARNING' if TESTING else TCVDP_LOG_LEVEL,
            'propagate': False,
        },
        'django': {
            'handlers': ['stderr'],
            'level': 'WARNING',
        },
    },
}
