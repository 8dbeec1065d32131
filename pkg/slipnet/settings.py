"""
Django settings for slipnet project.

Generated by 'django-admin startproject' using Django 4.2.26.

For more information on this file, see
https://docs.djangoproject.com/en/4.2/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

import os
import secrets
from pathlib import Path
import dj_database_url

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


def env_flag(name: str, default: str = "false") -> bool:
    return str(os.environ.get(name, default)).lower() in ("1", "true", "yes")


# SECURITY WARNING: keep the secret key used in production secret!
# Read from environment first; fall back to a generated placeholder for local dev.
SECRET_KEY = os.environ.get("SECRET_KEY") or secrets.token_urlsafe(50)

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = env_flag("DEBUG", "true")

ALLOWED_HOSTS: list[str] = [h for h in os.environ.get("ALLOWED_HOSTS", "").split(",") if h]

# Application definition

INSTALLED_APPS = [
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "django.contrib.staticfiles",
    "rest_framework",
    "rest_framework_simplejwt",
    "drf_yasg",
    "slipdetect",
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.middleware.csrf.CsrfViewMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
    "django.middleware.clickjacking.XFrameOptionsMiddleware",
]

ROOT_URLCONF = "slipnet.urls"

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {
            "context_processors": [
                "django.template.context_processors.debug",
                "django.template.context_processors.request",
                "django.contrib.auth.context_processors.auth",
                "django.contrib.messages.context_processors.messages",
            ],
        },
    },
]

WSGI_APPLICATION = "slipnet.wsgi.application"


# Database
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases

DATABASES = {
    "default": dj_database_url.config(
        default=os.environ.get("DATABASE_URL", f"sqlite:///{BASE_DIR / 'db.sqlite3'}"),
        conn_max_age=600,
    )
}

if os.environ.get("REDIS_URL"):
    CACHES = {
        "default": {
            "BACKEND": "django_redis.cache.RedisCache",
            "LOCATION": os.environ["REDIS_URL"],
            "OPTIONS": {
                "CLIENT_CLASS": "django_redis.client.DefaultClient",
            },
        }
    }
else:
    CACHES = {
        "default": {
            "BACKEND": "django.core.cache.backends.locmem.LocMemCache",
        }
    }

REST_FRAMEWORK = {
    "DEFAULT_AUTHENTICATION_CLASSES": (
        "rest_framework_simplejwt.authentication.JWTAuthentication",
    ),
    "DEFAULT_PERMISSION_CLASSES": ("rest_framework.permissions.AllowAny",),
}


# Password validation
# https://docs.djangoproject.com/en/4.2/ref/settings/#auth-password-validators

AUTH_PASSWORD_VALIDATORS = [
    {
        "NAME": "django.contrib.auth.password_validation.UserAttributeSimilarityValidator",
    },
    {
        "NAME": "django.contrib.auth.password_validation.MinimumLengthValidator",
    },
    {
        "NAME": "django.contrib.auth.password_validation.CommonPasswordValidator",
    },
    {
        "NAME": "django.contrib.auth.password_validation.NumericPasswordValidator",
    },
]


# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True


# Static files (CSS, JavaScript, Images)
# https://docs.djangoproject.com/en/4.2/howto/static-files/

STATIC_URL = "static/"

# Default primary key field type
# https://docs.djangoproject.com/en/4.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Logging
SLIPNET_LOG_LEVEL = os.environ.get("SLIPNET_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "slipdetect": {"handlers": ["console"], "level": SLIPNET_LOG_LEVEL, "propagate": False},
    },
}


# Slip detection behaviour toggles

# Where management commands look for datasets and write reports/checkpoints
# when no explicit path is given.
SLIPNET_DATA_ROOT = Path(os.environ.get("SLIPNET_DATA_ROOT", BASE_DIR / "data"))
SLIPNET_REPORT_ROOT = Path(os.environ.get("SLIPNET_REPORT_ROOT", BASE_DIR / "reports"))

# Learning rate (Adam) for recorded datasets and long schedules. Far too small for short synthetic runs,
# which use SLIPNET_SYNTH_LR instead.
SLIPNET_RECORDED_LR = float(os.environ.get("SLIPNET_RECORDED_LR", "1e-7"))
SLIPNET_SYNTH_LR = float(os.environ.get("SLIPNET_SYNTH_LR", "1e-3"))

# Threads used to parse episode directories in parallel.
SLIPNET_LOAD_WORKERS = int(os.environ.get("SLIPNET_LOAD_WORKERS", "4"))

# Persist TrainingRun / EvaluationRecord rows. Training never depends on it.
SLIPNET_RECORD_RUNS = env_flag("SLIPNET_RECORD_RUNS", "true")

# Default tactile calibration: shear axes in [-range, +range] N, normal in [0, max] N.
SLIPNET_SHEAR_RANGE_N = float(os.environ.get("SLIPNET_SHEAR_RANGE_N", "5.0"))
SLIPNET_NORMAL_MAX_N = float(os.environ.get("SLIPNET_NORMAL_MAX_N", "15.0"))
SLIPNET_TARE = env_flag("SLIPNET_TARE", "true")

# API openness toggle: when True API views use AllowAny (convenience for local/dev).
# Set to False in production to enforce authentication (IsAuthenticated).
SLIPNET_API_OPEN = env_flag("SLIPNET_API_OPEN", "true")
