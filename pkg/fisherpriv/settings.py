"""
Django settings for fisherpriv project.

fisherpriv 是一个隐私噪声机制工具包：
- privacy_noise: 数值核心（噪声分布、Fisher信息、最优机制、PDE残差校验）
- query_service: 可信查询服务（持有私有数据库，按配置的机制返回加噪响应）
- experiments: 实验运行器（复现图表和数值表格）

For more information on this file, see
https://docs.djangoproject.com/en/5.2/topics/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get(
    'DJANGO_SECRET_KEY',
    'django-insecure-fisherpriv-local-development-key-change-me',
)

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.environ.get('DJANGO_DEBUG', 'true').lower() in ('1', 'true', 'yes')

ALLOWED_HOSTS = os.environ.get('ALLOWED_HOSTS', 'localhost,127.0.0.1').split(',')


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'django.contrib.staticfiles',

    # REST API相关
    'rest_framework',  # Django REST Framework（序列化器 + HTTP查询接口）
    'drf_yasg',  # API文档生成

    # 自定义应用
    'privacy_noise',  # 数值核心
    'query_service',  # 可信查询服务
    'experiments',  # 实验运行器
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'fisherpriv.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.request',
            ],
        },
    },
]

WSGI_APPLICATION = 'fisherpriv.wsgi.application'


# Database
# 工具包本身不使用数据库表；保留sqlite仅供Django内部使用

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization

LANGUAGE_CODE = 'zh-hans'

TIME_ZONE = 'Asia/Shanghai'

USE_I18N = True

USE_TZ = True


# Static files (CSS, JavaScript, Images)

STATIC_URL = 'static/'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# REST Framework配置
REST_FRAMEWORK = {
    # 查询服务没有用户体系，不做认证
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [
        'rest_framework.permissions.AllowAny',
    ],
    'UNAUTHENTICATED_USER': None,

    'DEFAULT_RENDERER_CLASSES': [
        'rest_framework.renderers.JSONRenderer',
    ],

    'EXCEPTION_HANDLER': 'rest_framework.views.exception_handler',
}

# Swagger文档配置
SWAGGER_SETTINGS = {
    'USE_SESSION_AUTH': False,
    'JSON_EDITOR': True,
    'SUPPORTED_SUBMIT_METHODS': ['get', 'post'],
}


# ========== 工具包数值配置 ==========
#
# privacy_noise.conf.toolkit_setting() 读取这里的值；
# 没有配置Django时使用 privacy_noise.conf.DEFAULTS 中的同名默认值。

PRIVACY_TOOLKIT = {
    'VERSION': '1.0.0',

    # 自适应积分（scipy.integrate.quad）
    'QUADRATURE_EPSABS': 1e-10,
    'QUADRATURE_EPSREL': 1e-10,
    'QUADRATURE_LIMIT': 200,  # 最大细分次数，超出即 QuadratureFailure

    # Fisher信息数值积分的网格点数（至少2049）
    'FISHER_GRID': 4097,

    # 倾斜cos²分布拒绝采样的包络：稠密网格点数与放大系数
    'ENVELOPE_GRID': 4097,
    'ENVELOPE_INFLATION': 1.01,

    # PDE残差判定阈值（相对 μ·‖u‖∞）
    'RESIDUAL_TOLERANCE': 1e-2,

    # 蒙特卡洛判定：允许的标准误倍数、最少试验次数
    'MC_SLACK_SIGMAS': 3.0,
    'MC_MIN_TRIALS': 10_000,

    # 实验默认随机种子与输出目录
    'DEFAULT_SEED': int(os.environ.get('FISHERPRIV_SEED', '20161')),
    'OUTPUT_DIR': os.environ.get('FISHERPRIV_OUTPUT_DIR', str(BASE_DIR / 'results')),
}

# 查询服务配置文件（JSON），serve_queries / audit_ledger / HTTP接口共用
QUERY_SERVICE_CONFIG = os.environ.get('FISHERPRIV_SERVICE_CONFIG', '')


# ========== 日志配置 ==========

LOG_LEVEL = os.environ.get('FISHERPRIV_LOG_LEVEL', 'INFO')
LOG_FILE = os.environ.get('FISHERPRIV_LOG_FILE', '')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '[{levelname}] {asctime} {name} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '[{levelname}] {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'WARNING',
            'propagate': False,
        },
        'privacy_noise': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'query_service': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'experiments': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}

# 生产环境：写入滚动日志文件
if LOG_FILE:
    LOGGING['handlers']['file'] = {
        'level': 'INFO',
        'class': 'logging.handlers.RotatingFileHandler',
        'filename': LOG_FILE,
        'maxBytes': 1024 * 1024 * 10,  # 10MB
        'backupCount': 10,
        'formatter': 'verbose',
    }
    for name in ('privacy_noise', 'query_service', 'experiments'):
        LOGGING['loggers'][name]['handlers'].append('file')
