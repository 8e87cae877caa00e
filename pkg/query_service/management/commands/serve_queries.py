"""
启动可信查询服务

python manage.py serve_queries --config service.json [--listen 127.0.0.1:7400]
"""

import json

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from privacy_noise.exceptions import ToolkitError
from query_service.serializers import ListenField
from query_service.server import serve
from query_service.services import load_service_config


class Command(BaseCommand):
    help = '启动换行分隔JSON的TCP查询服务（SIGINT/SIGTERM 优雅退出）'

    def add_arguments(self, parser):
        parser.add_argument('--config', default=None, help='服务配置文件（默认 settings.QUERY_SERVICE_CONFIG）')
        parser.add_argument('--listen', default=None, help='覆盖配置中的监听地址 host:port')

    def handle(self, *args, **options):
        path = options['config'] or settings.QUERY_SERVICE_CONFIG
        if not path:
            raise CommandError('未指定服务配置文件：使用 --config 或设置 FISHERPRIV_SERVICE_CONFIG')
        try:
            config = load_service_config(path)
            if options['listen']:
                config['listen'] = ListenField().run_validation(options['listen'])
        except ValidationError as exc:
            raise CommandError(f'监听地址无效: {exc.detail}')
        except FileNotFoundError as exc:
            raise CommandError(f'文件不存在: {exc.filename}')
        except ToolkitError as exc:
            raise CommandError(json.dumps([exc.to_dict()], ensure_ascii=False))

        host, port = config['listen']
        self.stdout.write(f'查询服务监听 {host}:{port}，账本 {config["ledger"]}')
        try:
            serve(config)
        except ToolkitError as exc:
            raise CommandError(json.dumps([exc.to_dict()], ensure_ascii=False))
        except FileNotFoundError as exc:
            raise CommandError(f'文件不存在: {exc.filename}')
        self.stdout.write(self.style.SUCCESS('查询服务已停止'))
