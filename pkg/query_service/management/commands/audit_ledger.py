"""
账本重放审计

python manage.py audit_ledger --config service.json [--ledger other.ndjson]

核对每条有界机制的响应都落在 {f(x)} ⊕ W 内、计数器没有断号。
"""

import json

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from privacy_noise.exceptions import ToolkitError
from query_service.services import Registry, load_database, load_service_config, replay_audit


class Command(BaseCommand):
    help = '重放查询账本并核对响应支撑'

    def add_arguments(self, parser):
        parser.add_argument('--config', default=None, help='服务配置文件（默认 settings.QUERY_SERVICE_CONFIG）')
        parser.add_argument('--ledger', default=None, help='覆盖配置中的账本路径')

    def handle(self, *args, **options):
        path = options['config'] or settings.QUERY_SERVICE_CONFIG
        if not path:
            raise CommandError('未指定服务配置文件：使用 --config 或设置 FISHERPRIV_SERVICE_CONFIG')
        try:
            config = load_service_config(path)
            database = load_database(config['database']['path'], config['database']['domain'])
            registry = Registry.from_config(config['mechanisms'], database)
            report = replay_audit(options['ledger'] or config['ledger'], database, registry)
        except ToolkitError as exc:
            raise CommandError(json.dumps([exc.to_dict()], ensure_ascii=False))
        except FileNotFoundError as exc:
            raise CommandError(f'文件不存在: {exc.filename}')

        self.stdout.write(json.dumps(report.to_dict(), ensure_ascii=False, indent=2))
        if not report.passed:
            failures = report.violations + [{'gap': list(gap)} for gap in report.gaps]
            raise CommandError(json.dumps(failures, ensure_ascii=False))
        self.stdout.write(self.style.SUCCESS(f'审计通过：{report.entries} 条记录'))
