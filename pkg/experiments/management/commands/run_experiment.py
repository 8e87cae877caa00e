"""
运行实验

python manage.py run_experiment fig1 traffic [--spec spec.json] [--seed 7] [--out results] [--jobs 4]
python manage.py run_experiment all

任一内嵌校验失败时以非零状态退出，失败列表以JSON输出。
"""

import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from experiments.runners import run_experiments
from experiments.serializers import EXPERIMENT_NAMES, ExperimentSpecSerializer
from privacy_noise.exceptions import ToolkitError
from privacy_noise.serializers import validated


class Command(BaseCommand):
    help = '运行实验并写出 CSV/JSON 结果'

    def add_arguments(self, parser):
        parser.add_argument('names', nargs='+', choices=EXPERIMENT_NAMES + ['all'], help='实验名，all 表示全部')
        parser.add_argument('--spec', default=None, help='实验规格 JSON（种子、输出目录、各实验参数）')
        parser.add_argument('--seed', type=int, default=None, help='随机种子（优先于规格文件）')
        parser.add_argument('--out', default=None, help='输出目录（优先于规格文件）')
        parser.add_argument('--jobs', type=int, default=1, help='并发运行的实验数')

    def handle(self, *args, **options):
        names = EXPERIMENT_NAMES if 'all' in options['names'] else list(dict.fromkeys(options['names']))
        try:
            spec = validated(ExperimentSpecSerializer, self._load_spec(options['spec']))
            seed = options['seed'] if options['seed'] is not None else spec.get('seed')
            out = options['out'] or spec.get('out')
            results = run_experiments(names, seed, out, spec['experiments'], jobs=options['jobs'])
        except ToolkitError as exc:
            raise CommandError(json.dumps([exc.to_dict()], ensure_ascii=False))

        failures = []
        for result in results:
            status = '通过' if result.passed else f'{len(result.failures)} 项失败'
            self.stdout.write(f'{result.name}: {status}')
            for output in result.outputs:
                self.stdout.write(f'  {output}')
            failures.extend(result.failures)
        if failures:
            raise CommandError(json.dumps(failures, ensure_ascii=False))
        self.stdout.write(self.style.SUCCESS(f'全部 {len(results)} 个实验通过'))

    @staticmethod
    def _load_spec(path):
        if not path:
            return {}
        try:
            return json.loads(Path(path).read_text(encoding='utf-8'))
        except FileNotFoundError:
            raise CommandError(f'文件不存在: {path}')
        except json.JSONDecodeError as exc:
            raise CommandError(f'规格文件不是合法的JSON: {exc.msg} (行 {exc.lineno})')
