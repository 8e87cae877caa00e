"""
实验输出

- CSV: 逗号分隔、'.' 小数点，表头必填；文件开头是 '#' 注释形式的来源信息
- JSON: 缩进输出，第一个键为 provenance，其余键按写入顺序

来源信息只包含工具名、版本、实验名和种子，不含时间戳，
同一种子的重复运行得到逐字节相同的文件。
"""

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from privacy_noise.conf import toolkit_setting

logger = logging.getLogger(__name__)

TOOL_NAME = 'fisherpriv'


@dataclass(frozen=True)
class Provenance:
    experiment: str
    seed: int
    version: str = ''
    tool: str = TOOL_NAME

    def __post_init__(self):
        if not self.version:
            object.__setattr__(self, 'version', toolkit_setting('VERSION'))

    def to_dict(self):
        return {'tool': self.tool, 'version': self.version, 'experiment': self.experiment, 'seed': self.seed}

    def header_lines(self):
        return [f'# {key}={value}' for key, value in self.to_dict().items()]


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def _json_default(value):
    # numpy 标量与数组
    if hasattr(value, 'tolist'):
        return value.tolist()
    raise TypeError(f'无法序列化为JSON: {type(value).__name__}')


def write_csv(path, provenance, header, rows):
    """
    写入带来源头的 CSV

    参数:
        path: 输出文件
        provenance: Provenance
        header: 列名
        rows: 行的可迭代对象；布尔值写为 0/1，浮点数用 repr 保证可逆

    返回:
        写入的行数
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, 'w', newline='', encoding='utf-8') as f:
        for line in provenance.header_lines():
            f.write(line + '\n')
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
            count += 1
    logger.info('写入 %s (%d 行)', path, count)
    return count


def write_json(path, provenance, payload):
    """写入 {"provenance": ..., **payload} 形式的 JSON 报告"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {'provenance': provenance.to_dict()}
    document.update(payload)
    text = json.dumps(document, indent=2, ensure_ascii=False, default=_json_default)
    path.write_text(text + '\n', encoding='utf-8')
    logger.info('写入 %s', path)
    return document


def read_csv(path):
    """
    读取 write_csv 的输出

    返回:
        (来源信息字典, 表头, 行列表)，单元格保持字符串
    """
    provenance = {}
    lines = []
    with open(path, newline='', encoding='utf-8') as f:
        for line in f:
            if line.startswith('#'):
                key, _, value = line[1:].strip().partition('=')
                provenance[key] = value
            else:
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    return provenance, header, list(reader)
