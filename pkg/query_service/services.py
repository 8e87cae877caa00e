"""
可信查询服务的业务逻辑

这个文件把数据库、机制注册表和响应账本组合在一起，
与传输层（TCP服务器或HTTP接口）分离：

- load_database: 读取CSV形式的私有数据库并校验取值域
- Ledger: 追加写入的响应账本（NDJSON），计数器在重启后接续
- Registry: 按配置构造的机制表
- handle_request: 一条请求 → 一条响应或结构化错误
- replay_audit: 重放账本，核对有界机制的响应都落在 {f(x)} ⊕ W 内

隐私约束：
- 除响应 y 以外，不向任何输出（账本、日志、错误消息）写入数据库的函数
"""

import csv
import itertools
import json
import logging
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from privacy_noise.densities import Interval
from privacy_noise.exceptions import ConfigError, DomainViolation, ToolkitError
from privacy_noise.mechanisms import IdentityQuery, build_mechanism, compatible, query_from_config, respond
from privacy_noise.serializers import validated

from .exceptions import IncompatibleQuery, InvalidRequest, ParseError, UnknownMechanism
from .serializers import QueryRequestSerializer, ServiceConfigSerializer

logger = logging.getLogger(__name__)

LEDGER_FIELDS = ('counter', 'request_id', 'mechanism_id', 'query', 'value')
REPLAY_TOLERANCE = 1e-9


# ========== 数据库 ==========

@dataclass(frozen=True)
class Database:
    """
    私有数据库

    records: n 个实数条目（只读）
    domain: 每个条目的取值域
    source: 文件路径
    """

    records: np.ndarray
    domain: Interval
    source: str = ''

    @property
    def n(self):
        return int(self.records.shape[0])


def _parse_value(text):
    value = float(text.strip())
    if not math.isfinite(value):
        raise ValueError(text)
    return value


def load_database(path, domain):
    """
    读取私有数据库

    参数:
        path: CSV 文件，每行一个数值；第一行不是数值时视为表头
        domain: 每个条目的取值域 Interval 或 [lo, hi]

    返回:
        Database

    异常:
        ParseError: 无法解析的单元格（给出行号 row 和列号 col，均从1开始），或没有数据行
        DomainViolation: 超出取值域的条目（给出下标 index，从0开始）
    """
    domain = domain if isinstance(domain, Interval) else Interval(*domain)
    values = []
    header_seen = False
    with open(path, newline='', encoding='utf-8') as f:
        for row_number, row in enumerate(csv.reader(f), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 1:
                raise ParseError('每行只能有一个数值', row=row_number, col=2)
            try:
                values.append(_parse_value(row[0]))
            except ValueError:
                # 只有第一个非空行可以是表头
                if values or header_seen:
                    raise ParseError(f'第 {row_number} 行不是数值', row=row_number, col=1)
                header_seen = True
                header_row = row_number

    if not values:
        raise ParseError('数据库没有数据行', row=header_row if header_seen else 0, col=1)

    records = np.asarray(values, dtype=float)
    outside = np.flatnonzero((records < domain.lo) | (records > domain.hi))
    if outside.size:
        raise DomainViolation('数据库条目超出声明的取值域', index=int(outside[0]))
    records.setflags(write=False)
    logger.info('数据库已加载: %s (n=%d)', path, records.shape[0])
    return Database(records=records, domain=domain, source=str(path))


# ========== 账本 ==========

class Ledger:
    """
    追加写入的响应账本

    每行一个 JSON 对象，只包含 LEDGER_FIELDS；
    counter 严格递增，重启后从最后一条记录接续。
    写入通过锁串行化，每条记录写入后立即 flush。
    """

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self.counter = self._last_counter()
        self._file = open(self.path, 'a', encoding='utf-8')
        logger.info('账本已打开: %s (counter=%d)', self.path, self.counter)

    def _last_counter(self):
        if not self.path.exists():
            return 0
        last = 0
        for entry in read_ledger(self.path):
            last = entry['counter']
        return last

    def append(self, request_id, mechanism_id, query, value):
        """
        追加一条记录

        返回:
            写入的记录字典
        """
        with self._lock:
            self.counter += 1
            entry = {
                'counter': self.counter,
                'request_id': request_id,
                'mechanism_id': mechanism_id,
                'query': query,
                'value': value,
            }
            self._file.write(json.dumps(entry) + '\n')
            self._file.flush()
        return entry

    def close(self):
        with self._lock:
            if not self._file.closed:
                self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_ledger(path):
    """逐行读取账本，返回记录列表"""
    entries = []
    with open(path, encoding='utf-8') as f:
        for row_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError:
                raise ParseError(f'账本第 {row_number} 行不是合法的JSON', row=row_number, col=1)
    return entries


# ========== 机制注册表 ==========

class Registry:
    """机制名 → Mechanism"""

    def __init__(self, mechanisms):
        self._mechanisms = dict(mechanisms)

    @classmethod
    def from_config(cls, configs, database):
        """
        按配置构造全部机制

        参数:
            configs: {名称: 机制配置}
            database: Database，查询配置缺省的条目数取 database.n

        返回:
            Registry；构造失败时抛出 ConfigError，context 中给出机制名
        """
        mechanisms = {}
        for name, config in configs.items():
            try:
                mechanism = build_mechanism(config, query=IdentityQuery(database.n), mechanism_id=name)
            except ToolkitError as exc:
                raise ConfigError(f'机制 {name} 构造失败: {exc.message}', mechanism=name, cause=exc.code)
            if mechanism.query.n != database.n:
                raise ConfigError(
                    f'机制 {name} 的查询维数与数据库不一致',
                    mechanism=name, expected=database.n, got=mechanism.query.n,
                )
            mechanisms[name] = mechanism
        return cls(mechanisms)

    def get(self, name):
        try:
            return self._mechanisms[name]
        except KeyError:
            raise UnknownMechanism(f'未注册的机制: {name}', mechanism=name)

    def names(self):
        return sorted(self._mechanisms)

    def summaries(self):
        return [self._mechanisms[name].summary() for name in self.names()]

    def __contains__(self, name):
        return name in self._mechanisms

    def __len__(self):
        return len(self._mechanisms)


# ========== 请求处理 ==========

def error_response(request_id, code, message):
    return {'id': request_id, 'error': {'code': code, 'message': message}}


def handle_request(db, registry, request, rng, ledger=None):
    """
    处理一条查询请求

    参数:
        db: Database
        registry: Registry
        request: {"id": str, "query": {...}, "mechanism": str}
        rng: numpy.random.Generator
        ledger: Ledger，给出时记录每条成功的响应

    返回:
        {"id", "value", "mechanism"}；失败时返回 {"id", "error": {"code", "message"}}，不抛出异常
    """
    request_id = request.get('id') if isinstance(request, dict) else None
    try:
        try:
            data = validated(QueryRequestSerializer, request)
        except ConfigError as exc:
            raise InvalidRequest('请求格式不正确', errors=exc.context.get('errors'))
        request_id = data['id']
        mechanism = registry.get(data['mechanism'])
        try:
            query = query_from_config(request['query'], n=db.n)
        except ToolkitError as exc:
            raise InvalidRequest(f'查询无效: {exc.message}')
        if not compatible(mechanism, query):
            raise IncompatibleQuery(
                f'机制 {mechanism.mechanism_id} 不能回答该查询', mechanism=mechanism.mechanism_id,
            )
        response = respond(mechanism, db.records, rng)
    except ToolkitError as exc:
        logger.info('请求 %s 被拒绝: %s', request_id, exc.code)
        return error_response(request_id, exc.code, exc.message)
    except Exception:
        # 不记录异常内容，其中可能包含数据库取值
        logger.error('请求 %s 处理出错', request_id)
        return error_response(request_id, 'internal_error', '服务内部错误')

    value = response.value.tolist()
    if ledger is not None:
        entry = ledger.append(request_id, mechanism.mechanism_id, query.summary(), value)
        logger.debug('请求 %s 已响应 (counter=%d)', request_id, entry['counter'])
    return {'id': request_id, 'value': value, 'mechanism': mechanism.mechanism_id}


# ========== 服务 ==========

def load_service_config(source):
    """
    读取并校验服务配置

    参数:
        source: JSON 文件路径，或已解析的字典（相对路径按当前目录解析）

    返回:
        validated_data；文件中的相对路径按配置文件所在目录解析
    """
    base = Path('.')
    if not isinstance(source, dict):
        base = Path(source).resolve().parent
        try:
            with open(source, encoding='utf-8') as f:
                source = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f'服务配置不是合法的JSON: {exc}', path=str(source))
    data = validated(ServiceConfigSerializer, source)
    data['database']['path'] = str(base / data['database']['path'])
    data['ledger'] = str(base / data['ledger'])
    return data


class QueryService:
    """
    查询服务

    持有数据库（只读）、机制注册表和账本；
    每个连接通过 new_rng() 得到由 (seed, 连接序号) 派生的随机数生成器。
    """

    def __init__(self, config):
        """
        参数:
            config: load_service_config 的返回值
        """
        self.config = config
        self.seed = config['seed']
        self.database = load_database(config['database']['path'], config['database']['domain'])
        self.registry = Registry.from_config(config['mechanisms'], self.database)
        self.ledger = Ledger(config['ledger'])
        self._connections = itertools.count()
        self._connections_lock = threading.Lock()
        logger.info('查询服务已就绪: %d 个机制 %s', len(self.registry), self.registry.names())

    @classmethod
    def from_source(cls, source):
        """从配置文件路径或字典构造"""
        return cls(load_service_config(source))

    def new_rng(self):
        with self._connections_lock:
            index = next(self._connections)
        return np.random.default_rng([self.seed, index])

    def handle(self, request, rng):
        return handle_request(self.database, self.registry, request, rng, self.ledger)

    def close(self):
        self.ledger.close()
        logger.info('查询服务已关闭 (counter=%d)', self.ledger.counter)


# ========== 重放审计 ==========

@dataclass
class AuditReport:
    """
    账本重放结果

    checked: 核对过支撑的有界响应数
    skipped: 无界机制的响应数（不做支撑核对）
    violations: 超出 {f(x)} ⊕ W 或无法重放的记录 [{counter, reason}]
    gaps: 计数器不连续之处 [(前一个, 后一个)]
    """

    entries: int = 0
    checked: int = 0
    skipped: int = 0
    violations: list = field(default_factory=list)
    gaps: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations and not self.gaps

    def to_dict(self):
        return {
            'entries': self.entries,
            'checked': self.checked,
            'skipped': self.skipped,
            'violations': self.violations,
            'gaps': [list(gap) for gap in self.gaps],
            'passed': self.passed,
        }


def replay_audit(ledger_path, db, registry):
    """
    重放账本

    参数:
        ledger_path: 账本文件
        db: Database
        registry: Registry

    返回:
        AuditReport
    """
    report = AuditReport()
    previous = 0
    for entry in read_ledger(ledger_path):
        report.entries += 1
        counter = entry.get('counter')
        if counter != previous + 1:
            report.gaps.append((previous, counter))
        previous = counter if isinstance(counter, int) else previous

        extra = set(entry) - set(LEDGER_FIELDS)
        if extra:
            report.violations.append({'counter': counter, 'reason': f'未声明的字段: {sorted(extra)}'})
            continue
        try:
            mechanism = registry.get(entry['mechanism_id'])
            query = query_from_config(entry['query'], n=db.n)
        except ToolkitError as exc:
            report.violations.append({'counter': counter, 'reason': exc.code})
            continue
        if not mechanism.bounded:
            report.skipped += 1
            continue

        fx = query.evaluate(db.records)
        noise = mechanism.noise_at(db.records, fx)
        w = np.asarray(entry['value'], dtype=float) - fx
        report.checked += 1
        for i, support in enumerate(noise.supports()):
            if not support.contains(w[i], tol=REPLAY_TOLERANCE):
                report.violations.append({'counter': counter, 'reason': f'第 {i} 个坐标超出支撑'})
                break

    logger.info(
        '账本重放: %d 条记录，核对 %d 条，违规 %d 条，断号 %d 处',
        report.entries, report.checked, len(report.violations), len(report.gaps),
    )
    return report
