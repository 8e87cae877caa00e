"""
换行分隔 JSON 的 TCP 查询服务器

协议：客户端每行发送一个 JSON 请求，服务器按顺序每行返回一个 JSON 响应。
无法解析的行返回 malformed_request 错误，连接保持打开。

并发模型：
- asyncio 单线程事件循环，每个连接一个处理协程
- 数据库只读共享，账本写入由 Ledger 串行化
- 每个连接的随机数生成器由 (seed, 连接序号) 派生
"""

import asyncio
import contextlib
import json
import logging
import signal
import threading

from .exceptions import BindError
from .services import QueryService, error_response

logger = logging.getLogger(__name__)

MAX_LINE_BYTES = 1024 * 1024


def encode_line(payload):
    return (json.dumps(payload) + '\n').encode('utf-8')


class QueryServer:
    """
    查询服务器

    用法:
        server = QueryServer(service, '127.0.0.1', 7400)
        await server.start()
        ...
        await server.close()
    """

    def __init__(self, service, host, port):
        self.service = service
        self.host = host
        self.port = port
        self._server = None
        self._connections = {}

    async def start(self):
        try:
            self._server = await asyncio.start_server(
                self._handle_connection, self.host, self.port, limit=MAX_LINE_BYTES,
            )
        except OSError as exc:
            raise BindError(f'无法监听 {self.host}:{self.port}: {exc}', host=self.host, port=self.port)
        # 端口为0时取系统分配的端口
        self.port = self._server.sockets[0].getsockname()[1]
        logger.info('查询服务器已启动: %s:%d', self.host, self.port)

    def dispatch(self, line, rng):
        """一行请求 → 一个响应字典"""
        try:
            request = json.loads(line)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            return error_response(None, 'malformed_request', f'请求不是合法的JSON: {exc}')
        if not isinstance(request, dict):
            return error_response(None, 'malformed_request', '请求必须是JSON对象')
        try:
            return self.service.handle(request, rng)
        except Exception:
            logger.error('请求 %s 处理出错', request.get('id'))
            return error_response(request.get('id'), 'internal_error', '服务内部错误')

    async def _handle_connection(self, reader, writer):
        rng = self.service.new_rng()
        peer = writer.get_extra_info('peername')
        self._connections[writer] = asyncio.current_task()
        logger.info('新连接: %s', peer)
        try:
            while True:
                try:
                    line = await reader.readline()
                except ValueError:
                    # 超长行：无法继续按行对齐，返回错误后关闭连接
                    writer.write(encode_line(error_response(None, 'malformed_request', '请求行过长')))
                    await writer.drain()
                    break
                if not line:
                    break
                if not line.strip():
                    continue
                writer.write(encode_line(self.dispatch(line, rng)))
                await writer.drain()
        except (ConnectionResetError, BrokenPipeError):
            logger.info('连接被对端重置: %s', peer)
        finally:
            self._connections.pop(writer, None)
            writer.close()
            with contextlib.suppress(Exception):
                await writer.wait_closed()
            logger.info('连接关闭: %s', peer)

    async def close(self):
        if self._server is None:
            return
        self._server.close()
        pending = list(self._connections.items())
        for writer, _ in pending:
            writer.close()
        await asyncio.gather(*(task for _, task in pending), return_exceptions=True)
        await self._server.wait_closed()
        self._server = None
        self.service.close()
        logger.info('查询服务器已停止')

    async def serve_until(self, stop):
        """启动服务，直到 stop（asyncio.Event）被设置"""
        await self.start()
        try:
            await stop.wait()
        finally:
            await self.close()


def _install_signal_handlers(loop, stop):
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, stop.set)
        except (NotImplementedError, RuntimeError, ValueError):
            # 非主线程或不支持信号的平台
            logger.debug('无法注册信号处理: %s', sig)


def serve(config):
    """
    运行查询服务，直到收到 SIGINT/SIGTERM

    参数:
        config: load_service_config 的返回值

    异常:
        BindError: 监听失败
        ConfigError: 配置无效
    """
    service = QueryService(config)
    host, port = config['listen']

    async def main():
        stop = asyncio.Event()
        _install_signal_handlers(asyncio.get_running_loop(), stop)
        server = QueryServer(service, host, port)
        await server.serve_until(stop)

    try:
        asyncio.run(main())
    except BindError:
        service.close()
        raise


class BackgroundServer:
    """
    在后台线程运行的查询服务器（集成测试用）

    用法:
        with BackgroundServer(service) as server:
            socket.create_connection(('127.0.0.1', server.port))
    """

    def __init__(self, service, host='127.0.0.1', port=0):
        self.server = QueryServer(service, host, port)
        self._thread = threading.Thread(target=self._run, name='query-server', daemon=True)
        self._ready = threading.Event()
        self._loop = None
        self._stop = None
        self._error = None

    @property
    def port(self):
        return self.server.port

    def _run(self):
        asyncio.run(self._main())

    async def _main(self):
        self._loop = asyncio.get_running_loop()
        self._stop = asyncio.Event()
        try:
            await self.server.start()
        except BindError as exc:
            self._error = exc
            self._ready.set()
            return
        self._ready.set()
        try:
            await self._stop.wait()
        finally:
            await self.server.close()

    def start(self, timeout=10.0):
        self._thread.start()
        self._ready.wait(timeout)
        if self._error is not None:
            raise self._error
        return self

    def stop(self, timeout=10.0):
        if self._loop is not None and self._stop is not None and self._thread.is_alive():
            self._loop.call_soon_threadsafe(self._stop.set)
        self._thread.join(timeout)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
