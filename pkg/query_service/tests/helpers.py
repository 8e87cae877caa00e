import json
import socket
import tempfile
from pathlib import Path

from query_service.server import encode_line

MECHANISMS = {
    'avg': {'query': {'type': 'average'}, 'budget': {'kind': 'bounded', 'support': [0, 1]}},
    'id': {'query': {'type': 'identity'}, 'budget': {'kind': 'bounded', 'support': [0, 1]}},
    'gauss': {'query': {'type': 'average'}, 'budget': {'kind': 'theta', 'theta': 1.0}},
}


class Workspace:
    """临时目录中的数据库与服务配置"""

    def __init__(self, rows='0.2\n0.9\n', mechanisms=None, seed=7):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)
        self.write('db.csv', rows)
        self.config = {
            'listen': '127.0.0.1:0',
            'database': {'path': 'db.csv', 'domain': [0, 1]},
            'seed': seed,
            'ledger': 'ledger.ndjson',
            'mechanisms': mechanisms or MECHANISMS,
        }
        self.config_path = self.write('service.json', json.dumps(self.config))

    def write(self, name, text):
        path = self.root / name
        path.write_text(text, encoding='utf-8')
        return path

    @property
    def ledger_path(self):
        return self.root / 'ledger.ndjson'

    def cleanup(self):
        self._tmp.cleanup()


def average_request(request_id, mechanism='avg'):
    return {'id': request_id, 'query': {'type': 'average'}, 'mechanism': mechanism}


class LineClient:
    """按行收发 JSON 的阻塞客户端"""

    def __init__(self, port):
        self.sock = socket.create_connection(('127.0.0.1', port), timeout=10)
        self.stream = self.sock.makefile('rwb')

    def send_raw(self, data):
        self.stream.write(data)
        self.stream.flush()
        return json.loads(self.stream.readline())

    def request(self, payload):
        return self.send_raw(encode_line(payload))

    def close(self):
        self.stream.close()
        self.sock.close()
