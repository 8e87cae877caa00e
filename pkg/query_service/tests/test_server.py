import socket
from concurrent.futures import ThreadPoolExecutor
from unittest import mock

from django.test import SimpleTestCase

from query_service.exceptions import BindError
from query_service.server import BackgroundServer
from query_service import services
from query_service.services import LEDGER_FIELDS, QueryService, read_ledger, replay_audit

from .helpers import LineClient, Workspace, average_request

REQUESTS_PER_CLIENT = 1000


def run_client(port, prefix, count):
    client = LineClient(port)
    try:
        responses = [client.request(average_request(f'{prefix}-{i}')) for i in range(count)]
    finally:
        client.close()
    return responses


class QueryServerTests(SimpleTestCase):

    def setUp(self):
        self.ws = Workspace()
        self.addCleanup(self.ws.cleanup)

    def start_service(self, ws=None):
        service = QueryService.from_source((ws or self.ws).config_path)
        server = BackgroundServer(service).start()
        self.addCleanup(server.stop)
        return service, server

    def test_concurrent_clients_gap_free_ledger(self):
        service, server = self.start_service()
        with ThreadPoolExecutor(max_workers=2) as pool:
            futures = [pool.submit(run_client, server.port, name, REQUESTS_PER_CLIENT) for name in ('a', 'b')]
            results = [f.result() for f in futures]
        server.stop()

        for responses in results:
            self.assertEqual(len(responses), REQUESTS_PER_CLIENT)
            self.assertTrue(all('value' in r for r in responses))
        entries = read_ledger(self.ws.ledger_path)
        self.assertEqual([e['counter'] for e in entries], list(range(1, 2 * REQUESTS_PER_CLIENT + 1)))
        for entry in entries:
            self.assertEqual(set(entry), set(LEDGER_FIELDS))
        self.assertTrue(replay_audit(self.ws.ledger_path, service.database, service.registry).passed)

    def test_restart_resumes_counter(self):
        _, server = self.start_service()
        run_client(server.port, 'first', 3)
        server.stop()

        _, server = self.start_service()
        run_client(server.port, 'second', 2)
        server.stop()

        entries = read_ledger(self.ws.ledger_path)
        self.assertEqual([e['counter'] for e in entries], [1, 2, 3, 4, 5])
        self.assertEqual(entries[3]['request_id'], 'second-0')

    def test_malformed_line_keeps_connection(self):
        _, server = self.start_service()
        client = LineClient(server.port)
        self.addCleanup(client.close)

        response = client.send_raw(b'not json\n')
        self.assertEqual(response['error']['code'], 'malformed_request')
        response = client.send_raw(b'[1, 2]\n')
        self.assertEqual(response['error']['code'], 'malformed_request')
        response = client.request(average_request('after'))
        self.assertEqual(response['id'], 'after')
        self.assertIn('value', response)

    def test_error_responses_on_same_connection(self):
        _, server = self.start_service()
        client = LineClient(server.port)
        self.addCleanup(client.close)
        self.assertEqual(client.request(average_request('u', mechanism='nope'))['error']['code'], 'unknown_mechanism')
        self.assertEqual(
            client.request({'id': 'i', 'query': {'type': 'identity'}, 'mechanism': 'avg'})['error']['code'],
            'incompatible_query',
        )
        self.assertIn('value', client.request(average_request('ok')))

    def test_internal_failure_keeps_connection(self):
        _, server = self.start_service()
        client = LineClient(server.port)
        self.addCleanup(client.close)
        real_respond = services.respond
        calls = []

        def fail_first(*args):
            calls.append(args)
            if len(calls) == 1:
                raise TypeError('bad noise')
            return real_respond(*args)

        with mock.patch('query_service.services.respond', side_effect=fail_first):
            first = client.request(average_request('first'))
            second = client.request(average_request('second'))
        self.assertEqual(first, {'id': 'first', 'error': {'code': 'internal_error', 'message': '服务内部错误'}})
        self.assertEqual(second['id'], 'second')
        self.assertIn('value', second)
        self.assertEqual([e['request_id'] for e in read_ledger(self.ws.ledger_path)], ['second'])

    def test_fixed_seed_rerun_byte_identical(self):
        other = Workspace(seed=self.ws.config['seed'])
        self.addCleanup(other.cleanup)
        for ws in (self.ws, other):
            _, server = self.start_service(ws)
            run_client(server.port, 'r', 50)
            server.stop()
        self.assertEqual(self.ws.ledger_path.read_bytes(), other.ledger_path.read_bytes())

    def test_different_seed_differs(self):
        other = Workspace(seed=self.ws.config['seed'] + 1)
        self.addCleanup(other.cleanup)
        for ws in (self.ws, other):
            _, server = self.start_service(ws)
            run_client(server.port, 'r', 5)
            server.stop()
        self.assertNotEqual(self.ws.ledger_path.read_bytes(), other.ledger_path.read_bytes())

    def test_bind_error(self):
        blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.addCleanup(blocker.close)
        blocker.bind(('127.0.0.1', 0))
        blocker.listen()
        service = QueryService.from_source(self.ws.config_path)
        self.addCleanup(service.close)
        with self.assertRaises(BindError):
            BackgroundServer(service, port=blocker.getsockname()[1]).start()
