import json

from django.test import SimpleTestCase, override_settings

from query_service.api_views import reset_service

from .helpers import Workspace, average_request


class QueryApiTests(SimpleTestCase):

    def setUp(self):
        self.ws = Workspace()
        self.addCleanup(self.ws.cleanup)
        settings_override = override_settings(QUERY_SERVICE_CONFIG=str(self.ws.config_path))
        settings_override.enable()
        self.addCleanup(settings_override.disable)
        reset_service()
        self.addCleanup(reset_service)

    def post(self, payload):
        return self.client.post('/api/query/', data=json.dumps(payload), content_type='application/json')

    def test_query_success(self):
        response = self.post(average_request('h1'))
        self.assertEqual(response.status_code, 200)
        body = response.json()
        self.assertEqual(body['status'], 'success')
        self.assertEqual(body['data']['id'], 'h1')
        self.assertTrue(0.55 <= body['data']['value'][0] <= 1.55)

    def test_query_error(self):
        response = self.post(average_request('h2', mechanism='nope'))
        self.assertEqual(response.status_code, 400)
        body = response.json()
        self.assertEqual(body['status'], 'error')
        self.assertEqual(body['errors']['error']['code'], 'unknown_mechanism')

    def test_mechanisms(self):
        response = self.client.get('/api/mechanisms/')
        self.assertEqual(response.status_code, 200)
        data = response.json()['data']
        self.assertEqual(data['total'], 3)
        self.assertEqual([m['mechanism_id'] for m in data['mechanisms']], ['avg', 'gauss', 'id'])

    def test_http_responses_share_ledger(self):
        self.post(average_request('a'))
        self.post(average_request('b'))
        lines = self.ws.ledger_path.read_text(encoding='utf-8').splitlines()
        self.assertEqual([json.loads(line)['counter'] for line in lines], [1, 2])


class UnconfiguredApiTests(SimpleTestCase):

    @override_settings(QUERY_SERVICE_CONFIG='')
    def test_service_unavailable(self):
        reset_service()
        response = self.client.get('/api/mechanisms/')
        self.assertEqual(response.status_code, 503)
        self.assertEqual(response.json()['status'], 'error')
