'''
This module contains all unittests for the ingest service, its HTTP client
and the command line backends.

@author: vulntrace developers
'''

import json
import socket
import threading
import time
from unittest.loader import TestLoader

import uvicorn
from fastapi.testclient import TestClient

import support
from core import errors
from core.errors import BindError, RemoteError, SinkError
from core.models import (ChangeEntry, ChangeKind, ChangeList, LibraryId,
                         LibraryRelease, TraceRecord, VulnerabilityRecord,
                         parse_app_id, parse_cpe, parse_signature)
from engine.assessment import AssessmentEngine
from service import connection as connections
from service.app import check_bind, create_app
from service.backend import LocalBackend, RemoteBackend
from service.connection import ServiceConnection

APP_PATH = '/apps/' + support.APP_ID
LIBRARY = LibraryId('acme', 'fileupload')
RELEASE_122 = LibraryRelease(LIBRARY, '1.2.2', support.DIGEST_122)
RELEASE_131 = LibraryRelease(LIBRARY, '1.3.1', support.DIGEST_131)


#==============================================================================
def load_tests(loader, tests, pattern): #pylint: disable=W0613
    ''' Returns all of the testcases in this module as a testsuite '''
    suite = TestLoader().loadTestsFromTestCase(TestEndpoints)
    for case in (TestErrors, TestConnection, TestBackends):
        suite.addTests(TestLoader().loadTestsFromTestCase(case))
    return suite


#==============================================================================
def trace_line(signature_s, digest_s=support.DIGEST_122,
               app_s=support.APP_ID, first_seen_s=support.CLOCK):
    return TraceRecord(parse_app_id(app_s), parse_signature(signature_s),
                       digest_s, first_seen_s, 'run-1').to_line()


#==============================================================================
def case_study_change_list():
    return ChangeList(LIBRARY, support.VULN_ID, 'r4', [ChangeEntry(
        parse_signature(support.FIX_SIGNATURE), ChangeKind.MOD)],
        ['1.2.2'], ['1.3.1'], '2014-02-06T10:15:00Z')


#==============================================================================
def case_study_vuln():
    return VulnerabilityRecord(support.VULN_ID, affected_cpes=(
        parse_cpe('cpe:/a:acme:fileupload', '1.3.1'),))


#==============================================================================
def free_port():
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind(('127.0.0.1', 0))
        return s.getsockname()[1]


#==============================================================================
class TestEndpoints(support.ScratchTestCase):

    # --------------------------------------------------------------------------
    def setUp(self):
        super(TestEndpoints, self).setUp()
        self.engine = AssessmentEngine()
        self.client = TestClient(create_app(self.engine, autosave=False))

    # --------------------------------------------------------------------------
    def __upload_case_study(self):
        client = self.client
        self.assertEqual({'stored': 2}, client.put(
            APP_PATH + '/constructs',
            json=[support.ENTRY, 'com.acme.testapp.UploadServlet.init/0',
                  support.ENTRY]).json())
        self.assertEqual({'stored': 1}, client.put(
            APP_PATH + '/archives', json=[RELEASE_122.to_dict()]).json())
        self.assertEqual({'stored': 2}, client.put(
            '/index', json=[RELEASE_122.to_dict(),
                            RELEASE_131.to_dict()]).json())
        self.assertEqual({'stored': 1}, client.put(
            '/vulns/' + support.VULN_ID,
            json=case_study_vuln().to_dict()).json())
        body = case_study_change_list().to_dict()
        del body['library'], body['vulnId']
        self.assertEqual({'stored': 1}, client.put(
            '/libs/acme:fileupload/vulns/{0}/changelist'.format(
                support.VULN_ID), json=body).json())
        response = client.post(APP_PATH + '/traces', content='\n'.join([
            trace_line(support.ENTRY, None),
            trace_line(support.FIX_SIGNATURE), '']))
        self.assertEqual(200, response.status_code)
        self.assertEqual({'accepted': 2, 'applied': 2, 'errors': []},
                         response.json())

    # --------------------------------------------------------------------------
    def test_case_study_assessment(self):
        self.__upload_case_study()
        verdict = self.client.get(APP_PATH + '/assessment/' +
                                  support.VULN_ID).json()
        self.assertEqual('RELEVANT_TRACED', verdict['status'])
        self.assertEqual([{'sig': support.FIX_SIGNATURE, 'change': 'MOD',
                           'firstSeen': support.CLOCK}], verdict['evidence'])
        self.assertEqual('1.3.1', verdict['latestNonVulnerable'])
        self.assertEqual(RELEASE_122.to_dict(), verdict['libraryInUse'])
        self.assertEqual([verdict], self.client.get(
            APP_PATH + '/assessment').json())

    # --------------------------------------------------------------------------
    def test_views(self):
        self.__upload_case_study()
        coverage = self.client.get(APP_PATH + '/coverage').json()
        self.assertEqual((1, 2), (coverage['covered'], coverage['total']))
        self.assertEqual(
            {'covered': 1, 'total': 1, 'constructsKnown': False},
            coverage['perArchive'][support.DIGEST_122])
        archives = self.client.get(APP_PATH + '/archives').json()
        self.assertEqual([support.DIGEST_122], [a['digest'] for a in archives])
        self.assertEqual([], archives[0]['highlights'])

    # --------------------------------------------------------------------------
    def test_archive_constructs(self):
        self.__upload_case_study()
        self.assertEqual({'stored': 5}, self.client.put(
            '/archives/{0}/constructs'.format(support.DIGEST_122),
            json=support.TESTAPP_TRACED[:5]).json())
        coverage = self.client.get(APP_PATH + '/coverage').json()
        self.assertEqual(
            {'covered': 1, 'total': 5, 'constructsKnown': True},
            coverage['perArchive'][support.DIGEST_122])

    # --------------------------------------------------------------------------
    def test_report(self):
        self.__upload_case_study()
        response = self.client.get(APP_PATH + '/report')
        self.assertEqual('application/json',
                         response.headers['content-type'].split(';')[0])
        self.assertEqual(support.APP_ID, json.loads(response.text)['app'])
        response = self.client.get(APP_PATH + '/report',
                                   params={'format': 'html'})
        self.assertTrue(response.headers['content-type'].startswith(
            'text/html'))
        self.assertIn('RELEVANT_TRACED', response.text)

    # --------------------------------------------------------------------------
    def test_repeated_uploads_change_nothing(self):
        self.__upload_case_study()
        before = self.engine.snapshot_text()
        response = self.client.post(APP_PATH + '/traces',
                                    content=trace_line(support.FIX_SIGNATURE))
        self.assertEqual({'accepted': 1, 'applied': 0, 'errors': []},
                         response.json())
        self.assertEqual(before, self.engine.snapshot_text())

    # --------------------------------------------------------------------------
    def test_autosave(self):
        path = self.path('state.json')
        engine = AssessmentEngine(state_file_s=path)
        client = TestClient(create_app(engine))
        client.put(APP_PATH + '/constructs', json=[support.ENTRY])
        self.assertEqual(engine.snapshot_text(),
                         AssessmentEngine.open(path).snapshot_text())


#==============================================================================
class TestErrors(support.ScratchTestCase):

    # --------------------------------------------------------------------------
    def setUp(self):
        super(TestErrors, self).setUp()
        self.engine = AssessmentEngine()
        self.client = TestClient(create_app(self.engine, autosave=False))

    # --------------------------------------------------------------------------
    def assertError(self, status_n, kind_s, response):
        self.assertEqual(status_n, response.status_code, response.text)
        self.assertEqual(kind_s, response.json()['error'])
        self.assertTrue(response.json()['message'])

    # --------------------------------------------------------------------------
    def test_malformed_uploads(self):
        client = self.client
        self.assertError(400, 'MalformedSignature', client.put(
            APP_PATH + '/constructs', json=['not a signature']))
        self.assertError(400, 'RecordFormatError', client.put(
            '/apps/no-app-id/constructs', json=[support.ENTRY]))
        self.assertError(400, 'MalformedRecord', client.put(
            APP_PATH + '/constructs', json={'signatures': []}))
        self.assertError(400, 'MalformedRecord', client.put(
            '/archives/abc/constructs', json=[support.ENTRY]))
        self.assertError(400, 'MalformedRecord', client.put(
            '/index', json=[dict(RELEASE_122.to_dict(), extra=1)]))
        self.assertError(400, 'RecordFormatError', client.put(
            '/index', json=[dict(RELEASE_122.to_dict(), digest='xyz')]))
        self.assertFalse(self.engine.has_app(parse_app_id(support.APP_ID)))

    # --------------------------------------------------------------------------
    def test_change_list_must_match_the_url(self):
        body = case_study_change_list().to_dict()
        self.assertError(400, 'RecordFormatError', self.client.put(
            '/libs/acme:other/vulns/{0}/changelist'.format(support.VULN_ID),
            json=body))
        self.assertError(400, 'RecordFormatError', self.client.put(
            '/libs/acme:fileupload/vulns/VULN-1/changelist', json=body))
        bad_kind = dict(body, entries=[{'sig': support.FIX_SIGNATURE,
                                        'change': 'CHANGED'}])
        self.assertError(400, 'RecordFormatError', self.client.put(
            '/libs/acme:fileupload/vulns/{0}/changelist'.format(
                support.VULN_ID), json=bad_kind))
        self.assertEqual([], self.engine.vuln_ids())

    # --------------------------------------------------------------------------
    def test_rejected_trace_lines(self):
        response = self.client.post(APP_PATH + '/traces', content='\n'.join([
            trace_line(support.ENTRY, None), 'garbage',
            trace_line(support.ENTRY, None, 'x:y:1')]))
        self.assertEqual(400, response.status_code)
        body = response.json()
        self.assertEqual((1, 1), (body['accepted'], body['applied']))
        self.assertEqual([2, 3], [e['line'] for e in body['errors']])

    # --------------------------------------------------------------------------
    def test_trace_upload_must_be_utf8(self):
        content = trace_line(support.ENTRY, None).encode('utf-8') + \
            b'\n{"app": "\xff"}'
        self.assertError(400, 'MalformedRecord', self.client.post(
            APP_PATH + '/traces', content=content))
        self.assertFalse(self.engine.has_app(parse_app_id(support.APP_ID)))

    # --------------------------------------------------------------------------
    def test_routing_errors(self):
        missing = self.client.get('/nope')
        self.assertError(404, 'NotFound', missing)
        wrong = self.client.delete(APP_PATH + '/constructs')
        self.assertError(405, 'MethodNotAllowed', wrong)
        self.assertEqual('PUT', wrong.headers['allow'])
        self.assertError(405, 'MethodNotAllowed', self.client.get(
            APP_PATH + '/traces'))
        for response in (missing, wrong):
            self.assertIn(response.json()['error'], errors.KINDS)

    # --------------------------------------------------------------------------
    def test_unknown_things(self):
        client = self.client
        self.assertError(404, 'UnknownApp', client.get(APP_PATH +
                                                       '/coverage'))
        self.assertError(404, 'UnknownApp', client.get(APP_PATH +
                                                       '/archives'))
        self.assertError(404, 'UnknownApp', client.get(APP_PATH + '/report'))
        client.put(APP_PATH + '/constructs', json=[support.ENTRY])
        self.assertError(404, 'UnknownVuln', client.get(
            APP_PATH + '/assessment/VULN-404'))
        client.put('/vulns/VULN-404', json={'description': 'no patch yet'})
        self.assertError(409, 'NoChangeList', client.get(
            APP_PATH + '/assessment/VULN-404'))
        self.assertError(400, 'ConfigError', client.get(
            APP_PATH + '/report', params={'format': 'pdf'}))

    # --------------------------------------------------------------------------
    def test_vuln_id_must_match_the_url(self):
        self.assertError(400, 'RecordFormatError', self.client.put(
            '/vulns/VULN-1', json={'vulnId': 'VULN-2'}))
        self.assertError(400, 'RecordFormatError', self.client.put(
            '/vulns/not-an-id', json={}))


#==============================================================================
class TestConnection(support.ScratchTestCase):

    # --------------------------------------------------------------------------
    def test_unreachable_service(self):
        port = free_port()
        connection = ServiceConnection('http://127.0.0.1:{0}/'.format(port),
                                       2)
        self.assertEqual('http://127.0.0.1:{0}'.format(port),
                         connection.base_url)
        with self.assertRaises(SinkError) as context:
            connection.get_coverage(support.APP_ID)
        self.assertEqual('SinkError', context.exception.kind)
        self.assertEqual(None, connection.last_status_code)

    # --------------------------------------------------------------------------
    def test_connections_are_cached(self):
        first = connections.get_connection('http://127.0.0.1:1/')
        self.assertIs(first, connections.get_connection('http://127.0.0.1:1'))
        self.assertIsNot(first, connections.get_connection(
            'http://127.0.0.1:1', 5))

    # --------------------------------------------------------------------------
    def test_app_path_is_quoted(self):
        self.assertEqual('/apps/com.acme%3Atestapp%3A0.1',
                         ServiceConnection.app_path(support.APP_ID))

    # --------------------------------------------------------------------------
    def test_check_bind(self):
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
            s.bind(('127.0.0.1', 0))
            s.listen(1)
            self.assertRaises(BindError, check_bind, '127.0.0.1',
                              s.getsockname()[1])


#==============================================================================
class TestBackends(support.ScratchTestCase):
    '''
    Drives the same uploads through a LocalBackend and, over HTTP, through
    a RemoteBackend talking to a live service; both must answer alike.
    '''

    # --------------------------------------------------------------------------
    def setUp(self):
        super(TestBackends, self).setUp()
        self.port = free_port()
        self.engine = AssessmentEngine()
        config = uvicorn.Config(create_app(self.engine, autosave=False),
                                host='127.0.0.1', port=self.port,
                                log_level='error')
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)
        self.thread.start()
        deadline = time.time() + 10
        while not self.server.started and time.time() < deadline:
            time.sleep(0.05)
        self.assertTrue(self.server.started)

    # --------------------------------------------------------------------------
    def tearDown(self):
        self.server.should_exit = True
        self.thread.join(10)
        super(TestBackends, self).tearDown()

    # --------------------------------------------------------------------------
    @staticmethod
    def __upload(backend):
        app = parse_app_id(support.APP_ID)
        backend.put_constructs(app, [parse_signature(support.ENTRY)])
        backend.put_archives(app, [RELEASE_122])
        backend.put_index([RELEASE_122, RELEASE_131])
        backend.put_vulns([case_study_vuln()])
        backend.put_change_list(case_study_change_list())
        return backend.post_traces([
            trace_line(support.ENTRY, None), 'garbage',
            trace_line(support.FIX_SIGNATURE)])

    # --------------------------------------------------------------------------
    def test_local_and_remote_agree(self):
        app = parse_app_id(support.APP_ID)
        local = LocalBackend(self.path('state.json'))
        remote = RemoteBackend('http://127.0.0.1:{0}'.format(self.port), 5)
        self.assertEqual(self.__upload(local), self.__upload(remote))
        local.close()
        self.assertEqual(local.assessment(app), remote.assessment(app))
        self.assertEqual(local.assessment(app, support.VULN_ID),
                         remote.assessment(app, support.VULN_ID))
        self.assertEqual(local.coverage(app), remote.coverage(app))
        self.assertEqual(local.archives(app), remote.archives(app))
        for format_s in ('json', 'html'):
            self.assertEqual(local.report(app, format_s),
                             remote.report(app, format_s))
        self.assertEqual(self.engine.snapshot_text(),
                         AssessmentEngine.open(
                             self.path('state.json')).snapshot_text())

    # --------------------------------------------------------------------------
    def test_remote_errors_carry_the_kind(self):
        remote = RemoteBackend('http://127.0.0.1:{0}'.format(self.port), 5)
        with self.assertRaises(RemoteError) as context:
            remote.coverage(parse_app_id(support.APP_ID))
        self.assertEqual('UnknownApp', context.exception.kind)
        self.assertEqual(404, context.exception.status)
