'''
HTTP client for the vulntrace ingest service.

Handles all requests to a running service with JSON bodies, timeouts and
error mapping.  Used by the SERVICE trace sink and by the command line tool
when it is configured with a service URL instead of a state file.

@author: vulntrace developers
'''

import json
import time
import urllib.error
import urllib.parse
import urllib.request

from core.errors import RemoteError, SinkError
from utils import log
from utils.utils import sstr


class ServiceConnection(object):
    '''
    Manages HTTP requests to one ingest service.
    '''

    # User agent string
    USER_AGENT = "vulntrace/1.0"

    # Timeout for requests (in seconds)
    TIMEOUT_SECS = 30

    def __init__(self, base_url_s, timeout_secs=None):
        '''Initialize the connection for the given service base URL'''
        self.base_url = base_url_s.rstrip('/')
        self.timeout_secs = timeout_secs or ServiceConnection.TIMEOUT_SECS
        self.last_request_url = None
        self.last_status_code = None
        self.last_elapsed_ms = 0
        self.__opener = urllib.request.build_opener()
        self.__opener.addheaders = [
            ('User-Agent', ServiceConnection.USER_AGENT),
            ('Accept', 'application/json, text/html;q=0.9'),
        ]

    def request(self, method_s, path_s, body=None, content_type_s=None,
                accept_statuses=(200,)):
        '''
        Sends one request and returns (status, decoded body).  JSON bodies
        are decoded; anything else is returned as text.

        Raises SinkError when the service cannot be reached, and RemoteError
        (carrying the service's error kind) for any status not listed in
        'accept_statuses'.
        '''
        url = self.base_url + path_s
        data = None
        if body is not None:
            if content_type_s is None:
                data = json.dumps(body).encode('utf-8')
                content_type_s = 'application/json'
            else:
                data = sstr(body).encode('utf-8')
        request = urllib.request.Request(url, data=data, method=method_s)
        if content_type_s:
            request.add_header('Content-Type', content_type_s)

        self.last_request_url = url
        self.last_status_code = None
        start_time = time.time()
        try:
            response = self.__opener.open(request, timeout=self.timeout_secs)
            status, raw, headers = response.getcode(), response.read(), \
                response.info()
        except urllib.error.HTTPError as e:
            status, raw, headers = e.code, e.read(), e.headers
        except (urllib.error.URLError, OSError) as e:
            reason = getattr(e, 'reason', e)
            raise SinkError('service {0} unreachable: {1}'.format(
                self.base_url, sstr(reason)))
        finally:
            self.last_elapsed_ms = (time.time() - start_time) * 1000.0

        self.last_status_code = status
        text = raw.decode('utf-8', errors='replace')
        content_type = headers.get('Content-Type', '') if headers else ''
        decoded = text
        if 'json' in content_type:
            try:
                decoded = json.loads(text)
            except ValueError:
                decoded = text
        log.debug(method_s, ' ', url, ' -> ', status, ' (',
                  int(self.last_elapsed_ms), ' ms)')

        if status not in accept_statuses:
            if isinstance(decoded, dict) and 'error' in decoded:
                raise RemoteError(decoded['error'],
                                  decoded.get('message', ''), status)
            raise RemoteError('HttpError', 'HTTP {0} from {1}'.format(
                status, url), status)
        return status, decoded

    # ---- endpoints ----------------------------------------------------------

    @staticmethod
    def app_path(app_s):
        return '/apps/' + urllib.parse.quote(sstr(app_s), safe='')

    def put_constructs(self, app_s, signatures):
        return self.request('PUT', self.app_path(app_s) + '/constructs',
                            list(signatures))[1]

    def post_traces(self, app_s, lines):
        '''
        Uploads trace lines.  A 400 answer (some lines rejected, the others
        applied) is returned like a success; its body lists the errors.
        '''
        return self.request('POST', self.app_path(app_s) + '/traces',
                            '\n'.join(lines) + '\n', 'text/plain',
                            accept_statuses=(200, 400))[1]

    def put_change_list(self, change_list):
        path = '/libs/{0}/vulns/{1}/changelist'.format(
            urllib.parse.quote(str(change_list.library), safe=':'),
            urllib.parse.quote(change_list.vuln_id, safe=''))
        return self.request('PUT', path, change_list.to_dict())[1]

    def put_archives(self, app_s, releases):
        return self.request('PUT', self.app_path(app_s) + '/archives',
                            [r.to_dict() for r in releases])[1]

    def put_archive_constructs(self, digest_s, signatures):
        return self.request('PUT', '/archives/{0}/constructs'.format(digest_s),
                            list(signatures))[1]

    def put_vuln(self, record):
        return self.request('PUT', '/vulns/' + urllib.parse.quote(
            record.vuln_id, safe=''), record.to_dict())[1]

    def put_index(self, releases):
        return self.request('PUT', '/index',
                            [r.to_dict() for r in releases])[1]

    def get_assessment(self, app_s, vuln_id_s=None):
        path = self.app_path(app_s) + '/assessment'
        if vuln_id_s:
            path += '/' + urllib.parse.quote(vuln_id_s, safe='')
        return self.request('GET', path)[1]

    def get_coverage(self, app_s):
        return self.request('GET', self.app_path(app_s) + '/coverage')[1]

    def get_archives(self, app_s):
        return self.request('GET', self.app_path(app_s) + '/archives')[1]

    def get_report(self, app_s, format_s='json'):
        return self.request('GET', '{0}/report?format={1}'.format(
            self.app_path(app_s), urllib.parse.quote(format_s)))[1]


# one connection per service URL
_connections = {}


def get_connection(base_url_s, timeout_secs=None):
    '''
    Get or create the connection for the given service URL.
    '''
    key = (base_url_s.rstrip('/'), timeout_secs)
    if key not in _connections:
        _connections[key] = ServiceConnection(base_url_s, timeout_secs)
    return _connections[key]
