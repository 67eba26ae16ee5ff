'''
The two places the command line tool can send uploads to and read views
from: an engine snapshot file on this machine (LocalBackend), or a running
ingest service (RemoteBackend).  Both answer with the same JSON-friendly
values, so a command prints the same output either way.

@author: vulntrace developers
'''

import json
from collections import OrderedDict

from core.errors import VulnTraceError
from core.models import parse_trace_line, render_signature
from engine.assessment import AssessmentEngine, IngestResult
from engine.report import render_report
from service.connection import get_connection
from utils import log


def _signature_texts(signatures):
    return sorted(s if isinstance(s, str) else render_signature(s)
                  for s in signatures)


#==============================================================================
class LocalBackend(object):
    ''' Runs every operation in-process against a snapshot file. '''

    def __init__(self, state_file_s):
        self.engine = AssessmentEngine.open(state_file_s)
        self.__dirty = False

    def __changed(self, result):
        self.__dirty = True
        return result

    def put_constructs(self, app, signatures):
        signatures = _signature_texts(signatures)
        self.engine.upsert_app_constructs(app, signatures)
        return self.__changed({'stored': len(set(signatures))})

    def put_archive_constructs(self, digest_s, signatures):
        signatures = _signature_texts(signatures)
        self.engine.upsert_archive_constructs(digest_s, signatures)
        return self.__changed({'stored': len(set(signatures))})

    def put_change_list(self, change_list):
        self.engine.upsert_change_list(change_list)
        return self.__changed({'stored': len(change_list.entries)})

    def put_archives(self, app, releases):
        self.engine.upsert_declared_archives(app, releases)
        return self.__changed({'stored': len(set(releases))})

    def put_vulns(self, records):
        self.engine.upsert_vulns(records)
        return self.__changed({'stored': len(records)})

    def put_index(self, releases):
        self.engine.upsert_index(releases)
        return self.__changed({'stored': len(set(releases))})

    def post_traces(self, lines):
        result = self.engine.ingest_trace_lines(lines)
        return self.__changed(result.to_dict())

    def assessment(self, app, vuln_id_s=None):
        if vuln_id_s:
            return self.engine.assess(app, vuln_id_s).to_dict()
        return [v.to_dict() for v in self.engine.assess_all(app)]

    def coverage(self, app):
        return self.engine.coverage(app).to_dict()

    def archives(self, app):
        return [v.to_dict() for v in self.engine.archives_view(app)]

    def report(self, app, format_s):
        return render_report(self.engine, app, format_s)

    def close(self):
        ''' Saves the snapshot if anything was uploaded. '''
        if self.__dirty:
            self.engine.save()
            self.__dirty = False


#==============================================================================
class RemoteBackend(object):
    ''' Forwards every operation to an ingest service. '''

    def __init__(self, url_s, timeout_secs=None):
        self.connection = get_connection(url_s, timeout_secs)

    def put_constructs(self, app, signatures):
        return self.connection.put_constructs(str(app),
                                              _signature_texts(signatures))

    def put_archive_constructs(self, digest_s, signatures):
        return self.connection.put_archive_constructs(
            digest_s, _signature_texts(signatures))

    def put_change_list(self, change_list):
        return self.connection.put_change_list(change_list)

    def put_archives(self, app, releases):
        return self.connection.put_archives(str(app), releases)

    def put_vulns(self, records):
        for record in records:
            self.connection.put_vuln(record)
        return {'stored': len(records)}

    def put_index(self, releases):
        return self.connection.put_index(releases)

    def post_traces(self, lines):
        '''
        Uploads trace lines, one request per application.  Lines that do
        not parse are reported without being sent.
        '''
        by_app, errors = OrderedDict(), []
        for number, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                record = parse_trace_line(line)
            except VulnTraceError as e:
                errors.append((number, e.message))
                continue
            by_app.setdefault(str(record.app), []).append(line.strip())
        accepted = applied = 0
        for app_s, app_lines in by_app.items():
            answer = self.connection.post_traces(app_s, app_lines)
            accepted += answer.get('accepted', 0)
            applied += answer.get('applied', 0)
            for error in answer.get('errors', []):
                log.warn('service rejected a trace of ', app_s, ': ',
                         error.get('message'))
        return IngestResult(accepted, applied, tuple(errors)).to_dict()

    def assessment(self, app, vuln_id_s=None):
        return self.connection.get_assessment(str(app), vuln_id_s)

    def coverage(self, app):
        return self.connection.get_coverage(str(app))

    def archives(self, app):
        return self.connection.get_archives(str(app))

    def report(self, app, format_s):
        answer = self.connection.get_report(str(app), format_s)
        if isinstance(answer, str):
            return answer
        return json.dumps(answer, sort_keys=True, indent=2,
                          ensure_ascii=False) + '\n'

    def close(self):
        pass


#==============================================================================
def open_backend(configuration):
    '''
    The backend the configuration names; check_sink() must have passed.
    '''
    if configuration.state_file_s:
        return LocalBackend(configuration.state_file_s)
    return RemoteBackend(configuration.service_url_s,
                         configuration.service_timeout_n)
