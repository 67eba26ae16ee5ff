'''
Trace sinks: where the interpreter's first-invocation records go.

A sink remembers every (application, signature) pair it has accepted and
silently drops repeats, so each construct is reported once per process no
matter how often it runs.  Accepted records are buffered and delivered when
the run ends (flush):

   MEMORY   records are only kept in the sink
   FILE     records are appended to a file, one JSON line each
   SERVICE  records are POSTed to an ingest service; if the service cannot
            be reached they are appended to a spill file instead, which can
            be ingested later, and the run still succeeds

@author: vulntrace developers
'''

import os
import threading
from collections import OrderedDict
from enum import Enum

from core.errors import SinkError, VulnTraceError
from core.models import parse_trace_line
from service.connection import get_connection
from utils import log
from utils.utils import sstr

# the builtin that statically instrumented code calls
TRACE_BUILTIN = '__trace'

DEFAULT_SPILL_FILE = 'vulntrace-spill.jsonl'


#==============================================================================
class TraceMode(Enum):
    OFF = 'OFF'
    DYNAMIC = 'DYNAMIC'


#==============================================================================
class SinkMode(Enum):
    MEMORY = 'MEMORY'
    FILE = 'FILE'
    SERVICE = 'SERVICE'


#==============================================================================
class TraceSink(object):
    '''
    Collects TraceRecords with first-invocation deduplication.  Build one
    with memory_sink(), file_sink() or service_sink().
    '''

    #==========================================================================
    def __init__(self, mode, path_s=None, url_s=None, spill_file_s=None,
                 connection=None):
        self.mode = mode
        self.path = path_s
        self.url = url_s
        self.spill_file = spill_file_s or DEFAULT_SPILL_FILE
        self.__connection = connection
        self.__lock = threading.Lock()
        self.__seen = set()
        self.__records = []  # everything accepted, in order
        self.__pending = []  # accepted but not yet delivered
        self.spilled_n = 0  # records written to the spill file

    records = property(lambda self: list(self.__records))

    #==========================================================================
    def emit(self, record):
        '''
        Accepts the given record unless one with the same application and
        signature was accepted before.  Returns True if it was accepted.
        '''
        with self.__lock:
            if record.key in self.__seen:
                return False
            self.__seen.add(record.key)
            self.__records.append(record)
            if self.mode != SinkMode.MEMORY:
                self.__pending.append(record)
            return True

    #==========================================================================
    def has_seen(self, app, signature):
        with self.__lock:
            return (app, signature) in self.__seen

    #==========================================================================
    def flush(self):
        ''' Delivers all buffered records (see the module comment). '''
        with self.__lock:
            pending, self.__pending = self.__pending, []
        if not pending:
            return
        if self.mode == SinkMode.FILE:
            self.__append(self.path, pending)
            log.debug('wrote ', len(pending), ' trace record(s) to ',
                      self.path)
        elif self.mode == SinkMode.SERVICE:
            self.__post(pending)

    #==========================================================================
    def __post(self, pending):
        by_app = OrderedDict()
        for record in pending:
            by_app.setdefault(record.app, []).append(record)
        for app, records in by_app.items():
            try:
                connection = self.__get_connection()
                connection.post_traces(str(app),
                                       [r.to_line() for r in records])
                log.debug('uploaded ', len(records), ' trace record(s) for ',
                          app)
            except VulnTraceError as e:
                log.warn('could not upload traces to ', self.url, ' (',
                         e.kind, ': ', e.message, '); spilling ',
                         len(records), ' record(s) to ', self.spill_file)
                self.__append(self.spill_file, records)
                self.spilled_n += len(records)

    #==========================================================================
    def __get_connection(self):
        if self.__connection is None:
            self.__connection = get_connection(self.url)
        return self.__connection

    #==========================================================================
    @staticmethod
    def __append(path_s, records):
        try:
            directory = os.path.dirname(os.path.abspath(path_s))
            os.makedirs(directory, exist_ok=True)
            with open(path_s, 'a', encoding='utf-8', newline='\n') as f:
                for record in records:
                    f.write(record.to_line() + '\n')
        except OSError as e:
            raise SinkError('cannot write traces to {0}: {1}'.format(
                path_s, sstr(e)))


#==============================================================================
def memory_sink():
    return TraceSink(SinkMode.MEMORY)


#==============================================================================
def file_sink(path_s):
    return TraceSink(SinkMode.FILE, path_s=path_s)


#==============================================================================
def service_sink(url_s, spill_file_s=None, connection=None):
    return TraceSink(SinkMode.SERVICE, url_s=url_s, spill_file_s=spill_file_s,
                     connection=connection)


#==============================================================================
def read_trace_file(path_s):
    '''
    Reads a trace (or spill) file.  Returns (records, errors) where errors
    lists (line number, message) for each line that could not be parsed.
    '''
    records, errors = [], []
    with open(path_s, 'r', encoding='utf-8') as f:
        for number, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                records.append(parse_trace_line(line))
            except VulnTraceError as e:
                errors.append((number, e.message))
    return records, errors
