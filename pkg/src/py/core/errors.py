'''
This module is home to the VulnTraceError class and its subclasses, one for
every kind of failure that the toolchain reports.

Every error carries a machine-readable 'kind' from a closed set (see KINDS).
The command line tool prints that kind on stderr, and the ingest service
maps it onto an HTTP status.

@author: vulntrace developers
'''

from utils.utils import sstr


# =============================================================================
class VulnTraceError(Exception):
    '''
    Base class of all domain errors.  Subclasses fix the 'KIND' attribute.
    '''
    KIND = 'Error'

    # ==========================================================================
    def __init__(self, message_s):
        super(VulnTraceError, self).__init__(sstr(message_s))
        self.__message_s = sstr(message_s)

    # ==========================================================================
    def get_kind_s(self):
        ''' Returns the machine-readable kind of this error. '''
        return self.KIND

    kind = property(lambda self: self.KIND)
    message = property(lambda self: self.__message_s)

    # ==========================================================================
    def to_dict(self):
        ''' The JSON form used on stderr and in service error bodies. '''
        return {'error': self.KIND, 'message': self.__message_s}


# =============================================================================
class MalformedSignature(VulnTraceError):
    ''' A construct signature does not follow the canonical grammar. '''
    KIND = 'MalformedSignature'


# =============================================================================
class LexError(VulnTraceError):
    ''' MiniJay text could not be tokenized. '''
    KIND = 'LexError'

    def __init__(self, message_s, line_n, column_n, path_s=''):
        where = '{0}:{1}:{2}'.format(path_s or '<source>', line_n, column_n)
        super(LexError, self).__init__(where + ': ' + sstr(message_s))
        self.line = line_n
        self.column = column_n
        self.path = path_s


# =============================================================================
class ParseError(VulnTraceError):
    '''
    MiniJay source does not follow the grammar.  Carries the expected and
    found token and their position; 'revision' is filled in when the file
    came out of a revision store snapshot.
    '''
    KIND = 'ParseError'

    def __init__(self, expected_s, found_s, line_n, column_n, path_s='',
                 revision_s=None):
        self.expected = expected_s
        self.found = found_s
        self.line = line_n
        self.column = column_n
        self.path = path_s
        self.revision = revision_s
        super(ParseError, self).__init__(self.__describe())

    def __describe(self):
        where = '{0}:{1}:{2}'.format(self.path or '<source>', self.line,
                                     self.column)
        if self.revision:
            where = '{0} (revision {1})'.format(where, self.revision)
        return '{0}: expected {1}, found {2}'.format(where, self.expected,
                                                     self.found)

    def in_revision(self, revision_s):
        ''' Returns a copy of this error that names the given revision. '''
        return ParseError(self.expected, self.found, self.line, self.column,
                          self.path, revision_s)


# =============================================================================
class DuplicateConstruct(VulnTraceError):
    ''' Two constructs render to the same signature. '''
    KIND = 'DuplicateConstruct'


# =============================================================================
class LoadError(VulnTraceError):
    ''' A program bundle or library archive could not be loaded. '''
    KIND = 'LoadError'


# =============================================================================
class UnknownEntry(LoadError):
    ''' The requested entry function is not part of the application. '''
    KIND = 'UnknownEntry'


# =============================================================================
class MiniJayRuntimeError(VulnTraceError):
    '''
    A MiniJay program failed while running, e.g. on an undefined name.
    'stdout' holds what the program printed before it failed.
    '''
    KIND = 'RuntimeError'

    def __init__(self, message_s, stdout_s=''):
        super(MiniJayRuntimeError, self).__init__(message_s)
        self.stdout = stdout_s


# =============================================================================
class SinkError(VulnTraceError):
    ''' Trace records could not be delivered to their sink. '''
    KIND = 'SinkError'


# =============================================================================
class StoreFormatError(VulnTraceError):
    ''' A revision store directory is missing files or has malformed rows. '''
    KIND = 'StoreFormatError'


# =============================================================================
class NoPriorRevision(VulnTraceError):
    ''' The revision is the first one in the log. '''
    KIND = 'NoPriorRevision'


# =============================================================================
class UnknownRevision(VulnTraceError):
    ''' The revision is not in the store's log. '''
    KIND = 'UnknownRevision'


# =============================================================================
class DigestIoError(VulnTraceError):
    ''' An archive could not be read for digesting. '''
    KIND = 'IoError'


# =============================================================================
class RecordFormatError(VulnTraceError):
    ''' A vulnerability record, index row or change-list is malformed. '''
    KIND = 'RecordFormatError'


# =============================================================================
class MalformedRecord(VulnTraceError):
    ''' A single trace record could not be ingested. '''
    KIND = 'MalformedRecord'


# =============================================================================
class UnknownVuln(VulnTraceError):
    KIND = 'UnknownVuln'


# =============================================================================
class NoChangeList(VulnTraceError):
    KIND = 'NoChangeList'


# =============================================================================
class UnknownApp(VulnTraceError):
    KIND = 'UnknownApp'


# =============================================================================
class NotFound(VulnTraceError):
    ''' No ingest service endpoint has the requested path. '''
    KIND = 'NotFound'


# =============================================================================
class MethodNotAllowed(VulnTraceError):
    KIND = 'MethodNotAllowed'


# =============================================================================
class HttpError(VulnTraceError):
    ''' Any other service request that never reached an endpoint. '''
    KIND = 'HttpError'


# =============================================================================
class BindError(VulnTraceError):
    ''' The ingest service could not bind its address. '''
    KIND = 'BindError'


# =============================================================================
class StateCorrupt(VulnTraceError):
    ''' The engine snapshot file cannot be read back. '''
    KIND = 'StateCorrupt'


# =============================================================================
class ConfigError(VulnTraceError):
    ''' A configuration value is missing or invalid. '''
    KIND = 'ConfigError'


# =============================================================================
class RemoteError(VulnTraceError):
    '''
    An error reported by the ingest service.  Carries the kind and HTTP
    status the service answered with.
    '''

    def __init__(self, kind_s, message_s, status_n=None):
        super(RemoteError, self).__init__(message_s)
        self.KIND = sstr(kind_s)
        self.status = status_n


# the closed set of error kinds
KINDS = frozenset(cls.KIND for cls in (
    MalformedSignature, LexError, ParseError, DuplicateConstruct, LoadError,
    UnknownEntry, MiniJayRuntimeError, SinkError, StoreFormatError,
    NoPriorRevision, UnknownRevision, DigestIoError, RecordFormatError,
    MalformedRecord, UnknownVuln, NoChangeList, UnknownApp, NotFound,
    MethodNotAllowed, HttpError, BindError, StateCorrupt, ConfigError))
