'''
The on-disk revision store: a deterministic model of a library's linear
version history.

    <store>/log.tsv        revId<TAB>ISO-8601 instant<TAB>message, oldest first
                           (tabs in messages written as \\t, backslashes as \\\\)
    <store>/tags.tsv       tagName<TAB>revId<TAB>version
    <store>/revisions/<revId>/**/*.mj
                           the full source snapshot of each revision

@author: vulntrace developers
'''

import os
import threading
from dataclasses import dataclass

from core.errors import (LexError, NoPriorRevision, ParseError,
                         StoreFormatError, UnknownRevision)
from minijay import extractor, parser
from utils import log
from utils.utils import is_instant, sstr

LOG_FILE = 'log.tsv'
TAGS_FILE = 'tags.tsv'
REVISIONS_DIR = 'revisions'

__UNESCAPES = {'t': '\t', '\\': '\\', 'n': '\n'}


#==============================================================================
@dataclass(frozen=True)
class LogEntry:
    revision_id: str
    timestamp: str
    message: str


#==============================================================================
@dataclass(frozen=True)
class Tag:
    name: str
    revision_id: str
    version: str


#==============================================================================
def unescape_message(text_s):
    out = []
    i = 0
    while i < len(text_s):
        c = text_s[i]
        if c == '\\' and i + 1 < len(text_s) and text_s[i + 1] in __UNESCAPES:
            out.append(__UNESCAPES[text_s[i + 1]])
            i += 2
        else:
            out.append(c)
            i += 1
    return ''.join(out)


#==============================================================================
def escape_message(text_s):
    return text_s.replace('\\', '\\\\').replace('\t', '\\t') \
        .replace('\n', '\\n')


#==============================================================================
class RevisionStore(object):
    '''
    A loaded, validated revision store.  Read-only after loading; parsed
    snapshots are cached, so one store can serve many diffs.
    '''

    #==========================================================================
    def __init__(self, store_id_s, path_s, log_entries, tags):
        self.store_id = store_id_s
        self.path = path_s
        self.log = tuple(log_entries)
        self.tags = tuple(tags)
        self.__index = {e.revision_id: i for i, e in enumerate(self.log)}
        self.__snapshots = {}
        self.__lock = threading.Lock()

    revision_ids = property(lambda self: [e.revision_id for e in self.log])

    #==========================================================================
    def has_revision(self, revision_s):
        return revision_s in self.__index

    #==========================================================================
    def index_of(self, revision_s):
        ''' The position of the revision in the log (oldest is 0). '''
        if revision_s not in self.__index:
            raise UnknownRevision("revision '{0}' is not in store '{1}'"
                                  .format(revision_s, self.store_id))
        return self.__index[revision_s]

    #==========================================================================
    def entry(self, revision_s):
        return self.log[self.index_of(revision_s)]

    #==========================================================================
    def snapshot_path(self, revision_s):
        self.index_of(revision_s)
        return os.path.join(self.path, REVISIONS_DIR, revision_s)

    #==========================================================================
    def snapshot_constructs(self, revision_s):
        '''
        Maps each signature in the given revision's snapshot to its
        ExtractedConstruct.  Parse errors name the file and the revision.
        '''
        with self.__lock:
            cached = self.__snapshots.get(revision_s)
        if cached is not None:
            return cached
        root = self.snapshot_path(revision_s)
        units = []
        for relative in extractor.list_sources(root):
            try:
                source = extractor.read_source(root, relative)
                units.append(parser.parse(source, relative))
            except ParseError as e:
                raise e.in_revision(revision_s)
            except LexError as e:
                raise ParseError('valid token', e.message, e.line, e.column,
                                 relative, revision_s)
        constructs = {c.signature: c for c in extractor.extract_units(units)}
        log.debug('revision ', revision_s, ' of ', self.store_id, ' has ',
                  len(constructs), ' construct(s)')
        with self.__lock:
            self.__snapshots[revision_s] = constructs
        return constructs


#==============================================================================
def __read_rows(path_s, name_s):
    full = os.path.join(path_s, name_s)
    if not os.path.isfile(full):
        raise StoreFormatError('missing {0} in store {1}'.format(name_s,
                                                                 path_s))
    with open(full, 'r', encoding='utf-8', newline='') as f:
        lines = f.read().split('\n')
    rows = []
    for number, line in enumerate(lines, 1):
        line = line.rstrip('\r')
        if not line.strip():
            continue
        fields = line.split('\t')
        if len(fields) != 3 or not fields[0] or not fields[1]:
            raise StoreFormatError('{0}:{1}: expected 3 tab-separated fields'
                                   .format(name_s, number))
        rows.append((number, fields))
    return rows


#==============================================================================
def load_revision_store(path_s):
    '''
    Loads and validates the revision store in the given directory.  Raises
    StoreFormatError for a missing file, a malformed row, a duplicate or
    unknown revision, or a logged revision without a snapshot.
    '''
    if not os.path.isdir(path_s):
        raise StoreFormatError('not a revision store: ' + sstr(path_s))
    store_id = os.path.basename(os.path.normpath(os.path.abspath(path_s)))

    entries = []
    seen = set()
    for number, (revision, timestamp, message) in \
            __read_rows(path_s, LOG_FILE):
        if revision in seen:
            raise StoreFormatError('{0}:{1}: duplicate revision {2}'.format(
                LOG_FILE, number, revision))
        if not is_instant(timestamp):
            raise StoreFormatError('{0}:{1}: bad timestamp {2}'.format(
                LOG_FILE, number, timestamp))
        seen.add(revision)
        entries.append(LogEntry(revision, timestamp,
                                unescape_message(message)))

    tags = []
    for number, (name, revision, version) in __read_rows(path_s, TAGS_FILE):
        if revision not in seen:
            raise StoreFormatError('{0}:{1}: tag {2} names unknown revision '
                                   '{3}'.format(TAGS_FILE, number, name,
                                                revision))
        if not version:
            raise StoreFormatError('{0}:{1}: tag {2} has no version'.format(
                TAGS_FILE, number, name))
        tags.append(Tag(name, revision, version))

    for entry in entries:
        snapshot = os.path.join(path_s, REVISIONS_DIR, entry.revision_id)
        if not os.path.isdir(snapshot) or not any(
                files for _, _, files in os.walk(snapshot)):
            raise StoreFormatError('revision {0} has no snapshot in {1}'
                                   .format(entry.revision_id, snapshot))

    log.debug('loaded store ', store_id, ': ', len(entries),
              ' revision(s), ', len(tags), ' tag(s)')
    return RevisionStore(store_id, path_s, entries, tags)


#==============================================================================
def prior_revision(store, revision_s):
    ''' The revision immediately before the given one in the log. '''
    index = store.index_of(revision_s)
    if index == 0:
        raise NoPriorRevision("revision '{0}' is the first in store '{1}'"
                              .format(revision_s, store.store_id))
    return store.log[index - 1].revision_id


#==============================================================================
def write_revision_store(path_s, log_entries, tags):
    '''
    Writes log.tsv and tags.tsv for the given entries and tags.  Snapshot
    directories are the caller's business.
    '''
    os.makedirs(os.path.join(path_s, REVISIONS_DIR), exist_ok=True)
    with open(os.path.join(path_s, LOG_FILE), 'w', encoding='utf-8',
              newline='\n') as f:
        for entry in log_entries:
            f.write('{0}\t{1}\t{2}\n'.format(entry.revision_id,
                                             entry.timestamp,
                                             escape_message(entry.message)))
    with open(os.path.join(path_s, TAGS_FILE), 'w', encoding='utf-8',
              newline='\n') as f:
        for tag in tags:
            f.write('{0}\t{1}\t{2}\n'.format(tag.name, tag.revision_id,
                                             tag.version))
