'''
The engine's state and its snapshot file.

The snapshot is a single JSON document, written with sorted keys and every
list in a fixed order, so that equal states always produce byte-identical
files.  It is replaced atomically on save.

@author: vulntrace developers
'''

import json
import os
from dataclasses import dataclass, field

from core.errors import StateCorrupt, VulnTraceError
from core.models import (ChangeList, LibraryRelease, TraceRecord,
                         VulnerabilityRecord, parse_app_id, parse_signature,
                         render_signature)
from identity.index import PackageIndex
from utils import log
from utils.utils import load_string, persist_string, sstr

SNAPSHOT_FORMAT = 1


#==============================================================================
@dataclass
class EngineState:
    '''
    apps:         AppId -> frozenset of the application's own signatures
    traces:       AppId -> {signature: {digest: TraceRecord}}
    change_lists: (LibraryId, vulnId) -> ChangeList
    declared:     AppId -> tuple of declared LibraryReleases
    archives:     digest -> frozenset of the archive's signatures
    index:        the PackageIndex
    vulns:        vulnId -> VulnerabilityRecord
    '''
    apps: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    change_lists: dict = field(default_factory=dict)
    declared: dict = field(default_factory=dict)
    archives: dict = field(default_factory=dict)
    index: PackageIndex = field(default_factory=PackageIndex)
    vulns: dict = field(default_factory=dict)

    def known_apps(self):
        return set(self.apps) | set(self.traces) | set(self.declared)


#==============================================================================
def __sigs(signatures):
    return sorted(render_signature(s) for s in signatures)


#==============================================================================
def state_to_dict(state):
    return {
        'format': SNAPSHOT_FORMAT,
        'apps': {str(app): __sigs(sigs) for app, sigs in state.apps.items()},
        'traces': {str(app): [r.to_dict() for r in sorted(
            (r for by_digest in table.values() for r in by_digest.values()),
            key=lambda r: (r.signature.sort_key(), r.digest or ''))]
            for app, table in state.traces.items()},
        'changeLists': [state.change_lists[key].to_dict() for key in sorted(
            state.change_lists, key=lambda k: (str(k[0]), k[1]))],
        'declaredArchives': {str(app): [r.to_dict() for r in sorted(
            releases, key=lambda r: (r.digest, str(r.library), r.version))]
            for app, releases in state.declared.items()},
        'archives': {digest: __sigs(sigs)
                     for digest, sigs in state.archives.items()},
        'index': [r.to_dict() for r in state.index.releases()],
        'vulns': {vuln_id: record.to_dict()
                  for vuln_id, record in state.vulns.items()},
    }


#==============================================================================
def state_from_dict(d):
    ''' Rebuilds an EngineState.  Raises StateCorrupt on any problem. '''
    try:
        if d.get('format') != SNAPSHOT_FORMAT:
            raise StateCorrupt('unsupported snapshot format: ' +
                               sstr(d.get('format')))
        state = EngineState()
        for app_s, sigs in d.get('apps', {}).items():
            state.apps[parse_app_id(app_s)] = frozenset(
                parse_signature(s) for s in sigs)
        for app_s, records in d.get('traces', {}).items():
            app = parse_app_id(app_s)
            table = state.traces.setdefault(app, {})
            for record in records:
                record = TraceRecord.from_dict(record)
                table.setdefault(record.signature, {})[record.digest] = record
        for cl in d.get('changeLists', []):
            change_list = ChangeList.from_dict(cl)
            state.change_lists[(change_list.library,
                                change_list.vuln_id)] = change_list
        for app_s, releases in d.get('declaredArchives', {}).items():
            state.declared[parse_app_id(app_s)] = tuple(
                LibraryRelease.from_dict(r) for r in releases)
        for digest, sigs in d.get('archives', {}).items():
            state.archives[digest] = frozenset(parse_signature(s)
                                               for s in sigs)
        state.index = PackageIndex(LibraryRelease.from_dict(r)
                                   for r in d.get('index', []))
        for vuln_id, record in d.get('vulns', {}).items():
            state.vulns[vuln_id] = VulnerabilityRecord.from_dict(record)
        return state
    except StateCorrupt:
        raise
    except (VulnTraceError, KeyError, TypeError, ValueError,
            AttributeError) as e:
        raise StateCorrupt('snapshot is corrupt: ' + sstr(e))


#==============================================================================
def dump_state(state):
    ''' The snapshot text of the given state. '''
    return json.dumps(state_to_dict(state), sort_keys=True, indent=2,
                      ensure_ascii=False) + '\n'


#==============================================================================
def parse_state(text_s):
    try:
        data = json.loads(text_s)
    except ValueError as e:
        raise StateCorrupt('snapshot is not JSON: ' + sstr(e))
    if not isinstance(data, dict):
        raise StateCorrupt('snapshot must be a JSON object')
    return state_from_dict(data)


#==============================================================================
def load_state(path_s):
    ''' Loads a snapshot file; a missing or empty file is an empty state. '''
    if not os.path.exists(path_s):
        log.debug('no snapshot at ', path_s, '; starting empty')
        return EngineState()
    try:
        text = load_string(path_s)
    except (OSError, UnicodeDecodeError) as e:
        raise StateCorrupt('cannot read {0}: {1}'.format(path_s, sstr(e)))
    return parse_state(text) if text.strip() else EngineState()


#==============================================================================
def save_state(state, path_s):
    ''' Writes the snapshot atomically; returns the text written. '''
    text = dump_state(state)
    persist_string(text, path_s)
    return text
