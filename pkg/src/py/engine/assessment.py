'''
The assessment engine: stores the application construct sets, trace lists,
change-lists, declared archives, package index and vulnerability records,
and derives verdicts, coverage and archive views from them.

A vulnerability is highly relevant for an application when the application
was seen executing a construct that the vulnerability's security patch
changed, in a release that the patch applies to.

The engine is single-writer, multi-reader: every operation holds one
re-entrant lock, so readers always see a consistent state.  All writes are
idempotent upserts.

@author: vulntrace developers
'''

import threading
from dataclasses import dataclass, field
from typing import Optional, Tuple

from core.errors import (MalformedRecord, NoChangeList, UnknownApp,
                         UnknownVuln, VulnTraceError)
from core.models import (EvidenceItem, LibraryRelease, Verdict,
                         VerdictStatus, VulnerabilityRecord, is_digest,
                         max_version, parse_signature, parse_trace_line,
                         version_key)
from engine import state as snapshot
from identity.cpe import Affectedness, is_version_affected, max_end_excluding
from identity.index import lookup_digest
from utils import log

UNKNOWN_DIGEST = 'UNKNOWN_DIGEST'
UNDECLARED_BUT_TRACED = 'UNDECLARED_BUT_TRACED'

# most relevant first; the engine reports the most relevant candidate
__STATUS_RANK = {
    VerdictStatus.RELEVANT_TRACED: 0,
    VerdictStatus.AFFECTED_NOT_TRACED: 1,
    VerdictStatus.UNKNOWN_VERSION: 2,
    VerdictStatus.NOT_AFFECTED_VERSION: 3,
}


def status_rank(status):
    return __STATUS_RANK[status]


#==============================================================================
@dataclass(frozen=True)
class IngestResult:
    accepted: int  # well-formed records, including ignored duplicates
    applied: int  # records that changed the trace lists
    # (line number, message) for records that were rejected
    errors: Tuple[Tuple[int, str], ...] = ()

    def to_dict(self):
        return {'accepted': self.accepted, 'applied': self.applied,
                'errors': [{'line': n, 'message': m} for n, m in self.errors]}


#==============================================================================
@dataclass(frozen=True)
class CoverageReport:
    '''
    per_package: package -> (covered, total) over the application's own
                 constructs
    per_archive: digest -> (covered, total, known) where 'known' says
                 whether the archive's construct set was uploaded; without
                 it the total is the number of traced constructs
    '''
    app: object
    per_package: dict
    per_archive: dict
    covered: int
    total: int
    no_constructs: bool

    # the overall coverage ratio; 0 when there are no constructs
    ratio = property(lambda self: self.covered / self.total
                     if self.total else 0.0)

    def to_dict(self):
        return {'app': str(self.app),
                'perPackage': {p: {'covered': c, 'total': t}
                               for p, (c, t) in self.per_package.items()},
                'perArchive': {d: {'covered': c, 'total': t,
                                   'constructsKnown': k}
                               for d, (c, t, k) in self.per_archive.items()},
                'covered': self.covered, 'total': self.total,
                'ratio': self.ratio, 'noConstructs': self.no_constructs}


#==============================================================================
@dataclass(frozen=True)
class ArchiveView:
    digest: str
    release: Optional[LibraryRelease]  # index lookup result
    declared: bool
    traced: bool
    highlights: Tuple[str, ...] = ()
    declared_release: Optional[LibraryRelease] = None

    def to_dict(self):
        return {'digest': self.digest,
                'release': self.release.to_dict() if self.release else None,
                'declaredRelease': self.declared_release.to_dict()
                if self.declared_release else None,
                'declared': self.declared, 'traced': self.traced,
                'highlights': list(self.highlights)}


#==============================================================================
@dataclass
class _Candidate:
    release: LibraryRelease
    status: VerdictStatus
    evidence: frozenset = field(default_factory=frozenset)
    unresolved: bool = False


#==============================================================================
class AssessmentEngine(object):
    '''
    Wraps an EngineState.  If 'state_file' is given, save() writes the
    snapshot there.
    '''

    #==========================================================================
    def __init__(self, state=None, state_file_s=None):
        self.__state = state if state is not None else snapshot.EngineState()
        self.state_file = state_file_s
        self.__lock = threading.RLock()

    #==========================================================================
    @classmethod
    def open(cls, state_file_s):
        ''' Loads the engine from a snapshot file (missing means empty). '''
        return cls(snapshot.load_state(state_file_s), state_file_s)

    #==========================================================================
    def save(self):
        ''' Writes the snapshot file; returns its text. '''
        with self.__lock:
            if not self.state_file:
                return snapshot.dump_state(self.__state)
            text = snapshot.save_state(self.__state, self.state_file)
        log.debug('saved engine state to ', self.state_file)
        return text

    #==========================================================================
    def snapshot_text(self):
        with self.__lock:
            return snapshot.dump_state(self.__state)

    #==========================================================================
    def read(self, function):
        ''' Calls function(state) under the engine lock. '''
        with self.__lock:
            return function(self.__state)

    # ---- writes -------------------------------------------------------------

    def upsert_app_constructs(self, app, signatures):
        '''
        Replaces the application's construct set.  Signatures may be given
        as text; one malformed signature rejects the whole request.
        '''
        parsed = frozenset(s if not isinstance(s, str) else parse_signature(s)
                           for s in signatures)
        with self.__lock:
            self.__state.apps[app] = parsed
        log.debug('stored ', len(parsed), ' construct(s) for ', app)

    def upsert_archive_constructs(self, digest_s, signatures):
        ''' Replaces the construct set of the archive with the digest. '''
        if not is_digest(digest_s):
            raise MalformedRecord('bad archive digest: ' + str(digest_s))
        parsed = frozenset(s if not isinstance(s, str) else parse_signature(s)
                           for s in signatures)
        with self.__lock:
            self.__state.archives[digest_s] = parsed

    def upsert_change_list(self, change_list):
        with self.__lock:
            self.__state.change_lists[(change_list.library,
                                       change_list.vuln_id)] = change_list

    def upsert_declared_archives(self, app, releases):
        ''' Replaces the archives the application declares. '''
        releases = tuple(sorted(set(releases), key=lambda r: (
            r.digest, str(r.library), r.version)))
        with self.__lock:
            self.__state.declared[app] = releases

    def upsert_vuln(self, record):
        with self.__lock:
            self.__state.vulns[record.vuln_id] = record

    def upsert_vulns(self, records):
        with self.__lock:
            for record in records:
                self.__state.vulns[record.vuln_id] = record

    def upsert_index(self, releases):
        ''' Adds releases to the package index. '''
        with self.__lock:
            self.__state.index = self.__state.index.merged(releases)

    #==========================================================================
    def ingest_traces(self, records):
        '''
        Adds trace records.  Per (application, signature, archive digest)
        the record with the earliest firstSeen (then the smallest runId) is
        kept, so the result does not depend on arrival order and repeats
        change nothing.  A record never displaces one from another archive.
        Returns an IngestResult.
        '''
        applied = 0
        with self.__lock:
            for record in records:
                table = self.__state.traces.setdefault(record.app, {})
                by_digest = table.setdefault(record.signature, {})
                known = by_digest.get(record.digest)
                if known is None or record.precedence() < known.precedence():
                    by_digest[record.digest] = record
                    applied += 1
        return IngestResult(len(records), applied)

    def ingest_trace_lines(self, lines, app=None):
        '''
        Parses and ingests trace lines in the wire format.  Malformed lines
        are reported in the result; all others are still ingested.  If
        'app' is given, records of any other application are malformed.
        '''
        records, errors = [], []
        for number, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                record = parse_trace_line(line)
                if app is not None and record.app != app:
                    raise MalformedRecord('record belongs to ' +
                                          str(record.app))
                records.append(record)
            except VulnTraceError as e:
                errors.append((number, e.message))
        result = self.ingest_traces(records)
        if errors:
            log.warn('rejected ', len(errors), ' malformed trace record(s)')
        return IngestResult(result.accepted, result.applied, tuple(errors))

    # ---- reads --------------------------------------------------------------

    def __check_app(self, app):
        if app not in self.__state.known_apps():
            raise UnknownApp('unknown application ' + str(app))

    def known_apps(self):
        with self.__lock:
            return sorted(self.__state.known_apps())

    def vuln_ids(self):
        ''' Every vulnerability that has a change-list, in id order. '''
        with self.__lock:
            return sorted({v for _, v in self.__state.change_lists})

    #==========================================================================
    def assess(self, app, vuln_id_s):
        '''
        Computes the Verdict of one vulnerability for one application.
        Raises UnknownVuln if nothing is known about the vulnerability and
        NoChangeList if it has no change-list.
        '''
        with self.__lock:
            state = self.__state
            change_lists = sorted(
                (cl for (_, v), cl in state.change_lists.items()
                 if v == vuln_id_s), key=lambda cl: str(cl.library))
            if not change_lists:
                if vuln_id_s in state.vulns:
                    raise NoChangeList('no change-list for ' + vuln_id_s)
                raise UnknownVuln('unknown vulnerability ' + vuln_id_s)
            vuln = state.vulns.get(vuln_id_s) or \
                VulnerabilityRecord(vuln_id_s)
            verdicts = [self.__assess_library(app, vuln, cl)
                        for cl in change_lists]
        return min(verdicts, key=lambda v: status_rank(v.status))

    def assess_all(self, app):
        ''' Verdicts of every vulnerability with a change-list, by id. '''
        with self.__lock:
            return [self.assess(app, v) for v in self.vuln_ids()]

    def __assess_library(self, app, vuln, change_list):
        state = self.__state
        library = change_list.library
        traces = state.traces.get(app, {})
        tag_result = change_list.tag_result()

        # releases of the library the application declares or was seen using
        candidates = {}
        for release in state.declared.get(app, ()):
            if release.library == library:
                resolved = lookup_digest(state.index, release.digest)
                candidates[release.digest] = resolved if resolved and \
                    resolved.library == library else release
        for record in self.__records(traces):
            resolved = lookup_digest(state.index, record.digest)
            if resolved is not None and resolved.library == library:
                candidates.setdefault(record.digest, resolved)

        # traced constructs of the change-list, one pair per digest
        traced_entries = []
        for entry in change_list.entries:
            for record in traces.get(entry.signature, {}).values():
                traced_entries.append((entry, record))

        def evidence_for(release):
            items, unresolved = {}, False
            for entry, record in traced_entries:
                resolved = lookup_digest(state.index, record.digest)
                if resolved is None:
                    unresolved = True
                elif release is None or resolved.digest != release.digest:
                    continue
                known = items.get(entry.signature)
                if known is None or record.first_seen < known.first_seen:
                    items[entry.signature] = EvidenceItem(
                        entry.signature, entry.change_kind, record.first_seen)
            return frozenset(items.values()), unresolved and bool(items)

        results = []
        for release in candidates.values():
            affected = is_version_affected(vuln, release, tag_result)
            evidence, unresolved = evidence_for(release)
            results.append(_Candidate(release, self.__status(affected,
                                                             evidence),
                                      evidence, unresolved))
        # traces from archives the index does not know have no version, so
        # they count as evidence whatever the known releases say
        loose, unresolved = evidence_for(None)
        if loose or not results:
            status = VerdictStatus.RELEVANT_TRACED if loose \
                else VerdictStatus.UNKNOWN_VERSION
            results.append(_Candidate(None, status, loose, unresolved))

        best = min(results, key=lambda c: (
            status_rank(c.status), c.release is None,
            version_key(c.release.version) if c.release else (),
            c.release.digest if c.release else ''))
        evidence = best.evidence if best.status == \
            VerdictStatus.RELEVANT_TRACED else frozenset()

        latest = None
        if change_list.fixed_versions:
            latest = max_version(change_list.fixed_versions)
        if latest is None:
            latest = max_end_excluding(vuln, library)

        predate = None
        if evidence and change_list.fixed_at:
            predate = all(e.first_seen < change_list.fixed_at
                          for e in evidence)
        return Verdict(app, vuln.vuln_id, library, best.release, best.status,
                       evidence, latest, best.unresolved and bool(evidence),
                       predate)

    @staticmethod
    def __status(affected, evidence):
        if affected == Affectedness.NOT_AFFECTED:
            return VerdictStatus.NOT_AFFECTED_VERSION
        if evidence:
            return VerdictStatus.RELEVANT_TRACED
        if affected == Affectedness.AFFECTED:
            return VerdictStatus.AFFECTED_NOT_TRACED
        return VerdictStatus.UNKNOWN_VERSION

    @staticmethod
    def __records(traces):
        ''' Every TraceRecord of one application's trace table. '''
        for by_digest in traces.values():
            yield from by_digest.values()

    #==========================================================================
    def coverage(self, app):
        ''' The CoverageReport of the application.  Needs its S_a. '''
        with self.__lock:
            state = self.__state
            if app not in state.apps:
                raise UnknownApp('no constructs stored for ' + str(app))
            own = state.apps[app]
            traces = state.traces.get(app, {})
            per_package = {}
            for sig in own:
                covered, total = per_package.get(sig.package, (0, 0))
                per_package[sig.package] = (covered + (sig in traces),
                                            total + 1)

            digests = {r.digest for r in state.declared.get(app, ())} | \
                {r.digest for r in self.__records(traces) if r.digest}
            per_archive = {}
            for digest in digests:
                traced = {s for s, by_digest in traces.items()
                          if digest in by_digest}
                constructs = state.archives.get(digest)
                if constructs is not None:
                    per_archive[digest] = (len(traced & constructs),
                                           len(constructs), True)
                else:
                    per_archive[digest] = (len(traced), len(traced), False)
        covered = sum(c for c, _ in per_package.values())
        total = sum(t for _, t in per_package.values())
        return CoverageReport(app, per_package, per_archive, covered, total,
                              total == 0)

    #==========================================================================
    def archives_view(self, app):
        '''
        All archives the application declares or was seen loading, by
        digest, highlighting digests the index does not know and archives
        traced without being declared.
        '''
        with self.__lock:
            state = self.__state
            self.__check_app(app)
            declared = {r.digest: r for r in state.declared.get(app, ())}
            traced = {r.digest for r in self.__records(
                state.traces.get(app, {})) if r.digest}
            views = []
            for digest in sorted(set(declared) | traced):
                release = lookup_digest(state.index, digest)
                highlights = []
                if release is None:
                    highlights.append(UNKNOWN_DIGEST)
                if digest in traced and digest not in declared:
                    highlights.append(UNDECLARED_BUT_TRACED)
                views.append(ArchiveView(digest, release, digest in declared,
                                         digest in traced, tuple(highlights),
                                         declared.get(digest)))
        return views

    #==========================================================================
    def change_list_detail(self, app, verdict):
        '''
        The change-list behind a verdict with, per entry, whether and when
        the application was seen executing it.
        '''
        with self.__lock:
            change_list = self.__state.change_lists.get(
                (verdict.library, verdict.vuln_id))
            traces = self.__state.traces.get(app, {})
            if change_list is None:
                return []
            rows = []
            for entry in change_list.sorted_entries():
                records = traces.get(entry.signature, {}).values()
                record = min(records, key=lambda r: r.precedence()) \
                    if records else None
                row = entry.to_dict()
                row['traced'] = record is not None
                row['firstSeen'] = record.first_seen if record else None
                rows.append(row)
            return rows

    #==========================================================================
    def has_app(self, app):
        with self.__lock:
            return app in self.__state.known_apps()

    def check_app(self, app):
        with self.__lock:
            self.__check_app(app)

    index = property(lambda self: self.read(lambda s: s.index))
