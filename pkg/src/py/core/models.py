'''
This module defines the 'model' classes shared by every part of the
toolchain: construct signatures, change-lists, trace records, application
and library identifiers, vulnerability records, CPE names and verdicts.

All of them are immutable values.  Each knows how to render itself into the
JSON-friendly dict form used by the snapshot file, the ingest service and
the command line tool (to_dict), and how to read itself back (from_dict).

@author: vulntrace developers
'''

import json
import re
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional, Tuple

from core.errors import MalformedSignature, MalformedRecord, RecordFormatError
from utils.utils import is_instant, is_string, sstr

# one segment of a qualified name
SEGMENT_RE = re.compile(r'^[A-Za-z_][A-Za-z0-9_]*$')

# the canonical signature grammar; arity carries no leading zeros
SIGNATURE_RE = re.compile(
    r'^([A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)/(0|[1-9][0-9]*)$')

# lowercase hex of a SHA-1 or SHA-256 digest
DIGEST_RE = re.compile(r'^(?:[0-9a-f]{40}|[0-9a-f]{64})$')

VULN_ID_RE = re.compile(r'^(?:CVE-\d{4}-\d{4,}|VULN-\w+)$')

CONSTRUCTOR_NAME = 'init'


#==============================================================================
class ConstructKind(Enum):
    FUNC = 'FUNC'
    METH = 'METH'
    CONS = 'CONS'


#==============================================================================
class ChangeKind(Enum):
    ADD = 'ADD'
    DEL = 'DEL'
    MOD = 'MOD'


#==============================================================================
class VerdictStatus(Enum):
    RELEVANT_TRACED = 'RELEVANT_TRACED'
    AFFECTED_NOT_TRACED = 'AFFECTED_NOT_TRACED'
    NOT_AFFECTED_VERSION = 'NOT_AFFECTED_VERSION'
    UNKNOWN_VERSION = 'UNKNOWN_VERSION'


#==============================================================================
class Ordering(IntEnum):
    LT = -1
    EQ = 0
    GT = 1


#==============================================================================
def is_package_segment(segment_s):
    ''' Package segments start with a lowercase letter or an underscore. '''
    return bool(SEGMENT_RE.match(segment_s)) and \
        (segment_s[0] == '_' or segment_s[0].islower())


#==============================================================================
def is_class_segment(segment_s):
    ''' Class names start with an uppercase letter. '''
    return bool(SEGMENT_RE.match(segment_s)) and segment_s[0].isupper()


#==============================================================================
def infer_kind(container, name_s):
    if container and name_s == CONSTRUCTOR_NAME:
        return ConstructKind.CONS
    return ConstructKind.METH if container else ConstructKind.FUNC


#==============================================================================
@dataclass(frozen=True)
class ConstructSignature:
    '''
    Globally unique identifier of a function, method or constructor:  its
    package, the chain of enclosing classes, its name and its arity.  The
    kind is implied by the other fields and is checked against them.
    '''
    package: str
    container: Tuple[str, ...]
    name: str
    kind: ConstructKind
    arity: int

    def __post_init__(self):
        object.__setattr__(self, 'container', tuple(self.container))
        if not is_string(self.package) or not is_string(self.name):
            raise MalformedSignature('package and name must be strings')
        if self.package:
            for segment in self.package.split('.'):
                if not is_package_segment(segment):
                    raise MalformedSignature(
                        "bad package segment '{0}' in '{1}'".format(
                            segment, self.package))
        for segment in self.container:
            if not is_class_segment(segment):
                raise MalformedSignature("bad class name '" + segment + "'")
        if not SEGMENT_RE.match(self.name):
            raise MalformedSignature("bad construct name '" + self.name + "'")
        if self.name == CONSTRUCTOR_NAME and not self.container:
            raise MalformedSignature("'init' is reserved for constructors")
        if isinstance(self.arity, bool) or not isinstance(self.arity, int) \
                or self.arity < 0:
            raise MalformedSignature("bad arity: " + sstr(self.arity))
        if not isinstance(self.kind, ConstructKind) or \
                self.kind != infer_kind(self.container, self.name):
            raise MalformedSignature("kind {0} does not fit {1}".format(
                self.kind, self.qualified_name))

    #==========================================================================
    @classmethod
    def of(cls, package_s, container, name_s, arity_n):
        ''' Builds a signature, inferring its kind. '''
        container = tuple(container)
        return cls(package_s, container, name_s,
                   infer_kind(container, name_s), arity_n)

    qualified_name = property(lambda self: '.'.join(
        ([self.package] if self.package else []) + list(self.container) +
        [self.name]))

    def __str__(self):
        return render_signature(self)

    def sort_key(self):
        return render_signature(self)


#==============================================================================
def render_signature(sig):
    ''' Returns the canonical text form: package.Container.name/arity '''
    return '{0}/{1}'.format(sig.qualified_name, sig.arity)


#==============================================================================
def parse_signature(text_s):
    '''
    Parses the canonical text form back into a ConstructSignature.  Leading
    lowercase segments form the package, the uppercase segments that follow
    are the enclosing classes, and the last segment is the name.
    '''
    if not is_string(text_s):
        raise MalformedSignature('signature must be a string: ' + sstr(text_s))
    match = SIGNATURE_RE.match(text_s)
    if not match:
        raise MalformedSignature("malformed signature '" + text_s + "'")
    segments = match.group(1).split('.')
    name_s = segments[-1]
    prefix = segments[:-1]
    split_n = 0
    while split_n < len(prefix) and is_package_segment(prefix[split_n]):
        split_n += 1
    container = tuple(prefix[split_n:])
    if not all(is_class_segment(s) for s in container):
        raise MalformedSignature("malformed signature '" + text_s + "'")
    return ConstructSignature.of('.'.join(prefix[:split_n]), container,
                                 name_s, int(match.group(2)))


#==============================================================================
def version_key(version_s):
    '''
    The sort key behind compare_versions.  Numeric segments order before
    non-numeric ones, numerically and then bytewise; the rest bytewise.
    '''
    key = []
    for segment in sstr(version_s).split('.'):
        raw = segment.encode('utf-8')
        if segment.isdigit() and segment.isascii():
            key.append((0, int(segment), raw))
        else:
            key.append((1, 0, raw))
    return tuple(key)


#==============================================================================
def compare_versions(v1_s, v2_s):
    ''' Compares two version strings, returning an Ordering. '''
    k1, k2 = version_key(v1_s), version_key(v2_s)
    if k1 < k2:
        return Ordering.LT
    return Ordering.GT if k1 > k2 else Ordering.EQ


#==============================================================================
def max_version(versions):
    ''' The greatest of the given version strings, or None if empty. '''
    versions = list(versions)
    return max(versions, key=version_key) if versions else None


#==============================================================================
def sorted_versions(versions):
    return sorted(set(versions), key=version_key)


#==============================================================================
@dataclass(frozen=True, order=True)
class AppId:
    group: str
    artifact: str
    version: str

    def __post_init__(self):
        for part in (self.group, self.artifact, self.version):
            if not is_string(part) or not part or ':' in part \
                    or part != part.strip():
                raise RecordFormatError(
                    'bad application id part: ' + sstr(part))

    def __str__(self):
        return '{0}:{1}:{2}'.format(self.group, self.artifact, self.version)


#==============================================================================
def parse_app_id(text_s):
    ''' Parses 'group:artifact:version'. '''
    parts = sstr(text_s).split(':')
    if len(parts) != 3:
        raise RecordFormatError("bad application id '" + sstr(text_s) + "'")
    return AppId(*parts)


#==============================================================================
@dataclass(frozen=True, order=True)
class LibraryId:
    group: str
    artifact: str

    def __post_init__(self):
        for part in (self.group, self.artifact):
            if not is_string(part) or not part or ':' in part:
                raise RecordFormatError('bad library id part: ' + sstr(part))

    def __str__(self):
        return '{0}:{1}'.format(self.group, self.artifact)


#==============================================================================
def parse_library_id(text_s):
    ''' Parses 'group:artifact'. '''
    parts = sstr(text_s).split(':')
    if len(parts) != 2:
        raise RecordFormatError("bad library id '" + sstr(text_s) + "'")
    return LibraryId(*parts)


#==============================================================================
def is_digest(text_s):
    return is_string(text_s) and bool(DIGEST_RE.match(text_s))


#==============================================================================
@dataclass(frozen=True)
class LibraryRelease:
    library: LibraryId
    version: str
    digest: str

    def __post_init__(self):
        if not is_string(self.version) or not self.version:
            raise RecordFormatError('release version must not be empty')
        if not is_digest(self.digest):
            raise RecordFormatError('bad archive digest: ' + sstr(self.digest))

    def to_dict(self):
        return {'library': str(self.library), 'version': self.version,
                'digest': self.digest}

    @classmethod
    def from_dict(cls, d):
        return cls(parse_library_id(d['library']), d['version'], d['digest'])


#==============================================================================
@dataclass(frozen=True)
class CpeName:
    '''
    A CPE name in URI binding form, plus the optional "versions before X"
    bound that vulnerability feeds attach to it.
    '''
    part: str
    vendor: str
    product: str
    version: Optional[str] = None
    version_end_excluding: Optional[str] = None

    def __post_init__(self):
        if self.part not in ('a', 'o', 'h'):
            raise RecordFormatError('bad CPE part: ' + sstr(self.part))
        if not self.vendor or not self.product:
            raise RecordFormatError('CPE needs a vendor and a product')

    def to_uri(self):
        uri = 'cpe:/{0}:{1}:{2}'.format(self.part, self.vendor, self.product)
        return uri + ':' + self.version if self.version else uri

    def to_dict(self):
        d = {'cpe': self.to_uri()}
        if self.version_end_excluding:
            d['versionEndExcluding'] = self.version_end_excluding
        return d

    @classmethod
    def from_dict(cls, d):
        if is_string(d):
            return parse_cpe(d)
        if not isinstance(d, dict) or 'cpe' not in d:
            raise RecordFormatError('bad CPE entry: ' + sstr(d))
        return parse_cpe(d['cpe'], d.get('versionEndExcluding'))


#==============================================================================
def parse_cpe(uri_s, version_end_excluding_s=None):
    '''
    Parses 'cpe:/a:vendor:product[:version[:...]]'.  Components after the
    version (update, edition, language) are ignored; '-' and '*' versions
    mean no version.
    '''
    text = sstr(uri_s).strip()
    if not text.lower().startswith('cpe:/'):
        raise RecordFormatError("not a CPE URI: '" + text + "'")
    parts = text[5:].split(':')
    if len(parts) < 3:
        raise RecordFormatError("incomplete CPE URI: '" + text + "'")
    version = parts[3] if len(parts) > 3 and parts[3] not in ('', '-', '*') \
        else None
    return CpeName(parts[0].lower(), parts[1], parts[2], version,
                   version_end_excluding_s or None)


#==============================================================================
@dataclass(frozen=True)
class VulnerabilityRecord:
    vuln_id: str
    description: str = ''
    references: Tuple[str, ...] = ()
    affected_cpes: Tuple[CpeName, ...] = ()
    # explicit (storeId, revisionId) pairs, or None if none were given
    fix_revisions: Optional[Tuple[Tuple[str, str], ...]] = None

    def __post_init__(self):
        if not is_string(self.vuln_id) or not VULN_ID_RE.match(self.vuln_id):
            raise RecordFormatError('bad vulnerability id: ' +
                                    sstr(self.vuln_id))
        object.__setattr__(self, 'references', tuple(self.references))
        object.__setattr__(self, 'affected_cpes', tuple(self.affected_cpes))
        if self.fix_revisions is not None:
            object.__setattr__(self, 'fix_revisions', tuple(
                (sstr(s), sstr(r)) for s, r in self.fix_revisions))

    def to_dict(self):
        d = {'vulnId': self.vuln_id, 'description': self.description,
             'references': list(self.references),
             'affectedCpes': [c.to_dict() for c in self.affected_cpes]}
        if self.fix_revisions is not None:
            d['fixRevisions'] = [{'store': s, 'revision': r}
                                 for s, r in self.fix_revisions]
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or 'vulnId' not in d:
            raise RecordFormatError('vulnerability record needs a vulnId')
        fixes = d.get('fixRevisions')
        if fixes is not None:
            fixes = [(f['store'], f['revision']) if isinstance(f, dict)
                     else tuple(f) for f in fixes]
            if any(len(f) != 2 for f in fixes):
                raise RecordFormatError('bad fixRevisions in ' + d['vulnId'])
        return cls(d['vulnId'], sstr(d.get('description', '')),
                   tuple(sstr(r) for r in d.get('references', [])),
                   tuple(CpeName.from_dict(c)
                         for c in d.get('affectedCpes', [])), fixes)


#==============================================================================
@dataclass(frozen=True)
class ChangeEntry:
    signature: ConstructSignature
    change_kind: ChangeKind

    def to_dict(self):
        return {'sig': render_signature(self.signature),
                'change': self.change_kind.value}


#==============================================================================
@dataclass(frozen=True)
class ChangeList:
    '''
    The constructs of one library that the security patch for one
    vulnerability added, deleted or modified.  'fix_revision' names the
    fix revision (several are comma separated); the optional version and
    timestamp fields come from the revision store's tags and log.
    '''
    library: LibraryId
    vuln_id: str
    fix_revision: str
    entries: frozenset = field(default_factory=frozenset)
    affected_versions: Optional[Tuple[str, ...]] = None
    fixed_versions: Optional[Tuple[str, ...]] = None
    fixed_at: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'entries', frozenset(self.entries))
        signatures = [e.signature for e in self.entries]
        if len(signatures) != len(set(signatures)):
            raise RecordFormatError('change-list for {0} lists a signature '
                                    'twice'.format(self.vuln_id))
        for name in ('affected_versions', 'fixed_versions'):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(sorted_versions(value)))
        if self.fixed_at is not None and not is_instant(self.fixed_at):
            raise RecordFormatError('bad fixedAt: ' + sstr(self.fixed_at))

    def kind_of(self, signature):
        ''' The change kind of the given signature, or None. '''
        for entry in self.entries:
            if entry.signature == signature:
                return entry.change_kind
        return None

    def sorted_entries(self):
        return sorted(self.entries, key=lambda e: e.signature.sort_key())

    def tag_result(self):
        ''' (affected, fixed) version sets, or None without tag data. '''
        if self.affected_versions is None and self.fixed_versions is None:
            return None
        return (frozenset(self.affected_versions or ()),
                frozenset(self.fixed_versions or ()))

    def to_dict(self):
        return {'library': str(self.library), 'vulnId': self.vuln_id,
                'fixRevision': self.fix_revision,
                'entries': [e.to_dict() for e in self.sorted_entries()],
                'affectedVersions': None if self.affected_versions is None
                else list(self.affected_versions),
                'fixedVersions': None if self.fixed_versions is None
                else list(self.fixed_versions),
                'fixedAt': self.fixed_at}

    @classmethod
    def from_dict(cls, d):
        try:
            entries = [ChangeEntry(parse_signature(e['sig']),
                                   ChangeKind(e['change']))
                       for e in d.get('entries', [])]
            return cls(parse_library_id(d['library']), sstr(d['vulnId']),
                       sstr(d['fixRevision']), entries,
                       d.get('affectedVersions'), d.get('fixedVersions'),
                       d.get('fixedAt'))
        except (KeyError, TypeError, ValueError) as e:
            raise RecordFormatError('malformed change-list: ' + sstr(e))


#==============================================================================
@dataclass(frozen=True)
class TraceRecord:
    '''
    The first observed invocation of one construct in the context of one
    application.  'digest' is the digest of the archive the construct was
    loaded from, or None for the application's own code.
    '''
    app: AppId
    signature: ConstructSignature
    digest: Optional[str]
    first_seen: str
    run_id: str

    def __post_init__(self):
        if self.digest is not None and not is_digest(self.digest):
            raise MalformedRecord('bad archive digest: ' + sstr(self.digest))
        if not is_instant(self.first_seen):
            raise MalformedRecord('bad firstSeen: ' + sstr(self.first_seen))
        if not is_string(self.run_id):
            raise MalformedRecord('runId must be a string')

    key = property(lambda self: (self.app, self.signature))

    def precedence(self):
        ''' Earlier records win; ties are broken by runId. '''
        return (self.first_seen, self.run_id)

    def to_dict(self):
        return {'app': str(self.app),
                'sig': render_signature(self.signature),
                'digest': self.digest, 'firstSeen': self.first_seen,
                'runId': self.run_id}

    def to_line(self):
        ''' The one-line wire and file format of a trace record. '''
        return json.dumps(self.to_dict(), separators=(',', ':'),
                          ensure_ascii=False)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise MalformedRecord('trace record must be a JSON object')
        missing = [k for k in ('app', 'sig', 'firstSeen', 'runId')
                   if k not in d]
        if missing:
            raise MalformedRecord('trace record lacks ' + ', '.join(missing))
        try:
            app = parse_app_id(d['app'])
            signature = parse_signature(d['sig'])
        except (RecordFormatError, MalformedSignature) as e:
            raise MalformedRecord(e.message)
        return cls(app, signature, d.get('digest') or None,
                   d['firstSeen'], d['runId'])


#==============================================================================
def parse_trace_line(line_s):
    ''' Parses one line of the trace wire format. '''
    try:
        d = json.loads(line_s)
    except ValueError as e:
        raise MalformedRecord('not a JSON line: ' + sstr(e))
    return TraceRecord.from_dict(d)


#==============================================================================
@dataclass(frozen=True)
class EvidenceItem:
    signature: ConstructSignature
    change_kind: ChangeKind
    first_seen: str

    def to_dict(self):
        return {'sig': render_signature(self.signature),
                'change': self.change_kind.value,
                'firstSeen': self.first_seen}


#==============================================================================
@dataclass(frozen=True)
class Verdict:
    '''
    The assessment of one vulnerability for one application.  The status is
    RELEVANT_TRACED exactly when some construct of the change-list was
    traced (the evidence).
    '''
    app: AppId
    vuln_id: str
    library: Optional[LibraryId]
    library_in_use: Optional[LibraryRelease]
    status: VerdictStatus
    evidence: frozenset = field(default_factory=frozenset)
    latest_non_vulnerable: Optional[str] = None
    # evidence traces whose archive digest is not in the package index
    unresolved_evidence: bool = False
    # True if every evidence trace was first seen before the fix was
    # committed; None when either side has no timestamp
    traces_predate_patch: Optional[bool] = None

    def __post_init__(self):
        object.__setattr__(self, 'evidence', frozenset(self.evidence))
        if (self.status == VerdictStatus.RELEVANT_TRACED) != \
                bool(self.evidence):
            raise ValueError('RELEVANT_TRACED requires evidence, and '
                             'evidence requires RELEVANT_TRACED')

    def to_dict(self):
        return {'app': str(self.app), 'vulnId': self.vuln_id,
                'library': str(self.library) if self.library else None,
                'libraryInUse': self.library_in_use.to_dict()
                if self.library_in_use else None,
                'status': self.status.value,
                'evidence': [e.to_dict() for e in sorted(
                    self.evidence, key=lambda e: e.signature.sort_key())],
                'latestNonVulnerable': self.latest_non_vulnerable,
                'unresolvedEvidence': self.unresolved_evidence,
                'tracesPredatePatch': self.traces_predate_patch}
