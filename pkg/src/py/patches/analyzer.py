'''
The patch analyzer: finds the revisions that fix a vulnerability, computes
the change-list of constructs those revisions touched, and splits a
library's tagged releases into affected and fixed ones.

@author: vulntrace developers
'''

import re
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

from core.models import ChangeEntry, ChangeKind, ChangeList
from patches.revstore import prior_revision
from utils import log

# a Subversion revision at the end of a reference URL
__SVN_REFERENCE_RE = re.compile(r'/r(\d+)$')

# a commit hash in a reference URL (GitHub, GitLab, cgit, ...)
__COMMIT_REFERENCE_RE = re.compile(r'commit/([0-9a-fA-F]{7,40})(?![0-9a-fA-F])')


#==============================================================================
class DiscoveryMethod(Enum):
    EXPLICIT = 'EXPLICIT'
    REFERENCE_PATTERN = 'REFERENCE_PATTERN'
    COMMIT_LOG_SEARCH = 'COMMIT_LOG_SEARCH'


#==============================================================================
@dataclass(frozen=True)
class FixDiscovery:
    vuln_id: str
    store_id: str
    # (revisionId, DiscoveryMethod), one per revision
    hits: Tuple[Tuple[str, DiscoveryMethod], ...]

    revisions = property(lambda self: [r for r, _ in self.hits])

    def to_dict(self):
        return {'vulnId': self.vuln_id, 'store': self.store_id,
                'hits': [{'revision': r, 'method': m.value}
                         for r, m in self.hits]}


#==============================================================================
def __find_commit(store, hash_s):
    ''' The store revision the (possibly abbreviated) hash names, or None. '''
    hash_s = hash_s.lower()
    matches = [r for r in store.revision_ids if r.lower().startswith(hash_s)]
    return matches[0] if len(matches) == 1 else None


#==============================================================================
def revisions_from_references(references, store):
    '''
    The store revisions named by reference URLs: Subversion URLs ending in
    '/rNNN' and URLs with 'commit/<hash>'.  Revisions the store does not
    know are dropped.
    '''
    found = []
    for reference in references:
        match = __SVN_REFERENCE_RE.search(reference.strip())
        if match:
            for candidate in (match.group(1), 'r' + match.group(1)):
                if store.has_revision(candidate):
                    found.append(candidate)
                    break
        for match in __COMMIT_REFERENCE_RE.finditer(reference):
            revision = __find_commit(store, match.group(1))
            if revision is not None:
                found.append(revision)
    return found


#==============================================================================
def revisions_from_commit_log(vuln_id_s, store):
    ''' The revisions whose log message mentions the id (any case). '''
    pattern = re.compile(r'(?<![\w-])' + re.escape(vuln_id_s) + r'(?!\w)',
                         re.IGNORECASE)
    return [e.revision_id for e in store.log if pattern.search(e.message)]


#==============================================================================
def discover_fix_revisions(vuln, store):
    '''
    Collects the revisions of the given store that fix the vulnerability:
    those listed explicitly in the record, then those its references point
    to, then those whose commit message mentions its id.  Each revision is
    listed once, under the first method that found it.  No hits means the
    fix must be named by hand.
    '''
    hits = []
    seen = set()

    def add(revision, method):
        if revision not in seen and store.has_revision(revision):
            seen.add(revision)
            hits.append((revision, method))

    for store_id, revision in vuln.fix_revisions or ():
        if store_id == store.store_id:
            if not store.has_revision(revision):
                log.warn(vuln.vuln_id, ' names unknown revision ', revision,
                         ' of store ', store_id)
            add(revision, DiscoveryMethod.EXPLICIT)
    for revision in revisions_from_references(vuln.references, store):
        add(revision, DiscoveryMethod.REFERENCE_PATTERN)
    for revision in revisions_from_commit_log(vuln.vuln_id, store):
        add(revision, DiscoveryMethod.COMMIT_LOG_SEARCH)

    log.debug('fix discovery for ', vuln.vuln_id, ' in ', store.store_id,
              ': ', hits if hits else 'no hits')
    return FixDiscovery(vuln.vuln_id, store.store_id, tuple(hits))


#==============================================================================
def diff_constructs(vulnerable, patched):
    '''
    Diffs two {signature: ExtractedConstruct} maps.  Returns the set of
    ChangeEntries: ADD for signatures only in 'patched', DEL for those only
    in 'vulnerable', and MOD for those in both with different normalized
    bodies.
    '''
    entries = set()
    for signature in patched.keys() - vulnerable.keys():
        entries.add(ChangeEntry(signature, ChangeKind.ADD))
    for signature in vulnerable.keys() - patched.keys():
        entries.add(ChangeEntry(signature, ChangeKind.DEL))
    for signature in vulnerable.keys() & patched.keys():
        if vulnerable[signature].body_tokens != patched[signature].body_tokens:
            entries.add(ChangeEntry(signature, ChangeKind.MOD))
    return entries


#==============================================================================
def affected_versions_by_tags(store, fix_revision_s):
    '''
    Splits the store's tags around the fix revision: versions tagged before
    it are affected, versions tagged at or after it are fixed.  Returns
    (affected, fixed) as frozensets; both are empty for an untagged store.
    '''
    fix_index = store.index_of(fix_revision_s)
    affected, fixed = set(), set()
    for tag in store.tags:
        if store.index_of(tag.revision_id) < fix_index:
            affected.add(tag.version)
        else:
            fixed.add(tag.version)
    return frozenset(affected), frozenset(fixed)


#==============================================================================
def compute_change_list(store, fix_revision_s, library, vuln_id_s):
    '''
    The change-list of one fix revision: its snapshot diffed against the
    snapshot of the revision before it.  Carries the tag split and the
    fix's commit time.
    '''
    return compute_fix_change_list(store, [fix_revision_s], library,
                                   vuln_id_s)


#==============================================================================
def compute_fix_change_list(store, fix_revisions, library, vuln_id_s):
    '''
    The change-list of a fix spread over several revisions: the union of
    each revision's diff against its own prior revision.  A signature that
    the diffs report with different kinds is recorded as MOD.  Tags are
    split at the latest of the revisions.
    '''
    revisions = sorted(set(fix_revisions), key=store.index_of)
    if not revisions:
        raise ValueError('no fix revisions given')
    kinds = {}
    for revision in revisions:
        previous = prior_revision(store, revision)
        diff = diff_constructs(store.snapshot_constructs(previous),
                               store.snapshot_constructs(revision))
        for entry in diff:
            known = kinds.get(entry.signature)
            kinds[entry.signature] = entry.change_kind \
                if known is None or known == entry.change_kind \
                else ChangeKind.MOD
    latest = revisions[-1]
    affected, fixed = affected_versions_by_tags(store, latest)
    change_list = ChangeList(
        library, vuln_id_s, ','.join(revisions),
        [ChangeEntry(s, k) for s, k in kinds.items()],
        affected, fixed, store.entry(latest).timestamp)
    log.info('change-list for ', vuln_id_s, ' in ', library, ' at ',
             change_list.fix_revision, ': ', len(change_list.entries),
             ' construct(s)')
    return change_list
