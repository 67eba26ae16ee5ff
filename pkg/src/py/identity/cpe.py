'''
CPE fallback matching.  Vulnerability feeds name affected products with CPE
vendor/product strings that rarely match package coordinates verbatim, so
names are compared as token sets.  Uncertain matches are flagged as
ambiguous and are not used to decide affectedness.

@author: vulntrace developers
'''

import re
from dataclasses import dataclass
from enum import Enum

from core.models import CpeName, LibraryId, Ordering, compare_versions
from utils import log

__SPLIT_RE = re.compile(r'[-_.]')


#==============================================================================
class MatchConfidence(Enum):
    EXACT = 'EXACT'
    TOKEN_SUBSET = 'TOKEN_SUBSET'
    NONE = 'NONE'


#==============================================================================
class Affectedness(Enum):
    AFFECTED = 'AFFECTED'
    NOT_AFFECTED = 'NOT_AFFECTED'
    UNKNOWN = 'UNKNOWN'


#==============================================================================
@dataclass(frozen=True)
class CpeMatch:
    cpe: CpeName
    library: LibraryId
    confidence: MatchConfidence
    ambiguous: bool = False

    # a usable match: not rejected, and not in need of a human decision
    accepted = property(lambda self: self.confidence != MatchConfidence.NONE
                        and not self.ambiguous)

    def to_dict(self):
        return {'cpe': self.cpe.to_uri(), 'library': str(self.library),
                'confidence': self.confidence.value,
                'ambiguous': self.ambiguous}


#==============================================================================
def tokens(name_s):
    ''' Lowercases a name and splits it on '-', '_' and '.'. '''
    return [t for t in __SPLIT_RE.split(name_s.lower()) if t]


#==============================================================================
def match_cpe(cpe, library):
    '''
    Matches a CPE product against library coordinates: EXACT when the
    product and artifact tokens are equal, TOKEN_SUBSET when every product
    token occurs in the group or artifact, otherwise NONE.  A TOKEN_SUBSET
    match on a one-token product is ambiguous.  Only application CPEs
    (part 'a') can match.
    '''
    if cpe.part != 'a':
        return CpeMatch(cpe, library, MatchConfidence.NONE)
    product = tokens(cpe.product)
    if product == tokens(library.artifact):
        return CpeMatch(cpe, library, MatchConfidence.EXACT)
    if set(product) <= set(tokens(library.group) + tokens(library.artifact)):
        return CpeMatch(cpe, library, MatchConfidence.TOKEN_SUBSET,
                        len(product) == 1)
    return CpeMatch(cpe, library, MatchConfidence.NONE)


#==============================================================================
def cpe_matches(vuln, library):
    ''' match_cpe for every CPE of the record. '''
    return [match_cpe(cpe, library) for cpe in vuln.affected_cpes]


#==============================================================================
def __cpe_covers(cpe, version_s):
    if cpe.version:
        return compare_versions(cpe.version, version_s) == Ordering.EQ
    if cpe.version_end_excluding:
        return compare_versions(cpe.version_end_excluding,
                                version_s) == Ordering.GT
    return True  # no version and no bound: every version


#==============================================================================
def is_version_affected(vuln, release, tag_result=None):
    '''
    Decides whether the given release is affected by the vulnerability.

    Tag evidence (affected, fixed) from the revision store wins whenever it
    names any version: AFFECTED if the release's version is among the
    affected ones, NOT_AFFECTED if among the fixed ones, else UNKNOWN.
    Otherwise the record's CPEs are consulted: AFFECTED if an accepted match
    lists the version or bounds it from above, NOT_AFFECTED if accepted
    matches exist but none covers the version, UNKNOWN if nothing matches.
    '''
    if tag_result is not None and (tag_result[0] or tag_result[1]):
        affected, fixed = tag_result
        if release.version in affected:
            return Affectedness.AFFECTED
        if release.version in fixed:
            return Affectedness.NOT_AFFECTED
        return Affectedness.UNKNOWN

    matches = [m for m in cpe_matches(vuln, release.library) if m.accepted]
    if not matches:
        for m in cpe_matches(vuln, release.library):
            if m.ambiguous:
                log.warn(vuln.vuln_id, ': CPE ', m.cpe.to_uri(),
                         ' may name ', release.library,
                         '; needs a manual mapping')
        return Affectedness.UNKNOWN
    if any(__cpe_covers(m.cpe, release.version) for m in matches):
        return Affectedness.AFFECTED
    return Affectedness.NOT_AFFECTED


#==============================================================================
def max_end_excluding(vuln, library):
    '''
    The greatest 'versionEndExcluding' bound among accepted CPE matches, or
    None; the first release outside the bounded range.
    '''
    bounds = [m.cpe.version_end_excluding
              for m in cpe_matches(vuln, library)
              if m.accepted and m.cpe.version_end_excluding]
    if not bounds:
        return None
    best = bounds[0]
    for bound in bounds[1:]:
        if compare_versions(bound, best) == Ordering.GT:
            best = bound
    return best
