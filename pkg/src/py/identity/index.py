'''
The package index: a local table of known library releases keyed by their
archive digest.

    index.tsv rows:  digest<TAB>group<TAB>artifact<TAB>version

@author: vulntrace developers
'''

import os

from core.errors import RecordFormatError
from core.models import LibraryId, LibraryRelease, sorted_versions
from utils import log
from utils.utils import sstr


#==============================================================================
class PackageIndex(object):
    '''
    Immutable after construction.  'rows' maps digest -> LibraryRelease;
    versions_of() lists every known version of a library in version order.
    '''

    #==========================================================================
    def __init__(self, releases=()):
        rows = {}
        by_library = {}
        for release in releases:
            other = rows.get(release.digest)
            if other is not None and other != release:
                raise RecordFormatError(
                    'digest {0} is listed for both {1} {2} and {3} {4}'.format(
                        release.digest, other.library, other.version,
                        release.library, release.version))
            rows[release.digest] = release
            by_library.setdefault(release.library, []).append(
                release.version)
        self.__rows = rows
        self.__by_library = {lib: tuple(sorted_versions(versions))
                             for lib, versions in by_library.items()}

    rows = property(lambda self: dict(self.__rows))

    def get(self, digest_s):
        ''' The release with the given lower-case digest, or None. '''
        return self.__rows.get(digest_s)

    #==========================================================================
    def releases(self):
        ''' All releases, ordered by library and digest. '''
        return sorted(self.__rows.values(),
                      key=lambda r: (str(r.library), r.digest))

    #==========================================================================
    def versions_of(self, library):
        return self.__by_library.get(library, ())

    #==========================================================================
    def libraries(self):
        return sorted(self.__by_library)

    #==========================================================================
    def merged(self, releases):
        ''' A new index holding this index's releases plus the given ones. '''
        return PackageIndex(list(self.__rows.values()) + list(releases))

    def __len__(self):
        return len(self.__rows)

    def __eq__(self, other):
        return isinstance(other, PackageIndex) and \
            self.__rows == other.__rows

    def __ne__(self, other):
        return not self == other


#==============================================================================
def lookup_digest(index, digest_s):
    '''
    The release whose archive has the given digest, or None.  On a hit,
    index.versions_of(release.library) lists all known versions.
    '''
    return index.get(sstr(digest_s).lower()) if digest_s else None


#==============================================================================
def parse_index_rows(text_s, name_s='index.tsv'):
    releases = []
    for number, line in enumerate(text_s.split('\n'), 1):
        line = line.rstrip('\r')
        if not line.strip() or line.startswith('#'):
            continue
        fields = line.split('\t')
        if len(fields) != 4:
            raise RecordFormatError('{0}:{1}: expected 4 tab-separated '
                                    'fields'.format(name_s, number))
        digest, group, artifact, version = [f.strip() for f in fields]
        try:
            releases.append(LibraryRelease(LibraryId(group, artifact),
                                           version, digest))
        except RecordFormatError as e:
            raise RecordFormatError('{0}:{1}: {2}'.format(name_s, number,
                                                          e.message))
    return releases


#==============================================================================
def load_package_index(path_s):
    ''' Loads an index.tsv file.  Raises RecordFormatError on bad rows. '''
    if not os.path.isfile(path_s):
        raise RecordFormatError('package index not found: ' + sstr(path_s))
    with open(path_s, 'r', encoding='utf-8', newline='') as f:
        index = PackageIndex(parse_index_rows(f.read(),
                                              os.path.basename(path_s)))
    log.debug('loaded ', len(index), ' release(s) from ', path_s)
    return index
