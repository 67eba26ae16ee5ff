'''
Archive digests.  A MiniJay library archive is a directory; its digest is
the hash of a canonical serialization of all files below it, so the same
tree yields the same digest wherever it lives and however the file system
orders its entries.

@author: vulntrace developers
'''

import hashlib
import os

from core.errors import DigestIoError
from utils.utils import sstr

ALGORITHMS = ('sha1', 'sha256')


#==============================================================================
def archive_files(root_s):
    '''
    The relative POSIX paths (as bytes) of all regular files below the
    given directory, in ascending byte order.
    '''
    paths = []
    for directory, _, filenames in os.walk(root_s):
        for filename in filenames:
            full = os.path.join(directory, filename)
            if os.path.isfile(full):
                relative = os.path.relpath(full, root_s).replace(os.sep, '/')
                paths.append(relative.encode('utf-8'))
    return sorted(paths)


#==============================================================================
def archive_digest(root_s, algorithm_s='sha1'):
    '''
    Returns the lowercase hex digest of the given archive directory: for
    each file in ascending byte order of its relative path, the hash is fed
    the path bytes, a zero byte, the content bytes and another zero byte.
    Raises DigestIoError if the directory has no files or cannot be read.
    '''
    if algorithm_s not in ALGORITHMS:
        raise DigestIoError('unsupported digest algorithm: ' +
                            sstr(algorithm_s))
    if not os.path.isdir(root_s):
        raise DigestIoError('not a directory: ' + sstr(root_s))
    paths = archive_files(root_s)
    if not paths:
        raise DigestIoError('no files to digest in ' + sstr(root_s))
    digest = hashlib.new(algorithm_s)
    try:
        for path in paths:
            digest.update(path)
            digest.update(b'\0')
            with open(os.path.join(root_s, *path.decode('utf-8').split('/')),
                      'rb') as f:
                for chunk in iter(lambda: f.read(65536), b''):
                    digest.update(chunk)
            digest.update(b'\0')
    except OSError as e:
        raise DigestIoError('cannot read {0}: {1}'.format(root_s, sstr(e)))
    return digest.hexdigest()
