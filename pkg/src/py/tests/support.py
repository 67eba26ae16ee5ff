'''
Shared helpers for the unit tests: import paths, the checked-in case study
fixtures, and a TestCase that works in a scratch directory.

@author: vulntrace developers
'''

import os
import shutil
import sys
import tempfile
from unittest import TestCase

TESTS_DIR = os.path.dirname(os.path.abspath(__file__))
SRC_DIR = os.path.dirname(TESTS_DIR)
ROOT_DIR = os.path.dirname(os.path.dirname(SRC_DIR))

for path in (SRC_DIR, ROOT_DIR):
    if path not in sys.path:
        sys.path.insert(0, path)

CASESTUDY = os.path.join(TESTS_DIR, 'fixtures', 'casestudy')
STORE_DIR = os.path.join(CASESTUDY, 'fileupload')
ARCHIVE_122 = os.path.join(CASESTUDY, 'fileupload-1.2.2')
ARCHIVE_131 = os.path.join(CASESTUDY, 'fileupload-1.3.1')
APP_DIR = os.path.join(CASESTUDY, 'testapp')
INDEX_FILE = os.path.join(CASESTUDY, 'index.tsv')
VULNS_DIR = os.path.join(CASESTUDY, 'vulns')
DECLARED_FILE = os.path.join(CASESTUDY, 'declared.json')

APP_ID = 'com.acme:testapp:0.1'
LIBRARY_ID = 'acme:fileupload'
VULN_ID = 'VULN-0050'
ENTRY = 'com.acme.testapp.main/0'
CLOCK = '2014-03-01T12:00:00Z'

# pinned in index.tsv
DIGEST_122 = '0582af178f1db57bfe123c1cd55a73e30499db16'
DIGEST_131 = '64e432efa0ddbb85345a22d3df621f94f1f87f05'
SHA256_122 = \
    'aa37dcd37383e6c3be03c66744651fc42e69d9515c8d4627c4f2fc06b17614dc'
SHA256_131 = \
    'c8ca7bbf1e792f84187ebf0431e5cbfd0d97a9d82d15ec18a431d23b8ee2deb7'

FIX_SIGNATURE = 'acme.fileupload.MultipartStream.init/3'

# what the test application executes with release 1.2.2
TESTAPP_TRACED = [
    'acme.fileupload.FileUpload.init/1',
    'acme.fileupload.FileUpload.parseRequest/1',
    'acme.fileupload.MultipartStream.init/3',
    'acme.fileupload.MultipartStream.readBodyData/0',
    'acme.fileupload.MultipartStream.readBoundary/0',
    'com.acme.testapp.UploadServlet.handle/1',
    'com.acme.testapp.UploadServlet.init/0',
    'com.acme.testapp.main/0',
]


#==============================================================================
def write_tree(root_s, files):
    ''' Writes {relative path: text} below the given directory. '''
    for relative, text in files.items():
        full = os.path.join(root_s, *relative.split('/'))
        os.makedirs(os.path.dirname(full), exist_ok=True)
        with open(full, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
    return root_s


#==============================================================================
def write_store(root_s, revisions, tags=(), messages=None):
    '''
    Writes a revision store.  'revisions' is a list of (revisionId,
    timestamp, {path: text}); 'messages' optionally maps revisionId to its
    log message.
    '''
    from patches.revstore import LogEntry, Tag, write_revision_store
    messages = messages or {}
    entries = []
    for revision, timestamp, files in revisions:
        write_tree(os.path.join(root_s, 'revisions', revision), files)
        entries.append(LogEntry(revision, timestamp,
                                messages.get(revision, 'commit ' + revision)))
    write_revision_store(root_s, entries,
                         [Tag(n, r, v) for n, r, v in tags])
    return root_s


#==============================================================================
class ScratchTestCase(TestCase):
    ''' A TestCase with a fresh temporary directory in self.tmp. '''

    def setUp(self):
        self.tmp = tempfile.mkdtemp(prefix='vulntrace-test-')

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def path(self, *parts):
        return os.path.join(self.tmp, *parts)
