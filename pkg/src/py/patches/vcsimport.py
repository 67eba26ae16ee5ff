'''
Populates a revision store from a git repository by shelling out to the
'git' command line client.  Only the first-parent history of HEAD is
imported, oldest commit first; each commit becomes one revision holding the
MiniJay files of its tree.  Tags get the first dotted number in their name
as version ('v1.3.1' and 'FILEUPLOAD_1_3_1' both give '1.3.1').

@author: vulntrace developers
'''

import os
import re
import shutil
import subprocess
from datetime import datetime, timezone

from core.errors import StoreFormatError
from minijay.extractor import SOURCE_SUFFIX
from patches.revstore import LogEntry, Tag, write_revision_store
from utils import log
from utils.utils import format_instant, sstr

__VERSION_RE = re.compile(r'(\d+(?:[._]\d+)*)')


#==============================================================================
def version_from_tag(tag_s):
    ''' The version a tag name carries, or None. '''
    match = __VERSION_RE.search(tag_s)
    return match.group(1).replace('_', '.') if match else None


#==============================================================================
def __git(repo_s, *args):
    try:
        return subprocess.check_output(['git', '-C', repo_s] + list(args),
                                       stderr=subprocess.PIPE)
    except (OSError, subprocess.CalledProcessError) as e:
        detail = getattr(e, 'stderr', None) or b''
        raise StoreFormatError('git {0} failed: {1} {2}'.format(
            ' '.join(args), sstr(e), sstr(detail).strip()))


#==============================================================================
def import_git_store(repo_s, dest_s):
    '''
    Writes a revision store for the given git repository into 'dest_s'
    (which must not exist yet).  Returns the number of revisions written.
    '''
    if os.path.exists(dest_s):
        raise StoreFormatError('destination exists: ' + dest_s)
    commits = __git(repo_s, 'rev-list', '--first-parent', '--reverse',
                    'HEAD').decode('ascii').split()
    entries = []
    try:
        for commit in commits:
            raw = __git(repo_s, 'log', '-1', '--format=%ct%x00%B', commit)
            seconds, message = raw.decode('utf-8', 'replace').split('\0', 1)
            moment = datetime.fromtimestamp(int(seconds), timezone.utc)
            entries.append(LogEntry(commit, format_instant(moment),
                                    message.strip()))
            __write_snapshot(repo_s, commit,
                             os.path.join(dest_s, 'revisions', commit))

        known = set(commits)
        tags = []
        names = __git(repo_s, 'tag', '--list').decode('utf-8').split()
        for name in sorted(names):
            commit = __git(repo_s, 'rev-list', '-n', '1', name) \
                .decode('ascii').strip()
            version = version_from_tag(name)
            if commit in known and version:
                tags.append(Tag(name, commit, version))
            else:
                log.debug('skipping tag ', name)
        write_revision_store(dest_s, entries, tags)
    except BaseException:
        shutil.rmtree(dest_s, ignore_errors=True)
        raise
    log.info('imported ', len(entries), ' revision(s) and ', len(tags),
             ' tag(s) from ', repo_s)
    return len(entries)


#==============================================================================
def __write_snapshot(repo_s, commit_s, target_s):
    os.makedirs(target_s)
    listing = __git(repo_s, 'ls-tree', '-r', '-z', '--name-only', commit_s)
    paths = [p for p in listing.decode('utf-8').split('\0')
             if p.endswith(SOURCE_SUFFIX)]
    if not paths:
        # a snapshot directory must not be empty
        open(os.path.join(target_s, '.empty'), 'wb').close()
    for path in paths:
        content = __git(repo_s, 'show', '{0}:{1}'.format(commit_s, path))
        full = os.path.join(target_s, *path.split('/'))
        os.makedirs(os.path.dirname(full), exist_ok=True)
        with open(full, 'wb') as f:
            f.write(content)
