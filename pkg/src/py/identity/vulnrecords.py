'''
Vulnerability record files: one JSON object per file, e.g.

    {"vulnId": "VULN-0050",
     "description": "... before 1.3.1 ...",
     "references": ["https://svn.example.org/repos/fileupload/r4"],
     "affectedCpes": [{"cpe": "cpe:/a:acme:fileupload",
                       "versionEndExcluding": "1.3.1"}],
     "fixRevisions": [{"store": "fileupload", "revision": "r4"}]}

'affectedCpes' entries may also be plain CPE strings; 'fixRevisions' is
optional.

@author: vulntrace developers
'''

import json
import os

from core.errors import RecordFormatError
from core.models import VulnerabilityRecord
from utils import log
from utils.utils import sstr


#==============================================================================
def load_vulnerability_record(path_s):
    try:
        with open(path_s, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, ValueError) as e:
        raise RecordFormatError('cannot read {0}: {1}'.format(path_s,
                                                              sstr(e)))
    try:
        return VulnerabilityRecord.from_dict(data)
    except (KeyError, TypeError) as e:
        raise RecordFormatError('{0}: missing or bad field {1}'.format(
            path_s, sstr(e)))
    except RecordFormatError as e:
        raise RecordFormatError('{0}: {1}'.format(path_s, e.message))


#==============================================================================
def load_vulnerability_records(path_s):
    '''
    Loads a single record file, or every '.json' file of a directory.
    Returns {vulnId: VulnerabilityRecord}; ids must be unique.
    '''
    if os.path.isfile(path_s):
        paths = [path_s]
    elif os.path.isdir(path_s):
        paths = [os.path.join(path_s, name) for name in sorted(
            os.listdir(path_s)) if name.endswith('.json')]
    else:
        raise RecordFormatError('no vulnerability records at ' + sstr(path_s))
    records = {}
    for path in paths:
        record = load_vulnerability_record(path)
        if record.vuln_id in records:
            raise RecordFormatError('{0} is defined twice (again in {1})'
                                    .format(record.vuln_id, path))
        records[record.vuln_id] = record
    log.debug('loaded ', len(records), ' vulnerability record(s) from ',
              path_s)
    return records
