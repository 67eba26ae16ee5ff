#coding: utf-8
'''
This module contains a variety of generally useful utility methods.

@author: vulntrace developers
'''

import os
import re
import tempfile
from datetime import datetime, timezone

# second-precision UTC instants, e.g. "2014-02-06T10:15:00Z"
__ISO_RE = re.compile(r'^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$')
__ISO_FORMAT = '%Y-%m-%dT%H:%M:%SZ'


#==============================================================================
def is_string(obj):
    ''' returns a boolean indicating whether the given object is a string '''
    if obj is None:
        return False
    return isinstance(obj, str)


#==============================================================================
def is_number(s):
    ''' returns a boolean indicating whether the given object is a number, or
        a string that can be converted to a number. '''
    try:
        float(s)
        return True
    except (TypeError, ValueError):
        return False


#==============================================================================
def sstr(obj):
    '''
    Safely converts the given object into a string (sstr = safestr).

    obj: Any object to convert to string
    Returns: String representation of the object
    '''
    if obj is None:
        return '<None>'
    if isinstance(obj, str):
        return obj
    if isinstance(obj, bytes):
        try:
            return obj.decode('utf-8')
        except UnicodeDecodeError:
            return obj.decode('latin-1', errors='replace')
    return str(obj)


#==============================================================================
def format_instant(moment):
    '''
    Renders the given datetime as a UTC ISO-8601 string with second
    precision.  Naive datetimes are taken to already be in UTC.
    '''
    if moment.tzinfo is not None:
        moment = moment.astimezone(timezone.utc)
    return moment.strftime(__ISO_FORMAT)


#==============================================================================
def parse_instant(text):
    '''
    Parses a UTC ISO-8601 instant as written by format_instant().
    Raises ValueError if the text is not in exactly that form.
    '''
    if not is_string(text) or not __ISO_RE.match(text):
        raise ValueError("not a UTC ISO-8601 instant: " + sstr(text))
    return datetime.strptime(text, __ISO_FORMAT).replace(tzinfo=timezone.utc)


#==============================================================================
def is_instant(text):
    ''' returns True if the given text is a valid format_instant() string '''
    try:
        parse_instant(text)
        return True
    except ValueError:
        return False


#==============================================================================
def utc_now():
    ''' The default clock: the current time in UTC, truncated to seconds. '''
    return datetime.now(timezone.utc).replace(microsecond=0)


#==============================================================================
def fixed_clock(instant_s):
    '''
    Returns a clock function that always answers the given instant.  Used
    for reproducible runs (the CLOCK setting) and in tests.
    '''
    moment = parse_instant(instant_s)
    return lambda: moment


#==============================================================================
def persist_string(s, file):
    """
    Writes the given string into a file, atomically: the text goes to a
    temporary file in the same directory, which then replaces the target.
    Readers never observe a half-written file.
    """
    directory = os.path.dirname(os.path.abspath(file))
    os.makedirs(directory, exist_ok=True)
    fd, temp_path = tempfile.mkstemp(prefix='.tmp-', dir=directory)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as f:
            f.write(s)
        os.replace(temp_path, file)
    except BaseException:
        try:
            os.unlink(temp_path)
        except OSError:
            pass
        raise


#==============================================================================
def load_string(file):
    """
    Reads a string containing the contents of the given file. If this given
    file doesn't exist, this method returns an empty string.
    """
    if not os.path.exists(file):
        return ""
    with open(file, 'r', encoding='utf-8') as f:
        return f.read()
