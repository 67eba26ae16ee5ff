"""
This module installs a GLOBAL logging system into an application.  Any
information that is written out using the debug(), info(), warn(),
debug_exc(), or handle_error() methods goes through the standard 'logging'
package under the 'vulntrace' logger.

USAGE

Library modules simply call the module-level methods.  Entry points (the
command line tool, the ingest service) call install() once, and use a
try-finally to GUARANTEE that uninstall() is called when the program
completes, so that log handlers are flushed and released.

All log output goes to stderr (and optionally a file).  stdout is reserved
for machine-readable output.

THREAD SAFETY

Logging itself is threadsafe.  install() and uninstall() are not, so do not
call other methods in this module while either of those two is running.

@author: vulntrace developers
"""

import logging
import sys
import traceback

from utils.utils import sstr

LOGGER_NAME = 'vulntrace'

# the logger every module-level method writes to
__logger = logging.getLogger(LOGGER_NAME)

# handlers added by install(), removed again by uninstall()
__handlers = []


#==============================================================================
def install(level=logging.INFO, logfile=None):
    """
    Installs this module's handlers.  'level' is a logging level (name or
    number); 'logfile' is an optional path that receives a copy of the log.
    Installing twice is an error.
    """
    global __handlers
    if __handlers:
        raise Exception("don't install '" + __name__ + "' module twice!")

    formatter = logging.Formatter('%(asctime)s %(levelname)s %(message)s')
    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(formatter)
    __handlers.append(stream_handler)
    if logfile:
        file_handler = logging.FileHandler(logfile, encoding='utf-8')
        file_handler.setFormatter(formatter)
        __handlers.append(file_handler)

    for handler in __handlers:
        __logger.addHandler(handler)
    __logger.setLevel(level_of(level))
    __logger.propagate = False


#==============================================================================
def uninstall():
    """
    Uninstalls this module, flushing and closing everything install() set up.
    """
    global __handlers
    for handler in __handlers:
        __logger.removeHandler(handler)
        handler.flush()
        handler.close()
    __handlers = []
    __logger.propagate = True


#==============================================================================
def level_of(level):
    """
    Converts a level name like "debug" or "WARNING" (or a logging number)
    into a logging level number.  Unknown names mean INFO.
    """
    if isinstance(level, int):
        return level
    value = logging.getLevelName(sstr(level).strip().upper())
    return value if isinstance(value, int) else logging.INFO


#==============================================================================
def debug(*messages):
    """
    Writes the given single-line message to the debug log.

    Arguments to this method (any number of them, including none) will be
    converted to a string and concatenated together.  Arguments are usually
    strings or numbers, but can be anything with a working __str__ method,
    or even 'None'.
    """
    if __logger.isEnabledFor(logging.DEBUG):
        __logger.debug(''.join(map(sstr, messages)))


#==============================================================================
def info(*messages):
    """ Like debug(), but at INFO level. """
    if __logger.isEnabledFor(logging.INFO):
        __logger.info(''.join(map(sstr, messages)))


#==============================================================================
def warn(*messages):
    """ Like debug(), but at WARNING level. """
    __logger.warning(''.join(map(sstr, messages)))


#==============================================================================
def debug_exc(message=''):
    """
    Writes the python error stack trace (i.e. from the current thread) to the
    debug log.  This method should be only be called when that trace is
    current; i.e from within the 'except' section of a try-except block.
    """
    if message and message.strip():
        debug(message)
    exc_type, exc_value, _ = sys.exc_info()
    if exc_type is None:
        return
    debug('Caught ', exc_type.__name__, ': ', sstr(exc_value))
    for line in traceback.format_exc().rstrip().splitlines():
        debug(line)


#==============================================================================
def handle_error(error):
    '''
    Handles the given error object by formatting it nicely and writing it to
    the log at ERROR level.  This is an application's normal way to handle
    unexpected errors and exceptions.
    '''
    __logger.error("------------------- PYTHON ERROR ------------------------")
    __logger.error('%s: %s', type(error).__name__, sstr(error))
    if sys.exc_info()[0] is not None:
        for line in traceback.format_exc().rstrip().splitlines():
            __logger.error(line)
