'''
This module contains the Configuration object.

@author: vulntrace developers
'''

import os
import re

from core.errors import ConfigError
from utils import utils
from utils.utils import load_string, sstr


#==============================================================================
class Configuration(object):
    '''
    This class contains the configuration details for the toolchain, and
    the methods for reading them out of a settings file and the environment.

    A settings file holds one "KEY = value" line per setting; keys are case
    insensitive, values may be quoted, and unknown keys or '#' comment lines
    are ignored.  Later sources override earlier ones:  built-in defaults,
    then the settings file, then environment variables, then whatever the
    command line sets directly on this object.
    '''

    # environment variables that override the settings file
    ENV_STATE = 'VULNTRACE_STATE'
    ENV_SERVICE_URL = 'VULNTRACE_SERVICE_URL'
    ENV_LOG_LEVEL = 'VULNTRACE_LOG_LEVEL'

    # default values for settings
    __DEFAULT_DIGEST_ALGORITHM = 'sha1'
    __DEFAULT_LOG_LEVEL = 'INFO'
    __DEFAULT_SERVICE_TIMEOUT = 30
    __DIGEST_ALGORITHMS = ('sha1', 'sha256')

    #==========================================================================
    def __init__(self):
        ''' Initializes a new Configuration object with default settings '''
        c = Configuration
        self.app_s = ''  # canonical AppId of the application under test
        self.sources_s = ''  # directory of the application's .mj files
        self.libraries_sl = []  # library archive directories
        self.store_s = ''  # revision store directory
        self.index_s = ''  # package index file (index.tsv)
        self.vulns_s = ''  # vulnerability record directory
        self.state_file_s = ''  # engine snapshot file
        self.service_url_s = ''  # base URL of an ingest service
        self.digest_algorithm_s = c.__DEFAULT_DIGEST_ALGORITHM
        self.clock_s = ''  # fixed ISO-8601 instant, for reproducible runs
        self.spill_file_s = ''  # where undeliverable traces are written
        self.log_level_s = c.__DEFAULT_LOG_LEVEL
        self.service_timeout_n = c.__DEFAULT_SERVICE_TIMEOUT

    #==========================================================================
    def load_settings_s(self, settings_s):
        '''
        Parses the given settings text, overriding any setting that appears
        in it.  Raises ConfigError for values that cannot be used.
        '''
        lines_s = [x.strip() for x in sstr(settings_s).split('\n')
                   if x.strip() and not x.strip().startswith('#')]
        pattern_s = r"(?i)^{0}\s*=\s*['\"]?(.*?)['\"]?$"
        for line_s in lines_s:
            match = re.match(pattern_s.format("APP"), line_s)
            if match:
                self.app_s = match.group(1).strip()

            match = re.match(pattern_s.format("SOURCES"), line_s)
            if match:
                self.sources_s = match.group(1).strip()

            match = re.match(pattern_s.format("LIBRARIES"), line_s)
            if match:
                self.libraries_sl = [x.strip() for x in
                                     match.group(1).split(',') if x.strip()]

            match = re.match(pattern_s.format("STORE"), line_s)
            if match:
                self.store_s = match.group(1).strip()

            match = re.match(pattern_s.format("INDEX"), line_s)
            if match:
                self.index_s = match.group(1).strip()

            match = re.match(pattern_s.format("VULNS"), line_s)
            if match:
                self.vulns_s = match.group(1).strip()

            match = re.match(pattern_s.format("STATE_FILE"), line_s)
            if match:
                self.state_file_s = match.group(1).strip()

            match = re.match(pattern_s.format("SERVICE_URL"), line_s)
            if match:
                self.service_url_s = match.group(1).strip()

            match = re.match(pattern_s.format("DIGEST_ALGORITHM"), line_s)
            if match:
                self.set_digest_algorithm(match.group(1))

            match = re.match(pattern_s.format("CLOCK"), line_s)
            if match:
                self.set_clock(match.group(1))

            match = re.match(pattern_s.format("SPILL_FILE"), line_s)
            if match:
                self.spill_file_s = match.group(1).strip()

            match = re.match(pattern_s.format("LOG_LEVEL"), line_s)
            if match:
                self.log_level_s = match.group(1).strip().upper()

            match = re.match(pattern_s.format("SERVICE_TIMEOUT"), line_s)
            if match and utils.is_number(match.group(1)):
                self.service_timeout_n = \
                    min(300, max(1, int(float(match.group(1)))))
        return self

    #==========================================================================
    def load_file(self, path_s):
        ''' Loads the given settings file (see load_settings_s). '''
        if not os.path.isfile(path_s):
            raise ConfigError("settings file not found: " + sstr(path_s))
        return self.load_settings_s(load_string(path_s))

    #==========================================================================
    def load_environment(self, environ=None):
        ''' Applies the VULNTRACE_* environment overrides. '''
        environ = os.environ if environ is None else environ
        c = Configuration
        if environ.get(c.ENV_STATE):
            self.state_file_s = environ[c.ENV_STATE].strip()
        if environ.get(c.ENV_SERVICE_URL):
            self.service_url_s = environ[c.ENV_SERVICE_URL].strip()
        if environ.get(c.ENV_LOG_LEVEL):
            self.log_level_s = environ[c.ENV_LOG_LEVEL].strip().upper()
        return self

    #==========================================================================
    def set_digest_algorithm(self, algorithm_s):
        algorithm_s = sstr(algorithm_s).strip().lower()
        if algorithm_s not in Configuration.__DIGEST_ALGORITHMS:
            raise ConfigError("unsupported digest algorithm: " + algorithm_s)
        self.digest_algorithm_s = algorithm_s

    #==========================================================================
    def set_clock(self, clock_s):
        clock_s = sstr(clock_s).strip()
        if clock_s and not utils.is_instant(clock_s):
            raise ConfigError("CLOCK is not a UTC ISO-8601 instant: " + clock_s)
        self.clock_s = clock_s

    #==========================================================================
    def get_clock(self):
        ''' The clock function runs and sinks should use. '''
        return utils.fixed_clock(self.clock_s) if self.clock_s \
            else utils.utc_now

    #==========================================================================
    def check_sink(self):
        '''
        Verifies that exactly one of STATE_FILE and SERVICE_URL is set.
        Raises ConfigError otherwise.
        '''
        if bool(self.state_file_s) == bool(self.service_url_s):
            raise ConfigError(
                "exactly one of --state (STATE_FILE) and --service "
                "(SERVICE_URL) must be configured")

    #==========================================================================
    def __eq__(self, other):
        return isinstance(other, Configuration) and \
            self.__dict__ == other.__dict__

    def __ne__(self, other):
        return not self == other

    #==========================================================================
    def __str__(self):
        return '\n'.join('{0} = {1}'.format(k, v)
                         for k, v in sorted(self.__dict__.items()))
