#coding: utf-8
'''
This module contains all unittests for the utils and log modules.

@author: vulntrace developers
'''

import logging
import os
from datetime import datetime, timezone
from unittest import TestCase
from unittest.loader import TestLoader

import support
from utils import log
from utils.utils import (fixed_clock, format_instant, is_instant, is_number,
                         load_string, parse_instant, persist_string, sstr)


#==============================================================================
def load_tests(loader, tests, pattern): #pylint: disable=W0613
    ''' Returns all of the testcases in this module as a testsuite '''
    suite = TestLoader().loadTestsFromTestCase(TestUtils)
    suite.addTests(TestLoader().loadTestsFromTestCase(TestPersistence))
    suite.addTests(TestLoader().loadTestsFromTestCase(TestLog))
    return suite


#==============================================================================
class TestUtils(TestCase):

    # --------------------------------------------------------------------------
    def test_sstr(self):
        ''' Checks that sstr() converts anything into a string. '''
        self.assertEqual('<None>', sstr(None))
        self.assertEqual('abc', sstr('abc'))
        self.assertEqual('12', sstr(12))
        self.assertEqual('ñandú', sstr('ñandú'.encode('utf-8')))
        self.assertEqual('\xe9', sstr(b'\xe9'))

    # --------------------------------------------------------------------------
    def test_is_number(self):
        self.assertTrue(is_number('30'))
        self.assertTrue(is_number('2.5'))
        self.assertFalse(is_number('thirty'))
        self.assertFalse(is_number(None))

    # --------------------------------------------------------------------------
    def test_instants(self):
        ''' Checks the UTC instant format used for firstSeen and fixedAt. '''
        moment = datetime(2014, 2, 6, 10, 15, 0, tzinfo=timezone.utc)
        self.assertEqual('2014-02-06T10:15:00Z', format_instant(moment))
        self.assertEqual(moment, parse_instant('2014-02-06T10:15:00Z'))
        self.assertTrue(is_instant('2014-02-06T10:15:00Z'))
        self.assertFalse(is_instant('2014-02-06 10:15:00'))
        self.assertFalse(is_instant('2014-02-06T10:15:00.5Z'))
        self.assertFalse(is_instant('2014-02-06T10:15:00+01:00'))
        self.assertFalse(is_instant(None))
        self.assertRaises(ValueError, parse_instant, 'yesterday')

    # --------------------------------------------------------------------------
    def test_format_instant_converts_to_utc(self):
        from datetime import timedelta
        plus_one = timezone(timedelta(hours=1))
        moment = datetime(2014, 2, 6, 11, 15, 0, tzinfo=plus_one)
        self.assertEqual('2014-02-06T10:15:00Z', format_instant(moment))

    # --------------------------------------------------------------------------
    def test_fixed_clock(self):
        clock = fixed_clock(support.CLOCK)
        self.assertEqual(clock(), clock())
        self.assertEqual(support.CLOCK, format_instant(clock()))
        self.assertRaises(ValueError, fixed_clock, 'not a time')


#==============================================================================
class TestPersistence(support.ScratchTestCase):

    # --------------------------------------------------------------------------
    def test_persist_and_load(self):
        target = self.path('nested', 'state.json')
        persist_string('{"a": 1}\n', target)
        self.assertEqual('{"a": 1}\n', load_string(target))
        persist_string('ü\n', target)
        self.assertEqual('ü\n', load_string(target))
        # the temporary file is gone after the replace
        self.assertEqual(['state.json'], os.listdir(self.path('nested')))

    # --------------------------------------------------------------------------
    def test_load_missing_file(self):
        self.assertEqual('', load_string(self.path('missing.txt')))


#==============================================================================
class TestLog(TestCase):

    # --------------------------------------------------------------------------
    def tearDown(self):
        log.uninstall()

    # --------------------------------------------------------------------------
    def test_level_of(self):
        self.assertEqual(logging.DEBUG, log.level_of('debug'))
        self.assertEqual(logging.WARNING, log.level_of(' WARNING '))
        self.assertEqual(logging.ERROR, log.level_of(logging.ERROR))
        self.assertEqual(logging.INFO, log.level_of('chatty'))

    # --------------------------------------------------------------------------
    def test_install_twice(self):
        log.install('ERROR')
        self.assertRaises(Exception, log.install, 'ERROR')
        log.uninstall()
        log.install('ERROR')

    # --------------------------------------------------------------------------
    def test_messages_are_concatenated(self):
        logger = logging.getLogger(log.LOGGER_NAME)
        with self.assertLogs(logger, level='DEBUG') as captured:
            log.debug('stored ', 4, ' construct(s) for ', None)
            log.warn('rejected ', 2)
        self.assertEqual(['DEBUG:vulntrace:stored 4 construct(s) for <None>',
                          'WARNING:vulntrace:rejected 2'], captured.output)

    # --------------------------------------------------------------------------
    def test_handle_error_logs_the_traceback(self):
        logger = logging.getLogger(log.LOGGER_NAME)
        with self.assertLogs(logger, level='ERROR') as captured:
            try:
                raise ValueError('boom')
            except ValueError as e:
                log.handle_error(e)
        self.assertIn('ERROR:vulntrace:ValueError: boom', captured.output)
        self.assertTrue(any('Traceback' in line for line in captured.output))
