'''
This module contains all unittests for the MiniJay interpreter and the
trace sinks.

@author: vulntrace developers
'''

import threading
from unittest.loader import TestLoader

import support
from core.errors import (LoadError, MiniJayRuntimeError, SinkError,
                         UnknownEntry)
from core.models import (TraceRecord, parse_app_id, parse_signature,
                         render_signature)
from identity.digest import archive_digest
from minijay import instrumenter, interpreter, tracing
from minijay.interpreter import ProgramBundle, load_archive
from minijay.tracing import TraceMode
from utils.utils import fixed_clock

APP = parse_app_id('t:app:1')
CLOCK = fixed_clock(support.CLOCK)


#==============================================================================
def load_tests(loader, tests, pattern): #pylint: disable=W0613
    ''' Returns all of the testcases in this module as a testsuite '''
    suite = TestLoader().loadTestsFromTestCase(TestInterpreter)
    for case in (TestCaseStudyRun, TestLoading, TestSinks):
        suite.addTests(TestLoader().loadTestsFromTestCase(case))
    return suite


#==============================================================================
class RunnerTestCase(support.ScratchTestCase):
    ''' Runs small programs written into the scratch directory. '''

    def run_source(self, source, mode=TraceMode.DYNAMIC, sink=None,
                   entry='p.main/0', max_steps=None, libraries=()):
        app_dir = support.write_tree(self.path('app'), {'Main.mj': source})
        bundle = ProgramBundle(app_dir, tuple(libraries),
                               parse_signature(entry))
        return interpreter.run(bundle, APP, mode,
                               sink or tracing.memory_sink(), 'run-1', CLOCK,
                               max_steps=max_steps)


#==============================================================================
class TestInterpreter(RunnerTestCase):

    # --------------------------------------------------------------------------
    def test_expressions(self):
        result = self.run_source('''package p;
fn main() {
    print(7 / 2);
    print(-7 / 2);
    print(1 + 2 * 3);
    print("n=" + 5);
    print(true);
    print(nil);
    print(1 == "1");
    print("a" < "b");
    var i = 0;
    while (i < 3) { i = i + 1; }
    print(i);
    print(false && boom());
    print(true || boom());
    return 3;
}
''')
        self.assertEqual('3\n-3\n7\nn=5\ntrue\nnil\nfalse\ntrue\n3\nfalse\n'
                         'true\n', result.stdout)
        self.assertEqual(3, result.exit_status)

    # --------------------------------------------------------------------------
    def test_dispatch_on_the_object_class(self):
        result = self.run_source('''package p;
class Dog { fn speak() { return "woof"; } }
class Cat { fn speak() { return "meow"; } }
class Counter {
    var n = 10;
    init(start) { this.n = this.n + start; }
    fn next() { this.n = this.n + 1; return this.n; }
}
fn say(animal) { print(animal.speak()); }
fn main() {
    say(new Dog());
    say(new Cat());
    var c = new Counter(5);
    c.next();
    print(c.next());
    var d = new Dog();
    print(d == d);
    print(d == new Dog());
}
''')
        self.assertEqual('woof\nmeow\n17\ntrue\nfalse\n', result.stdout)
        self.assertEqual(0, result.exit_status)

    # --------------------------------------------------------------------------
    def test_runtime_errors(self):
        cases = (('fn main() { print("before"); return 1 / 0; }',
                  'division by zero', 'before\n'),
                 ('fn main() { return x; }', "undefined variable 'x'", ''),
                 ('fn f(a) { return a; } fn main() { return f(1, 2); }',
                  'arity mismatch', ''),
                 ('fn main() { return nothing(); }', 'undefined function',
                  ''),
                 ('class A { } fn main() { var a = new A(); a.go(); }',
                  "has no method 'go'", ''),
                 ('fn main() { return 1 + true; }', "bad operands for '+'",
                  ''),
                 ('fn main() { __trace("bad", ""); }', '__trace failed', ''))
        for source, message, stdout in cases:
            with self.assertRaises(MiniJayRuntimeError) as context:
                self.run_source('package p;\n' + source)
            self.assertIn(message, context.exception.message, source)
            self.assertEqual(stdout, context.exception.stdout)
            self.assertEqual('RuntimeError', context.exception.kind)

    # --------------------------------------------------------------------------
    def test_step_limit_and_stack_overflow(self):
        with self.assertRaises(MiniJayRuntimeError) as context:
            self.run_source('package p; fn main() { while (true) { } }',
                            max_steps=100)
        self.assertIn('step limit exceeded', context.exception.message)
        with self.assertRaises(MiniJayRuntimeError) as context:
            self.run_source('package p; fn f(n) { return f(n + 1); }\n'
                            'fn main() { return f(0); }')
        self.assertIn('stack overflow', context.exception.message)

    # --------------------------------------------------------------------------
    def test_unknown_entry(self):
        source = 'package p; fn helper(x) { return x; } fn main() { }'
        for entry in ('p.missing/0', 'p.helper/1', 'q.main/0'):
            self.assertRaises(UnknownEntry, self.run_source, source,
                              entry=entry)

    # --------------------------------------------------------------------------
    def test_first_invocation_only(self):
        result = self.run_source('''package p;
fn tick(i) { return i + 1; }
fn main() {
    var i = 0;
    while (i < 1000) { i = tick(i); }
    return 0;
}
''')
        self.assertEqual(['p.main/0', 'p.tick/1'], sorted(
            render_signature(r.signature) for r in result.records))
        self.assertEqual(1000, result.entry_counts[
            parse_signature('p.tick/1')])
        for record in result.records:
            self.assertEqual(support.CLOCK, record.first_seen)
            self.assertEqual('run-1', record.run_id)
            self.assertEqual(None, record.digest)

    # --------------------------------------------------------------------------
    def test_trace_builtin(self):
        result = self.run_source('''package p;
fn main() {
    __trace("p.main/0", "");
    __trace("lib.Thing.init/2", "''' + support.DIGEST_122 + '''");
    __trace("p.main/0", "");
    return 0;
}
''', mode=TraceMode.OFF)
        self.assertEqual([('lib.Thing.init/2', support.DIGEST_122),
                          ('p.main/0', None)],
                         sorted((render_signature(r.signature), r.digest)
                                for r in result.records))

    # --------------------------------------------------------------------------
    def test_tracing_off(self):
        source = 'package p; fn main() { print("hi"); return 0; }'
        off = self.run_source(source, mode=TraceMode.OFF)
        on = self.run_source(source)
        self.assertEqual((), off.records)
        self.assertEqual(on.stdout, off.stdout)
        self.assertEqual(1, len(on.records))


#==============================================================================
class TestCaseStudyRun(RunnerTestCase):

    def __run(self, mode=TraceMode.DYNAMIC, app_dir=support.APP_DIR,
              library=support.ARCHIVE_122, digest=None, sink=None):
        bundle = ProgramBundle(app_dir, ((library, digest),),
                               parse_signature(support.ENTRY))
        return interpreter.run(bundle, parse_app_id(support.APP_ID), mode,
                               sink or tracing.memory_sink(), 'run-1', CLOCK)

    # --------------------------------------------------------------------------
    def test_upload_path(self):
        result = self.__run()
        self.assertEqual('uploaded payload\n', result.stdout)
        self.assertEqual(0, result.exit_status)
        self.assertEqual(support.TESTAPP_TRACED, sorted(
            render_signature(r.signature) for r in result.records))
        by_sig = {render_signature(r.signature): r for r in result.records}
        self.assertEqual(support.DIGEST_122,
                         by_sig[support.FIX_SIGNATURE].digest)
        self.assertEqual(None, by_sig[support.ENTRY].digest)
        self.assertEqual(len(result.entry_counts), len(result.records))

    # --------------------------------------------------------------------------
    def test_deterministic(self):
        self.assertEqual(self.__run(), self.__run())

    # --------------------------------------------------------------------------
    def test_static_and_dynamic_traces_agree(self):
        instrumenter.instrument_tree(support.APP_DIR, self.path('app'))
        instrumenter.instrument_tree(support.ARCHIVE_122, self.path('lib'),
                                     support.DIGEST_122)
        static = self.__run(TraceMode.OFF, self.path('app'), self.path('lib'),
                            support.DIGEST_122)
        dynamic = self.__run()
        self.assertEqual(dynamic.stdout, static.stdout)
        self.assertEqual({(r.signature, r.digest) for r in dynamic.records},
                         {(r.signature, r.digest) for r in static.records})

    # --------------------------------------------------------------------------
    def test_fixed_release(self):
        result = self.__run(library=support.ARCHIVE_131)
        self.assertEqual('uploaded payload\n', result.stdout)
        by_sig = {render_signature(r.signature): r for r in result.records}
        self.assertEqual(support.DIGEST_131,
                         by_sig[support.FIX_SIGNATURE].digest)


#==============================================================================
class TestLoading(RunnerTestCase):

    # --------------------------------------------------------------------------
    def test_load_archive(self):
        constructs, digest = load_archive(support.ARCHIVE_122)
        self.assertEqual(5, len(constructs))
        self.assertEqual(archive_digest(support.ARCHIVE_122), digest)
        self.assertEqual(support.SHA256_122,
                         load_archive(support.ARCHIVE_122, 'sha256')[1])

    # --------------------------------------------------------------------------
    def test_empty_archive(self):
        support.write_tree(self.tmp, {'empty/README': 'no sources'})
        self.assertRaises(LoadError, load_archive, self.path('empty'))
        self.assertRaises(LoadError, load_archive, self.path('missing'))

    # --------------------------------------------------------------------------
    def test_unparsable_archive(self):
        support.write_tree(self.tmp, {'bad/A.mj': 'fn f( {'})
        self.assertRaises(LoadError, load_archive, self.path('bad'))

    # --------------------------------------------------------------------------
    def test_collisions_name_both_archives(self):
        source = 'package lib; class A { fn f() { } }'
        support.write_tree(self.tmp, {'one/A.mj': source, 'two/A.mj': source})
        with self.assertRaises(LoadError) as context:
            self.run_source('package p; fn main() { }', libraries=(
                (self.path('one'), None), (self.path('two'), None)))
        self.assertIn(self.path('one'), context.exception.message)
        self.assertIn(self.path('two'), context.exception.message)

    # --------------------------------------------------------------------------
    def test_library_functions_by_package(self):
        support.write_tree(self.tmp, {
            'util/Util.mj': 'package acme.util; fn twice(x) { return 2 * x; }'})
        result = self.run_source(
            'package p; fn main() { print(acme.util.twice(21)); }',
            libraries=((self.path('util'), None),))
        self.assertEqual('42\n', result.stdout)
        digest = archive_digest(self.path('util'))
        self.assertIn((parse_signature('acme.util.twice/1'), digest),
                      {(r.signature, r.digest) for r in result.records})


#==============================================================================
class _Connection(object):
    ''' Stands in for the service connection. '''

    def __init__(self, failing=False):
        self.failing = failing
        self.posted = []

    def post_traces(self, app_s, lines):
        if self.failing:
            raise SinkError('service unreachable')
        self.posted.append((app_s, list(lines)))
        return {'accepted': len(lines), 'applied': len(lines), 'errors': []}


#==============================================================================
class TestSinks(RunnerTestCase):

    SOURCE = 'package p; fn f() { } fn main() { f(); f(); return 0; }'

    # --------------------------------------------------------------------------
    def test_memory_sink_drops_repeats(self):
        sink = tracing.memory_sink()
        first = self.run_source(TestSinks.SOURCE, sink=sink)
        again = self.run_source(TestSinks.SOURCE, sink=sink)
        self.assertEqual(2, len(first.records))
        self.assertEqual((), again.records)
        self.assertEqual(2, len(sink.records))
        self.assertFalse(sink.emit(first.records[0]))

    # --------------------------------------------------------------------------
    def test_emits_from_several_threads(self):
        sink = tracing.memory_sink()
        records = [TraceRecord(APP, parse_signature('p.f{0}/0'.format(n)),
                               None, support.CLOCK, 'run-1')
                   for n in range(200)]
        accepted, unseen = [], []

        def emit_all(offset):
            for record in records[offset:] + records[:offset]:
                accepted.append(sink.emit(record))
                if not sink.has_seen(record.app, record.signature):
                    unseen.append(record)

        threads = [threading.Thread(target=emit_all, args=(n * 50,))
                   for n in range(4)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        self.assertEqual(200, accepted.count(True))
        self.assertEqual(800, len(accepted))
        self.assertEqual([], unseen)
        names = [sorted(render_signature(r.signature) for r in batch)
                 for batch in (records, sink.records)]
        self.assertEqual(names[0], names[1])

    # --------------------------------------------------------------------------
    def test_file_sink(self):
        path = self.path('traces', 'run.jsonl')
        result = self.run_source(TestSinks.SOURCE,
                                 sink=tracing.file_sink(path))
        records, errors = tracing.read_trace_file(path)
        self.assertEqual(list(result.records), records)
        self.assertEqual([], errors)
        with open(path, 'a', encoding='utf-8') as f:
            f.write('not json\n\n')
        records, errors = tracing.read_trace_file(path)
        self.assertEqual(2, len(records))
        self.assertEqual([3], [n for n, _ in errors])

    # --------------------------------------------------------------------------
    def test_service_sink(self):
        connection = _Connection()
        sink = tracing.service_sink('http://127.0.0.1:1', connection=connection)
        result = self.run_source(TestSinks.SOURCE, sink=sink)
        self.assertEqual([('t:app:1', [r.to_line() for r in result.records])],
                         connection.posted)
        self.assertEqual(0, sink.spilled_n)

    # --------------------------------------------------------------------------
    def test_unreachable_service_spills(self):
        spill = self.path('spill.jsonl')
        sink = tracing.service_sink('http://127.0.0.1:1', spill,
                                    _Connection(failing=True))
        result = self.run_source(TestSinks.SOURCE, sink=sink)
        self.assertEqual(0, result.exit_status)
        self.assertEqual(2, sink.spilled_n)
        records, _ = tracing.read_trace_file(spill)
        self.assertEqual(list(result.records), records)

    # --------------------------------------------------------------------------
    def test_failed_run_still_flushes(self):
        path = self.path('partial.jsonl')
        self.assertRaises(MiniJayRuntimeError, self.run_source,
                          'package p; fn main() { return 1 / 0; }',
                          sink=tracing.file_sink(path))
        records, _ = tracing.read_trace_file(path)
        self.assertEqual(['p.main/0'],
                         [render_signature(r.signature) for r in records])
