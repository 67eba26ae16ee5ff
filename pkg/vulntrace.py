#!/usr/bin/env python3
# -*- coding: utf-8 -*-
'''
vulntrace command line tool

Runs the steps of the vulnerability assessment pipeline one at a time, so
that developers and build systems can call them:

    extract       list the constructs of a MiniJay source tree
    instrument    add trace statements to a source tree
    run           run an application, tracing the constructs it executes
    patch-diff    compute the change-list of a fix revision
    discover-fix  find the revisions that fix a vulnerability
    resolve       identify a library archive and its affectedness
    ingest        upload constructs, traces, change-lists, ... to the engine
    assess        compute verdicts for an application
    coverage      show which of an application's constructs were traced
    archives      list the archives an application declares or loaded
    report        render an application's report (JSON or HTML)
    serve         run the ingest service
    import-git    build a revision store from a git repository

Usage:
    python vulntrace.py --state state.json patch-diff --store fixtures/fileupload
        --fix r4 --lib acme:fileupload --vuln VULN-0050 --upload
    python vulntrace.py --state state.json assess --app com.acme:testapp:0.1

Results are printed to stdout as JSON; diagnostics go to stderr.  Exit
status is 0 on success, 1 when a domain error occurs (printed to stderr as
{"error": kind, "message": ...}) and 2 on usage errors.

@author: vulntrace developers
'''

import argparse
import json
import os
import sys

# Add src/py to path
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)),
                                'src', 'py'))

try:
    from core.errors import ConfigError, UnknownVuln, VulnTraceError
    from core.models import (ChangeList, LibraryRelease, parse_app_id,
                             parse_library_id, parse_signature,
                             render_signature)
    from identity.cpe import cpe_matches, is_version_affected
    from identity.digest import archive_digest
    from identity.index import load_package_index, lookup_digest
    from identity.vulnrecords import load_vulnerability_records
    from minijay import extractor, instrumenter, interpreter, tracing
    from patches import analyzer, revstore, vcsimport
    from service.backend import open_backend
    from utils import log
    from utils.configuration import Configuration
    from utils.utils import load_string, persist_string, sstr
except ImportError as e:
    sys.stderr.write("Error importing modules: {0}\n".format(e))
    sys.stderr.write("Make sure the requirements are installed and src/py "
                     "is complete\n")
    sys.exit(2)

EXIT_OK = 0
EXIT_DOMAIN_ERROR = 1
EXIT_USAGE_ERROR = 2


class UsageError(Exception):
    ''' A missing or conflicting command line option. '''


#==============================================================================
class VulnTraceTool(object):
    '''
    One method per subcommand.  Each takes the parsed arguments and returns
    the JSON-friendly result to print (or a string to print as it is).
    '''

    def __init__(self, configuration):
        self.config = configuration
        self.__backend = None

    # ---- helpers ------------------------------------------------------------

    def backend(self):
        ''' The engine to upload to and read from (state file or service). '''
        if self.__backend is None:
            try:
                self.config.check_sink()
            except ConfigError as e:
                raise UsageError(e.message)
            self.__backend = open_backend(self.config)
        return self.__backend

    def close(self):
        if self.__backend is not None:
            self.__backend.close()

    def __need(self, value, flag_s):
        if not value:
            raise UsageError('missing required option ' + flag_s)
        return value

    def __app(self, args):
        return parse_app_id(self.__need(getattr(args, 'app', None) or
                                        self.config.app_s, '--app'))

    def __vulns(self, args):
        return load_vulnerability_records(self.__need(
            getattr(args, 'vulns', None) or self.config.vulns_s, '--vulns'))

    def __vuln(self, args):
        records = self.__vulns(args)
        if args.vuln not in records:
            raise UnknownVuln('no record for ' + args.vuln)
        return records[args.vuln]

    def __store(self, args):
        return revstore.load_revision_store(self.__need(
            args.store or self.config.store_s, '--store'))

    # ---- subcommands --------------------------------------------------------

    def extract(self, args):
        sources = self.__need(args.sources or self.config.sources_s,
                              '--sources')
        constructs = extractor.extract_tree(sources)
        signatures = sorted(render_signature(c.signature) for c in constructs)
        result = {'sources': sources, 'constructs': signatures}
        if args.archive:
            result['digest'] = archive_digest(sources,
                                              self.config.digest_algorithm_s)
        if args.upload:
            if args.archive:
                self.backend().put_archive_constructs(result['digest'],
                                                      signatures)
            else:
                app = self.__app(args)
                result['app'] = str(app)
                self.backend().put_constructs(app, signatures)
        return result

    def instrument(self, args):
        sources = self.__need(args.sources or self.config.sources_s,
                              '--sources')
        digest = args.digest
        if args.archive:
            digest = archive_digest(sources, self.config.digest_algorithm_s)
        written = instrumenter.instrument_tree(sources, args.out, digest)
        return {'out': args.out, 'digest': digest, 'files': written}

    def run(self, args):
        sources = self.__need(args.sources or self.config.sources_s,
                              '--sources')
        libraries = args.lib or self.config.libraries_sl
        bundle = interpreter.ProgramBundle(
            sources, tuple((lib, None) for lib in libraries),
            parse_signature(args.entry))
        clock = self.config.get_clock()
        run_id = args.run_id or interpreter.default_run_id(clock)
        if not args.run_id and self.config.clock_s:
            # reproducible output under a fixed clock
            run_id = 'run-' + self.config.clock_s
        sink = self.__sink(args)
        mode = tracing.TraceMode(args.trace.upper())
        result = interpreter.run(bundle, self.__app(args), mode, sink, run_id,
                                 clock, self.config.digest_algorithm_s,
                                 args.max_steps)
        return {'runId': run_id, 'stdout': result.stdout,
                'exitStatus': result.exit_status,
                'records': [r.to_dict() for r in result.records],
                'spilled': sink.spilled_n}

    def __sink(self, args):
        kind = args.sink
        if kind is None:
            kind = 'file' if args.traces else \
                'service' if self.config.service_url_s else 'memory'
        if kind == 'file':
            return tracing.file_sink(self.__need(args.traces, '--traces'))
        if kind == 'service':
            return tracing.service_sink(
                self.__need(self.config.service_url_s, '--service'),
                self.config.spill_file_s or None)
        return tracing.memory_sink()

    def patch_diff(self, args):
        store = self.__store(args)
        revisions = [r.strip() for r in args.fix.split(',') if r.strip()]
        if not revisions:
            raise UsageError('--fix names no revision')
        change_list = analyzer.compute_fix_change_list(
            store, revisions, parse_library_id(args.lib), args.vuln)
        if args.upload:
            self.backend().put_change_list(change_list)
        return change_list.to_dict()

    def discover_fix(self, args):
        discovery = analyzer.discover_fix_revisions(self.__vuln(args),
                                                    self.__store(args))
        return discovery.to_dict()

    def resolve(self, args):
        index = load_package_index(self.__need(
            args.index or self.config.index_s, '--index'))
        digest = archive_digest(args.archive, self.config.digest_algorithm_s)
        release = lookup_digest(index, digest)
        result = {'archive': args.archive, 'digest': digest,
                  'algorithm': self.config.digest_algorithm_s,
                  'release': release.to_dict() if release else None,
                  'knownVersions': list(index.versions_of(release.library))
                  if release else []}
        if args.vuln:
            vuln = self.__vuln(args)
            tag_result = None
            if args.changelist:
                tag_result = ChangeList.from_dict(json.loads(
                    load_string(args.changelist))).tag_result()
            result['vulnId'] = vuln.vuln_id
            if release is not None:
                result['cpeMatches'] = [m.to_dict() for m in
                                        cpe_matches(vuln, release.library)]
                result['affected'] = is_version_affected(
                    vuln, release, tag_result).value
            else:
                result['cpeMatches'] = []
                result['affected'] = None
        return result

    def ingest(self, args):
        backend = self.backend()
        result = {}
        if args.index or (self.config.index_s and args.all):
            path = args.index or self.config.index_s
            result['index'] = backend.put_index(
                load_package_index(path).releases())
        if args.vulns or (self.config.vulns_s and args.all):
            records = load_vulnerability_records(args.vulns or
                                                 self.config.vulns_s)
            result['vulns'] = backend.put_vulns(
                [records[k] for k in sorted(records)])
        if args.constructs:
            result['constructs'] = backend.put_constructs(
                self.__app(args), self.__read_signatures(args.constructs))
        if args.archives:
            releases = [LibraryRelease.from_dict(r) for r in
                        json.loads(load_string(args.archives))]
            result['archives'] = backend.put_archives(self.__app(args),
                                                      releases)
        for path in args.changelist or ():
            change_list = ChangeList.from_dict(json.loads(load_string(path)))
            result.setdefault('changeLists', []).append(
                backend.put_change_list(change_list))
        if args.traces:
            result['traces'] = backend.post_traces(
                load_string(args.traces).split('\n'))
        if not result:
            raise UsageError('nothing to ingest; give --traces, --constructs, '
                             '--archives, --changelist, --index or --vulns')
        return result

    @staticmethod
    def __read_signatures(path_s):
        ''' A JSON list of signatures, or the output of 'extract'. '''
        data = json.loads(load_string(path_s))
        if isinstance(data, dict):
            data = data.get('constructs', [])
        return [sstr(s) for s in data]

    def assess(self, args):
        return self.backend().assessment(self.__app(args), args.vuln)

    def coverage(self, args):
        return self.backend().coverage(self.__app(args))

    def archives(self, args):
        return self.backend().archives(self.__app(args))

    def report(self, args):
        text = self.backend().report(self.__app(args), args.format)
        if args.output:
            persist_string(text, args.output)
            return {'report': args.output, 'format': args.format}
        return text

    def serve(self, args):
        from service.app import serve
        state = self.__need(self.config.state_file_s, '--state')
        serve(state, args.host, args.port, _uvicorn_level(
            self.config.log_level_s))
        return None

    def import_git(self, args):
        count = vcsimport.import_git_store(args.repo, args.dest)
        return {'store': args.dest, 'revisions': count}


#==============================================================================
def _uvicorn_level(level_s):
    level_s = sstr(level_s).lower()
    return 'warning' if level_s == 'warn' else level_s


#==============================================================================
def build_parser():
    ''' The argument parser of the command line tool. '''
    parser = argparse.ArgumentParser(
        prog='vulntrace',
        description='vulntrace - assess whether an application executes '
                    'the code a security patch changed',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog='''
Examples:
  Change-list of a fix revision:
    vulntrace.py patch-diff --store fileupload --fix r4 --lib acme:fileupload --vuln VULN-0050

  Run an application with dynamic tracing, writing traces to a file:
    vulntrace.py run --app com.acme:testapp:0.1 --sources app --lib fileupload-1.2.2 --entry com.acme.testapp.main/0 --traces traces.jsonl

  Upload the traces and assess:
    vulntrace.py --state state.json ingest --traces traces.jsonl
    vulntrace.py --state state.json assess --app com.acme:testapp:0.1 --vuln VULN-0050
        ''')

    # Global options
    parser.add_argument('--config', help='settings file (KEY = value lines)')
    parser.add_argument('--state', help='engine snapshot file')
    parser.add_argument('--service', help='base URL of an ingest service')
    parser.add_argument('--clock', help='fixed UTC instant, e.g. '
                                        '2014-02-06T10:15:00Z')
    parser.add_argument('--digest-algorithm', choices=('sha1', 'sha256'))
    parser.add_argument('--log-level', help='DEBUG, INFO, WARNING or ERROR')
    parser.add_argument('--verbose', '-v', action='store_true',
                        help='same as --log-level DEBUG')

    subparsers = parser.add_subparsers(dest='command',
                                       help='Command to execute')

    p = subparsers.add_parser('extract', help='list source constructs')
    p.add_argument('--sources', help='MiniJay source tree')
    p.add_argument('--app', help='application id group:artifact:version')
    p.add_argument('--archive', action='store_true',
                   help='the tree is a library archive; report its digest')
    p.add_argument('--upload', action='store_true',
                   help='store the constructs in the engine')

    p = subparsers.add_parser('instrument', help='insert trace statements')
    p.add_argument('--sources', help='MiniJay source tree')
    p.add_argument('--out', required=True, help='target directory')
    p.add_argument('--digest', help='archive digest to put in the traces')
    p.add_argument('--archive', action='store_true',
                   help='use the digest of the source tree itself')

    p = subparsers.add_parser('run', help='run and trace an application')
    p.add_argument('--app', help='application id group:artifact:version')
    p.add_argument('--sources', help='application source tree')
    p.add_argument('--lib', action='append', help='library archive directory '
                                                  '(repeatable)')
    p.add_argument('--entry', required=True,
                   help='signature of the entry function, e.g. pkg.main/0')
    p.add_argument('--trace', choices=('dynamic', 'off'), default='dynamic')
    p.add_argument('--sink', choices=('memory', 'file', 'service'))
    p.add_argument('--traces', help='trace file for the file sink')
    p.add_argument('--run-id', help='run identifier (default: from clock)')
    p.add_argument('--max-steps', type=int, help='abort after this many '
                                                 'evaluation steps')

    p = subparsers.add_parser('patch-diff', help='compute a change-list')
    p.add_argument('--store', help='revision store directory')
    p.add_argument('--fix', required=True,
                   help='fix revision (comma separate several)')
    p.add_argument('--lib', required=True, help='library id group:artifact')
    p.add_argument('--vuln', required=True, help='vulnerability id')
    p.add_argument('--upload', action='store_true',
                   help='store the change-list in the engine')

    p = subparsers.add_parser('discover-fix', help='find fix revisions')
    p.add_argument('--store', help='revision store directory')
    p.add_argument('--vuln', required=True, help='vulnerability id')
    p.add_argument('--vulns', help='vulnerability record file or directory')

    p = subparsers.add_parser('resolve', help='identify a library archive')
    p.add_argument('--archive', required=True, help='archive directory')
    p.add_argument('--index', help='package index (index.tsv)')
    p.add_argument('--vuln', help='also decide affectedness for this id')
    p.add_argument('--vulns', help='vulnerability record file or directory')
    p.add_argument('--changelist', help='change-list JSON with tag data')

    p = subparsers.add_parser('ingest', help='upload data to the engine')
    p.add_argument('--app', help='application id group:artifact:version')
    p.add_argument('--traces', help='trace or spill file')
    p.add_argument('--constructs', help='JSON signature list (or extract '
                                        'output)')
    p.add_argument('--archives', help='JSON list of declared releases')
    p.add_argument('--changelist', action='append',
                   help='change-list JSON file (repeatable)')
    p.add_argument('--index', help='package index (index.tsv)')
    p.add_argument('--vulns', help='vulnerability record file or directory')
    p.add_argument('--all', action='store_true',
                   help='also upload INDEX and VULNS from the settings')

    p = subparsers.add_parser('assess', help='compute verdicts')
    p.add_argument('--app', help='application id group:artifact:version')
    p.add_argument('--vuln', help='one vulnerability id (default: all)')

    p = subparsers.add_parser('coverage', help='per-package and per-archive '
                                               'trace coverage')
    p.add_argument('--app', help='application id group:artifact:version')

    p = subparsers.add_parser('archives', help='declared and traced archives')
    p.add_argument('--app', help='application id group:artifact:version')

    p = subparsers.add_parser('report', help='render a report')
    p.add_argument('--app', help='application id group:artifact:version')
    p.add_argument('--format', choices=('json', 'html'), default='json')
    p.add_argument('-o', '--output', help='write the report to this file')

    p = subparsers.add_parser('serve', help='run the ingest service')
    p.add_argument('--host', default='127.0.0.1')
    p.add_argument('--port', type=int, default=8642)

    p = subparsers.add_parser('import-git', help='build a revision store '
                                                 'from a git repository')
    p.add_argument('--repo', required=True, help='git working copy')
    p.add_argument('--dest', required=True, help='new store directory')
    return parser


#==============================================================================
def configure(args, environ=None):
    '''
    Builds the Configuration: defaults, then the settings file, then the
    environment, then the command line.
    '''
    config = Configuration()
    if args.config:
        config.load_file(args.config)
    config.load_environment(environ)
    if args.state:
        config.state_file_s = args.state
    if args.service:
        config.service_url_s = args.service
    if args.clock:
        config.set_clock(args.clock)
    if args.digest_algorithm:
        config.set_digest_algorithm(args.digest_algorithm)
    if args.log_level:
        config.log_level_s = args.log_level.upper()
    if args.verbose:
        config.log_level_s = 'DEBUG'
    return config


#==============================================================================
def print_result(result, out=None):
    out = out or sys.stdout
    if result is None:
        return
    if isinstance(result, str):
        out.write(result if result.endswith('\n') else result + '\n')
    else:
        out.write(json.dumps(result, sort_keys=True, indent=2,
                             ensure_ascii=False) + '\n')


#==============================================================================
def main(argv=None, environ=None):
    '''Main entry point; returns the exit status.'''
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE_ERROR

    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE_ERROR

    try:
        config = configure(args, environ)
    except VulnTraceError as e:
        sys.stderr.write(json.dumps(e.to_dict()) + '\n')
        return EXIT_USAGE_ERROR

    log.install(config.log_level_s)
    tool = VulnTraceTool(config)
    try:
        method = getattr(tool, args.command.replace('-', '_'))
        print_result(method(args))
        tool.close()
        return EXIT_OK
    except UsageError as e:
        sys.stderr.write('vulntrace {0}: error: {1}\n'.format(args.command,
                                                                sstr(e)))
        return EXIT_USAGE_ERROR
    except VulnTraceError as e:
        log.debug_exc()
        sys.stderr.write(json.dumps(e.to_dict(), ensure_ascii=False) + '\n')
        return EXIT_DOMAIN_ERROR
    except KeyboardInterrupt:
        sys.stderr.write('\nInterrupted by user\n')
        return EXIT_DOMAIN_ERROR
    except (OSError, ValueError) as e:
        log.handle_error(e)
        sys.stderr.write(json.dumps({'error': 'IoError',
                                     'message': sstr(e)}) + '\n')
        return EXIT_DOMAIN_ERROR
    finally:
        log.uninstall()


if __name__ == '__main__':
    sys.exit(main())
