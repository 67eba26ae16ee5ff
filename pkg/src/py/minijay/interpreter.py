'''
Tree-walking interpreter for MiniJay, with built-in tracing.

Evaluation rules:

 - values are integers, strings, true/false, nil and class instances
 - expressions evaluate strictly left to right; '&&' and '||' short-circuit
 - only 'false' and 'nil' are falsy
 - '+' concatenates when either side is a string, otherwise adds integers;
   '/' truncates toward zero and dividing by zero is an error
 - '==' compares primitives by value and instances by identity
 - 'x.m(...)' dispatches on the class of the object in 'x'; 'a.b.f(...)' with
   'a' not a local variable calls the function 'f' of package 'a.b'
 - a plain 'f(...)' calls a builtin, else 'f' of the current package, else
   the only function called 'f' with that arity anywhere in the program
 - 'new C(...)' initializes the fields in declaration order and then runs
   the constructor with the matching arity (a class without constructors
   takes no arguments)
 - 'print(x)' writes a line to stdout; '__trace(sig, digest)' reports a
   construct entry exactly like dynamic tracing does

With TraceMode.DYNAMIC every construct entry is reported to the sink.  The
sink drops repeats, so only first invocations produce records.

@author: vulntrace developers
'''

import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Tuple

from core.errors import (DuplicateConstruct, LexError, LoadError,
                         MalformedSignature, MiniJayRuntimeError, ParseError,
                         UnknownEntry, VulnTraceError)
from core.models import (ConstructKind, ConstructSignature, TraceRecord,
                         parse_signature, render_signature)
from identity.digest import archive_digest
from minijay import extractor, parser
from minijay.tracing import TRACE_BUILTIN, TraceMode
from utils import log
from utils.utils import format_instant, sstr, utc_now

PRINT_BUILTIN = 'print'


#==============================================================================
@dataclass(frozen=True)
class ProgramBundle:
    '''
    An application source tree, the library archives bundled with it (each
    a directory and its digest, or None to compute the digest), and the
    signature of the application function to start with.
    '''
    app_sources: str
    libraries: Tuple[Tuple[str, Optional[str]], ...] = ()
    entry: Optional[ConstructSignature] = None


#==============================================================================
@dataclass(frozen=True)
class RunResult:
    stdout: str
    exit_status: int
    records: Tuple[TraceRecord, ...]
    # how often each construct was entered
    entry_counts: Counter = field(compare=False, default_factory=Counter)


#==============================================================================
@dataclass
class LoadedConstruct:
    signature: ConstructSignature
    declaration: parser.FuncDecl
    digest: Optional[str]  # None for application code
    origin: str  # the directory the construct was loaded from


#==============================================================================
@dataclass
class ClassInfo:
    package: str
    path: Tuple[str, ...]  # enclosing classes plus the class itself
    fields: Tuple[parser.FieldDecl, ...]
    origin: str
    methods: dict = field(default_factory=dict)  # (name, arity) -> construct

    qualified_name = property(lambda self: '.'.join(
        ([self.package] if self.package else []) + list(self.path)))


#==============================================================================
class Instance(object):
    def __init__(self, cls):
        self.cls = cls
        self.fields = {}

    def __repr__(self):
        return '<' + self.cls.qualified_name + '>'


#==============================================================================
class Program(object):
    ''' The loaded constructs and classes of a bundle. '''

    def __init__(self):
        self.constructs = {}  # signature -> LoadedConstruct
        self.classes = {}  # qualified name -> ClassInfo
        self.functions_by_name = {}  # (name, arity) -> [LoadedConstruct]
        self.app_signatures = set()

    #==========================================================================
    def add_units(self, units, digest_s, origin_s):
        for unit in units:
            for container, decl in parser.iter_classes(unit):
                info = ClassInfo(unit.package, container + (decl.name,),
                                 tuple(m for m in decl.members
                                       if isinstance(m, parser.FieldDecl)),
                                 origin_s)
                other = self.classes.get(info.qualified_name)
                if other is not None:
                    raise LoadError("class '{0}' is declared in both {1} and "
                                    "{2}".format(info.qualified_name,
                                                 other.origin, origin_s))
                self.classes[info.qualified_name] = info
        for construct in extractor.extract_units(units):
            sig = construct.signature
            other = self.constructs.get(sig)
            if other is not None:
                raise LoadError("'{0}' is declared in both {1} and {2}".format(
                    render_signature(sig), other.origin, origin_s))
            loaded = LoadedConstruct(sig, construct.declaration, digest_s,
                                     origin_s)
            self.constructs[sig] = loaded
            if sig.kind == ConstructKind.FUNC:
                self.functions_by_name.setdefault(
                    (sig.name, sig.arity), []).append(loaded)
            else:
                qualified = '.'.join(([sig.package] if sig.package else []) +
                                     list(sig.container))
                self.classes[qualified].methods[(sig.name, sig.arity)] = loaded
            if digest_s is None:
                self.app_signatures.add(sig)


#==============================================================================
def __parse_for_load(root_s):
    try:
        units = extractor.parse_tree(root_s)
    except (LexError, ParseError) as e:
        raise LoadError('cannot load {0}: {1}'.format(root_s, e.message))
    if not units:
        raise LoadError('no MiniJay files in ' + root_s)
    return units


#==============================================================================
def load_archive(root_s, algorithm_s='sha1'):
    '''
    Loads a library archive directory.  Returns (constructs, digest) where
    constructs is the list of ExtractedConstructs.
    '''
    units = __parse_for_load(root_s)
    try:
        constructs = extractor.extract_units(units)
    except DuplicateConstruct as e:
        raise LoadError('cannot load {0}: {1}'.format(root_s, e.message))
    return constructs, archive_digest(root_s, algorithm_s)


#==============================================================================
def load_bundle(bundle, algorithm_s='sha1'):
    ''' Loads the application and all libraries of a bundle into a Program. '''
    program = Program()
    try:
        program.add_units(__parse_for_load(bundle.app_sources), None,
                          bundle.app_sources)
        for root_s, digest_s in bundle.libraries:
            units = __parse_for_load(root_s)
            if digest_s is None:
                digest_s = archive_digest(root_s, algorithm_s)
            program.add_units(units, digest_s, root_s)
    except DuplicateConstruct as e:
        raise LoadError(e.message)
    log.debug('loaded ', len(program.constructs), ' construct(s) from ',
              1 + len(bundle.libraries), ' source tree(s)')
    return program


#==============================================================================
class _Return(Exception):
    def __init__(self, value):
        super(_Return, self).__init__()
        self.value = value


#==============================================================================
class _Frame(object):
    def __init__(self, package_s, path, variables):
        self.package = package_s
        self.path = path  # enclosing class path, for resolving 'new'
        self.variables = variables


#==============================================================================
def display(value):
    ''' The text print() writes for a value. '''
    if value is True:
        return 'true'
    if value is False:
        return 'false'
    if value is None:
        return 'nil'
    return sstr(value)


#==============================================================================
def truthy(value):
    return value is not False and value is not None


#==============================================================================
def is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


#==============================================================================
class Interpreter(object):
    '''
    Runs one program.  One instance is single-threaded; 'entry_counts'
    counts how often each construct was entered.
    '''

    #==========================================================================
    def __init__(self, program, app, trace_mode, sink, run_id_s,
                 clock=utc_now, max_steps=None):
        self.__program = program
        self.__app = app
        self.__trace_mode = trace_mode
        self.__sink = sink
        self.__run_id = run_id_s
        self.__clock = clock
        self.__max_steps = max_steps
        self.__steps = 0
        self.__out = []
        self.emitted = []
        self.entry_counts = Counter()

    stdout = property(lambda self: ''.join(self.__out))

    #==========================================================================
    def run_entry(self, entry):
        ''' Calls the given entry function; returns its exit status. '''
        construct = self.__program.constructs.get(entry)
        if construct is None or entry not in self.__program.app_signatures \
                or entry.kind != ConstructKind.FUNC:
            raise UnknownEntry("no application function '{0}'".format(
                render_signature(entry)))
        if entry.arity != 0:
            raise UnknownEntry("entry '{0}' must take no arguments".format(
                render_signature(entry)))
        try:
            result = self.__invoke(construct, None, [])
        except RecursionError:
            raise MiniJayRuntimeError('stack overflow', self.stdout)
        except MiniJayRuntimeError as e:
            raise MiniJayRuntimeError(e.message, self.stdout)
        return result if is_int(result) else 0

    # ---- tracing ------------------------------------------------------------

    def __trace(self, signature, digest_s):
        if self.__sink.has_seen(self.__app, signature):
            return
        record = TraceRecord(self.__app, signature, digest_s or None,
                             format_instant(self.__clock()), self.__run_id)
        if self.__sink.emit(record):
            self.emitted.append(record)

    def __trace_builtin(self, args, node):
        sig_s, digest_s = args
        if not isinstance(sig_s, str) or not isinstance(digest_s, str):
            self.__fail(TRACE_BUILTIN + ' takes two strings', node)
        try:
            signature = parse_signature(sig_s)
            self.__trace(signature, digest_s)
        except VulnTraceError as e:
            self.__fail('{0} failed: {1}'.format(TRACE_BUILTIN, e.message),
                        node)
        return None

    # ---- calls --------------------------------------------------------------

    def __invoke(self, construct, this, args):
        sig = construct.signature
        self.entry_counts[sig] += 1
        if self.__trace_mode == TraceMode.DYNAMIC:
            self.__trace(sig, construct.digest)
        decl = construct.declaration
        variables = dict(zip(decl.params, args))
        path = sig.container
        if this is not None:
            variables['this'] = this
        frame = _Frame(sig.package, path, variables)
        try:
            self.__block(decl.body, frame)
        except _Return as r:
            return r.value
        return None

    def __fail(self, message_s, node):
        line = getattr(node, 'line', 0)
        raise MiniJayRuntimeError('line {0}: {1}'.format(line, message_s))

    def __call_function(self, frame, name_s, args, node):
        ''' Resolves a plain function name (see the module comment). '''
        program = self.__program
        own = ConstructSignature.of(frame.package, (), name_s, len(args))
        if own in program.constructs:
            return self.__invoke(program.constructs[own], None, args)
        candidates = program.functions_by_name.get((name_s, len(args)), [])
        if len(candidates) == 1:
            return self.__invoke(candidates[0], None, args)
        if len(candidates) > 1:
            self.__fail("ambiguous function '{0}/{1}'".format(
                name_s, len(args)), node)
        if any(name == name_s for name, _ in program.functions_by_name):
            self.__fail("arity mismatch calling '{0}' with {1} argument(s)"
                        .format(name_s, len(args)), node)
        self.__fail("undefined function '" + name_s + "'", node)

    def __call_qualified(self, path, args, node):
        package_s = '.'.join(path[:-1])
        try:
            sig = ConstructSignature.of(package_s, (), path[-1], len(args))
        except MalformedSignature:
            sig = None
        construct = self.__program.constructs.get(sig) if sig else None
        if construct is None:
            self.__fail("undefined function '{0}/{1}'".format(
                '.'.join(path), len(args)), node)
        return self.__invoke(construct, None, args)

    def __call_method(self, target, name_s, args, node):
        if not isinstance(target, Instance):
            self.__fail("cannot call '{0}' on {1}".format(
                name_s, display(target)), node)
        construct = target.cls.methods.get((name_s, len(args)))
        if construct is None or name_s == 'init':
            if any(n == name_s for n, _ in target.cls.methods):
                self.__fail("arity mismatch calling '{0}' with {1} "
                            "argument(s)".format(name_s, len(args)), node)
            self.__fail("{0} has no method '{1}'".format(
                target.cls.qualified_name, name_s), node)
        return self.__invoke(construct, target, args)

    def __resolve_class(self, frame, qualified, node):
        classes = self.__program.classes
        joined = '.'.join(qualified)
        if joined in classes:
            return classes[joined]
        prefixes = []
        path = list(frame.path)
        while True:
            prefixes.append('.'.join(([frame.package] if frame.package else [])
                                     + path))
            if not path:
                break
            path.pop()
        for prefix in prefixes:
            name = prefix + '.' + joined if prefix else joined
            if name in classes:
                return classes[name]
        matches = [info for name, info in classes.items()
                   if name.endswith('.' + joined)]
        if len(matches) == 1:
            return matches[0]
        self.__fail("{0} class '{1}'".format(
            'ambiguous' if matches else 'undefined', joined), node)

    def __construct(self, frame, node):
        info = self.__resolve_class(frame, node.qualified, node)
        args = [self.__eval(a, frame) for a in node.args]
        instance = Instance(info)
        field_frame = _Frame(info.package, info.path, {'this': instance})
        for decl in info.fields:
            instance.fields[decl.name] = None if decl.init is None \
                else self.__eval(decl.init, field_frame)
        ctor = info.methods.get(('init', len(args)))
        if ctor is not None:
            self.__invoke(ctor, instance, args)
        elif args or any(n == 'init' for n, _ in info.methods):
            self.__fail("{0} has no constructor taking {1} argument(s)"
                        .format(info.qualified_name, len(args)), node)
        return instance

    def __call(self, node, frame):
        callee = node.callee
        if isinstance(callee, parser.Name):
            args = [self.__eval(a, frame) for a in node.args]
            if callee.ident == PRINT_BUILTIN and len(args) == 1:
                self.__out.append(display(args[0]) + '\n')
                return None
            if callee.ident == TRACE_BUILTIN and len(args) == 2:
                return self.__trace_builtin(args, node)
            return self.__call_function(frame, callee.ident, args, node)
        if isinstance(callee, parser.FieldAccess):
            path = self.__name_path(callee)
            if path is not None and path[0] not in frame.variables:
                args = [self.__eval(a, frame) for a in node.args]
                return self.__call_qualified(path, args, node)
            target = self.__eval(callee.target, frame)
            args = [self.__eval(a, frame) for a in node.args]
            return self.__call_method(target, callee.name, args, node)
        self.__fail('expression is not callable', node)

    @staticmethod
    def __name_path(expr):
        ''' ('a', 'b', 'c') for the expression a.b.c, else None. '''
        names = []
        while isinstance(expr, parser.FieldAccess):
            names.append(expr.name)
            expr = expr.target
        if not isinstance(expr, parser.Name):
            return None
        names.append(expr.ident)
        return tuple(reversed(names))

    # ---- statements ---------------------------------------------------------

    def __tick(self, node):
        self.__steps += 1
        if self.__max_steps is not None and self.__steps > self.__max_steps:
            self.__fail('step limit exceeded', node)

    def __block(self, block, frame):
        for statement in block.statements:
            self.__statement(statement, frame)

    def __statement(self, node, frame):
        self.__tick(node)
        if isinstance(node, parser.ExprStmt):
            self.__eval(node.expr, frame)
        elif isinstance(node, parser.VarStmt):
            frame.variables[node.name] = None if node.init is None \
                else self.__eval(node.init, frame)
        elif isinstance(node, parser.AssignStmt):
            self.__assign(node, frame)
        elif isinstance(node, parser.IfStmt):
            if truthy(self.__eval(node.condition, frame)):
                self.__block(node.then_block, frame)
            elif node.else_block is not None:
                self.__block(node.else_block, frame)
        elif isinstance(node, parser.WhileStmt):
            while truthy(self.__eval(node.condition, frame)):
                self.__tick(node)
                self.__block(node.body, frame)
        elif isinstance(node, parser.ReturnStmt):
            raise _Return(None if node.value is None
                          else self.__eval(node.value, frame))

    def __assign(self, node, frame):
        value = self.__eval(node.value, frame)
        head = node.target[0]
        if head not in frame.variables:
            self.__fail("undefined variable '" + head + "'", node)
        if len(node.target) == 1:
            frame.variables[head] = value
            return
        target = frame.variables[head]
        for name in node.target[1:-1]:
            target = self.__get_field(target, name, node)
        if not isinstance(target, Instance):
            self.__fail("cannot set field '{0}' on {1}".format(
                node.target[-1], display(target)), node)
        if node.target[-1] not in target.fields:
            self.__fail("{0} has no field '{1}'".format(
                target.cls.qualified_name, node.target[-1]), node)
        target.fields[node.target[-1]] = value

    # ---- expressions --------------------------------------------------------

    def __get_field(self, target, name_s, node):
        if not isinstance(target, Instance) or name_s not in target.fields:
            self.__fail("no field '{0}' on {1}".format(
                name_s, display(target)), node)
        return target.fields[name_s]

    def __eval(self, node, frame):
        if isinstance(node, parser.Literal):
            return node.value
        if isinstance(node, parser.Name):
            if node.ident not in frame.variables:
                self.__fail("undefined variable '" + node.ident + "'", node)
            return frame.variables[node.ident]
        if isinstance(node, parser.FieldAccess):
            return self.__get_field(self.__eval(node.target, frame),
                                    node.name, node)
        if isinstance(node, parser.Call):
            return self.__call(node, frame)
        if isinstance(node, parser.New):
            return self.__construct(frame, node)
        if isinstance(node, parser.Unary):
            value = self.__eval(node.operand, frame)
            if node.op == '!':
                return not truthy(value)
            if not is_int(value):
                self.__fail("cannot negate " + display(value), node)
            return -value
        if isinstance(node, parser.Binary):
            return self.__binary(node, frame)
        self.__fail('unknown expression', node)

    def __binary(self, node, frame):
        op = node.op
        left = self.__eval(node.left, frame)
        if op == '&&':
            return truthy(left) and truthy(self.__eval(node.right, frame))
        if op == '||':
            return truthy(left) or truthy(self.__eval(node.right, frame))
        right = self.__eval(node.right, frame)
        if op in ('==', '!='):
            if isinstance(left, Instance) or isinstance(right, Instance):
                same = left is right
            else:
                same = type(left) is type(right) and left == right
            return same if op == '==' else not same
        if op == '+' and (isinstance(left, str) or isinstance(right, str)):
            return display(left) + display(right)
        if op in ('<', '<=', '>', '>=') and isinstance(left, str) and \
                isinstance(right, str):
            return self.__compare(op, left, right)
        if not is_int(left) or not is_int(right):
            self.__fail("bad operands for '{0}': {1}, {2}".format(
                op, display(left), display(right)), node)
        if op == '+':
            return left + right
        if op == '-':
            return left - right
        if op == '*':
            return left * right
        if op == '/':
            if right == 0:
                self.__fail('division by zero', node)
            quotient = abs(left) // abs(right)
            return quotient if (left < 0) == (right < 0) else -quotient
        return self.__compare(op, left, right)

    @staticmethod
    def __compare(op, left, right):
        if op == '<':
            return left < right
        if op == '<=':
            return left <= right
        if op == '>':
            return left > right
        return left >= right


#==============================================================================
def run(bundle, app, trace_mode, sink, run_id_s, clock=utc_now,
        algorithm_s='sha1', max_steps=None):
    '''
    Loads and runs the given bundle.  Returns a RunResult holding what the
    program printed, its exit status (the entry's integer return value, or
    0) and the trace records this run emitted.  The sink is flushed even
    when the program fails; a MiniJayRuntimeError then carries the partial
    stdout.
    '''
    program = load_bundle(bundle, algorithm_s)
    interpreter = Interpreter(program, app, trace_mode, sink, run_id_s, clock,
                              max_steps)
    try:
        status = interpreter.run_entry(bundle.entry)
    finally:
        sink.flush()
    log.debug('run ', run_id_s, ' of ', app, ' exited with ', status, ', ',
              len(interpreter.emitted), ' new trace record(s)')
    return RunResult(interpreter.stdout, status, tuple(interpreter.emitted),
                     interpreter.entry_counts)


#==============================================================================
def default_run_id(clock=utc_now):
    ''' A run id built from the clock and the process id. '''
    moment = clock()
    return 'run-{0}-{1}'.format(moment.strftime('%Y%m%dT%H%M%SZ'), os.getpid())
