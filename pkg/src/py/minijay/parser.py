'''
Recursive descent parser for MiniJay.

    file        := packageDecl? topLevel*
    packageDecl := "package" qualified ";"
    topLevel    := classDecl | funcDecl
    classDecl   := "class" IDENT "{" member* "}"
    member      := funcDecl | ctorDecl | classDecl | fieldDecl
    funcDecl    := "fn" IDENT "(" paramList? ")" block
    ctorDecl    := "init" "(" paramList? ")" block
    fieldDecl   := "var" IDENT ("=" expr)? ";"
    block       := "{" stmt* "}"

Package segments must start with a lowercase letter or an underscore and
class names with an uppercase letter, so that a rendered signature can be
split back into its package and classes.

A file parses completely or raises ParseError; there are no partial
results; nesting deeper than MAX_NESTING levels is an error too.  Every
function keeps the token span of its body (indices into SourceUnit.tokens,
which still holds whitespace and comments).

@author: vulntrace developers
'''

from dataclasses import dataclass, field
from typing import Optional, Tuple

from core.errors import ParseError
from core.models import is_class_segment, is_package_segment
from minijay import lexer
from minijay.lexer import EOF, IDENT, INT, KEYWORD, PUNCT, STRING, Token

# names that may not be declared
RESERVED_NAMES = frozenset(['this'])

# deepest nesting of classes, blocks and expressions
MAX_NESTING = 64


# ---- expressions ------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: object
    line: int = 0
    column: int = 0


@dataclass(frozen=True)
class Name:
    ident: str
    line: int = 0
    column: int = 0


@dataclass(frozen=True)
class FieldAccess:
    target: object
    name: str
    line: int = 0
    column: int = 0


@dataclass(frozen=True)
class Call:
    callee: object
    args: Tuple[object, ...]
    line: int = 0
    column: int = 0


@dataclass(frozen=True)
class New:
    qualified: Tuple[str, ...]
    args: Tuple[object, ...]
    line: int = 0
    column: int = 0


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object
    line: int = 0
    column: int = 0


@dataclass(frozen=True)
class Unary:
    op: str
    operand: object
    line: int = 0
    column: int = 0


# ---- statements -------------------------------------------------------------

@dataclass(frozen=True)
class VarStmt:
    name: str
    init: Optional[object]
    line: int = 0


@dataclass(frozen=True)
class AssignStmt:
    target: Tuple[str, ...]
    value: object
    line: int = 0


@dataclass(frozen=True)
class IfStmt:
    condition: object
    then_block: object
    else_block: Optional[object]
    line: int = 0


@dataclass(frozen=True)
class WhileStmt:
    condition: object
    body: object
    line: int = 0


@dataclass(frozen=True)
class ReturnStmt:
    value: Optional[object]
    line: int = 0


@dataclass(frozen=True)
class ExprStmt:
    expr: object
    line: int = 0


@dataclass(frozen=True)
class Block:
    statements: Tuple[object, ...]
    # indices of the '{' and '}' tokens in SourceUnit.tokens
    open_index: int
    close_index: int


# ---- declarations -----------------------------------------------------------

@dataclass(frozen=True)
class FuncDecl:
    name: str
    params: Tuple[str, ...]
    body: Block
    line: int
    is_constructor: bool = False


@dataclass(frozen=True)
class FieldDecl:
    name: str
    init: Optional[object]
    line: int


@dataclass(frozen=True)
class ClassDecl:
    name: str
    members: Tuple[object, ...]
    line: int


@dataclass(frozen=True)
class SourceUnit:
    path: str
    package: str
    declarations: Tuple[object, ...]
    tokens: Tuple[Token, ...] = field(repr=False, default=())


#==============================================================================
class Parser(object):
    ''' Parses one MiniJay file.  Use the module-level parse() function. '''

    __BINARY_LEVELS = (('||',), ('&&',), ('==', '!='),
                       ('<', '<=', '>', '>='), ('+', '-'), ('*', '/'))

    #==========================================================================
    def __init__(self, source_s, path_s=''):
        self.__path = path_s
        self.__tokens = tuple(lexer.tokenize(source_s, path_s))
        # indices of the significant tokens, then a synthetic end token
        self.__indices = [i for i, t in enumerate(self.__tokens)
                          if t.significant]
        self.__end = Token(EOF, '', 0, 1, 1)
        if self.__tokens:
            last = self.__tokens[-1]
            lines = last.text.count('\n')
            if lines:
                column = len(last.text) - last.text.rfind('\n')
            else:
                column = last.column + len(last.text)
            self.__end = Token(EOF, '', last.offset + len(last.text),
                               last.line + lines, column)
        self.__pos = 0
        self.__depth = 0

    #==========================================================================
    def parse_unit(self):
        package_s = ''
        if self.__at(KEYWORD, 'package'):
            self.__next()
            parts = self.__qualified()
            for part in parts:
                if not is_package_segment(part):
                    self.__fail('package segment starting with a lowercase '
                                'letter', self.__previous())
            package_s = '.'.join(parts)
            self.__expect(PUNCT, ';')
        declarations = []
        while not self.__at(EOF):
            if self.__at(KEYWORD, 'class'):
                declarations.append(self.__class_decl())
            elif self.__at(KEYWORD, 'fn'):
                declarations.append(self.__func_decl())
            else:
                self.__fail("'class' or 'fn'", self.__peek())
        return SourceUnit(self.__path, package_s, tuple(declarations),
                          self.__tokens)

    # ---- token plumbing ----------------------------------------------------

    def __peek(self, ahead=0):
        pos = self.__pos + ahead
        if pos < len(self.__indices):
            return self.__tokens[self.__indices[pos]]
        return self.__end

    def __previous(self):
        return self.__tokens[self.__indices[self.__pos - 1]]

    def __token_index(self):
        ''' Index in the full token list of the current token. '''
        return self.__indices[self.__pos]

    def __at(self, kind_s, text_s=None, ahead=0):
        return self.__peek(ahead).is_(kind_s, text_s)

    def __next(self):
        token = self.__peek()
        if token.kind != EOF:
            self.__pos += 1
        return token

    def __fail(self, expected_s, token):
        raise ParseError(expected_s, token.describe(), token.line,
                         token.column, self.__path)

    def __expect(self, kind_s, text_s=None):
        if not self.__at(kind_s, text_s):
            self.__fail("'" + text_s + "'" if text_s else kind_s,
                        self.__peek())
        return self.__next()

    def __descend(self, token):
        self.__depth += 1
        if self.__depth > MAX_NESTING:
            self.__fail('at most {0} nesting levels'.format(MAX_NESTING),
                        token)

    def __ident(self):
        token = self.__expect(IDENT)
        if token.text in RESERVED_NAMES:
            self.__fail('identifier', token)
        return token.text

    def __qualified(self):
        parts = [self.__expect(IDENT).text]
        while self.__at(PUNCT, '.'):
            self.__next()
            parts.append(self.__expect(IDENT).text)
        return parts

    # ---- declarations -------------------------------------------------------

    def __class_decl(self):
        self.__descend(self.__peek())
        try:
            return self.__class_body()
        finally:
            self.__depth -= 1

    def __class_body(self):
        line = self.__expect(KEYWORD, 'class').line
        name_token = self.__expect(IDENT)
        if not is_class_segment(name_token.text):
            self.__fail('class name starting with an uppercase letter',
                        name_token)
        self.__expect(PUNCT, '{')
        members = []
        while not self.__at(PUNCT, '}'):
            if self.__at(KEYWORD, 'fn'):
                members.append(self.__func_decl())
            elif self.__at(KEYWORD, 'init'):
                members.append(self.__func_decl(constructor=True))
            elif self.__at(KEYWORD, 'class'):
                members.append(self.__class_decl())
            elif self.__at(KEYWORD, 'var'):
                field_line = self.__next().line
                field_name = self.__ident()
                init = None
                if self.__at(PUNCT, '='):
                    self.__next()
                    init = self.__expr()
                self.__expect(PUNCT, ';')
                members.append(FieldDecl(field_name, init, field_line))
            else:
                self.__fail("class member or '}'", self.__peek())
        self.__expect(PUNCT, '}')
        return ClassDecl(name_token.text, tuple(members), line)

    def __func_decl(self, constructor=False):
        if constructor:
            line = self.__expect(KEYWORD, 'init').line
            name_s = 'init'
        else:
            line = self.__expect(KEYWORD, 'fn').line
            name_s = self.__ident()
        self.__expect(PUNCT, '(')
        params = []
        if not self.__at(PUNCT, ')'):
            params.append(self.__ident())
            while self.__at(PUNCT, ','):
                self.__next()
                params.append(self.__ident())
        self.__expect(PUNCT, ')')
        return FuncDecl(name_s, tuple(params), self.__block(), line,
                        constructor)

    # ---- statements ---------------------------------------------------------

    def __block(self):
        self.__descend(self.__peek())
        try:
            return self.__block_body()
        finally:
            self.__depth -= 1

    def __block_body(self):
        self.__expect(PUNCT, '{')
        open_index = self.__indices[self.__pos - 1]
        statements = []
        while not self.__at(PUNCT, '}'):
            if self.__at(EOF):
                self.__fail("'}'", self.__peek())
            statements.append(self.__statement())
        close_index = self.__token_index()
        self.__next()
        return Block(tuple(statements), open_index, close_index)

    def __is_assignment(self):
        ''' Looks ahead for IDENT ("." IDENT)* "=" '''
        ahead = 0
        if not self.__at(IDENT, ahead=ahead):
            return False
        ahead += 1
        while self.__at(PUNCT, '.', ahead) and self.__at(IDENT, ahead=ahead + 1):
            ahead += 2
        return self.__at(PUNCT, '=', ahead)

    def __statement(self):
        token = self.__peek()
        if token.is_(KEYWORD, 'var'):
            self.__next()
            name_s = self.__ident()
            init = None
            if self.__at(PUNCT, '='):
                self.__next()
                init = self.__expr()
            self.__expect(PUNCT, ';')
            return VarStmt(name_s, init, token.line)
        if token.is_(KEYWORD, 'if'):
            self.__next()
            self.__expect(PUNCT, '(')
            condition = self.__expr()
            self.__expect(PUNCT, ')')
            then_block = self.__block()
            else_block = None
            if self.__at(KEYWORD, 'else'):
                self.__next()
                else_block = self.__block()
            return IfStmt(condition, then_block, else_block, token.line)
        if token.is_(KEYWORD, 'while'):
            self.__next()
            self.__expect(PUNCT, '(')
            condition = self.__expr()
            self.__expect(PUNCT, ')')
            return WhileStmt(condition, self.__block(), token.line)
        if token.is_(KEYWORD, 'return'):
            self.__next()
            value = None if self.__at(PUNCT, ';') else self.__expr()
            self.__expect(PUNCT, ';')
            return ReturnStmt(value, token.line)
        if self.__is_assignment():
            target = tuple(self.__qualified())
            self.__expect(PUNCT, '=')
            value = self.__expr()
            self.__expect(PUNCT, ';')
            return AssignStmt(target, value, token.line)
        expr = self.__expr()
        self.__expect(PUNCT, ';')
        return ExprStmt(expr, token.line)

    # ---- expressions --------------------------------------------------------

    def __expr(self):
        self.__descend(self.__peek())
        try:
            return self.__binary(0)
        finally:
            self.__depth -= 1

    def __binary(self, level):
        if level == len(Parser.__BINARY_LEVELS):
            return self.__unary()
        operators = Parser.__BINARY_LEVELS[level]
        left = self.__binary(level + 1)
        while self.__peek().kind == PUNCT and self.__peek().text in operators:
            op = self.__next()
            right = self.__binary(level + 1)
            left = Binary(op.text, left, right, op.line, op.column)
        return left

    def __unary(self):
        token = self.__peek()
        if token.kind == PUNCT and token.text in ('!', '-'):
            self.__next()
            self.__descend(token)
            try:
                operand = self.__unary()
            finally:
                self.__depth -= 1
            return Unary(token.text, operand, token.line, token.column)
        return self.__postfix()

    def __postfix(self):
        expr = self.__primary()
        while True:
            token = self.__peek()
            if token.is_(PUNCT, '.'):
                self.__next()
                expr = FieldAccess(expr, self.__expect(IDENT).text,
                                   token.line, token.column)
            elif token.is_(PUNCT, '('):
                self.__next()
                expr = Call(expr, self.__args(), token.line, token.column)
            else:
                return expr

    def __args(self):
        ''' Parses arguments after an opening '(' through the ')'. '''
        args = []
        if not self.__at(PUNCT, ')'):
            args.append(self.__expr())
            while self.__at(PUNCT, ','):
                self.__next()
                args.append(self.__expr())
        self.__expect(PUNCT, ')')
        return tuple(args)

    def __primary(self):
        token = self.__peek()
        if token.kind == INT:
            self.__next()
            return Literal(int(token.text), token.line, token.column)
        if token.kind == STRING:
            self.__next()
            return Literal(lexer.string_value(token), token.line,
                           token.column)
        if token.kind == KEYWORD and token.text in ('true', 'false', 'nil'):
            self.__next()
            value = {'true': True, 'false': False, 'nil': None}[token.text]
            return Literal(value, token.line, token.column)
        if token.kind == KEYWORD and token.text == 'new':
            self.__next()
            qualified = tuple(self.__qualified())
            self.__expect(PUNCT, '(')
            return New(qualified, self.__args(), token.line, token.column)
        if token.kind == IDENT:
            self.__next()
            return Name(token.text, token.line, token.column)
        if token.is_(PUNCT, '('):
            self.__next()
            expr = self.__expr()
            self.__expect(PUNCT, ')')
            return expr
        self.__fail('expression', token)


#==============================================================================
def parse(source_s, path_s=''):
    ''' Parses the given MiniJay source into a SourceUnit. '''
    return Parser(source_s, path_s).parse_unit()


#==============================================================================
def iter_functions(unit):
    '''
    Yields (container, FuncDecl) for every function, method and constructor
    in the unit, in source order.  'container' is the tuple of enclosing
    class names.
    '''
    def walk(declarations, container):
        for decl in declarations:
            if isinstance(decl, FuncDecl):
                yield container, decl
            elif isinstance(decl, ClassDecl):
                for item in walk(decl.members, container + (decl.name,)):
                    yield item
    return walk(unit.declarations, ())


#==============================================================================
def iter_classes(unit):
    ''' Yields (container, ClassDecl) for every class, outermost first. '''
    def walk(declarations, container):
        for decl in declarations:
            if isinstance(decl, ClassDecl):
                yield container, decl
                for item in walk(decl.members, container + (decl.name,)):
                    yield item
    return walk(unit.declarations, ())
