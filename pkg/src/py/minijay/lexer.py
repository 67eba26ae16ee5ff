'''
Tokenizer for MiniJay source text.

Every byte of the input ends up in exactly one token, including whitespace
and comments, so that concatenating the token texts gives back the source.
The instrumenter relies on that; the parser and the body normalizer simply
skip the 'ws' and 'comment' tokens.

@author: vulntrace developers
'''

from dataclasses import dataclass

from core.errors import LexError

IDENT = 'ident'
KEYWORD = 'keyword'
INT = 'int'
STRING = 'string'
PUNCT = 'punct'
COMMENT = 'comment'
WS = 'ws'
EOF = 'eof'

KEYWORDS = frozenset(['package', 'class', 'fn', 'init', 'var', 'if', 'else',
                      'while', 'return', 'new', 'true', 'false', 'nil'])

# two-character operators are matched before single characters
__PUNCT2 = ('<=', '>=', '==', '!=', '&&', '||')
__PUNCT1 = '(){};,.=+-*/<>!'

__ESCAPES = {'"': '"', '\\': '\\', 'n': '\n', 't': '\t'}


#==============================================================================
@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int  # character offset of the first character
    line: int
    column: int

    def is_(self, kind_s, text_s=None):
        return self.kind == kind_s and (text_s is None or self.text == text_s)

    def describe(self):
        if self.kind == EOF:
            return 'end of file'
        return "{0} '{1}'".format(self.kind, self.text)

    significant = property(lambda self: self.kind not in (WS, COMMENT))


#==============================================================================
def string_value(token):
    ''' The value of a string literal token, with escapes resolved. '''
    body = token.text[1:-1]
    out = []
    i = 0
    while i < len(body):
        if body[i] == '\\':
            out.append(__ESCAPES[body[i + 1]])
            i += 2
        else:
            out.append(body[i])
            i += 1
    return ''.join(out)


#==============================================================================
def quote_string(value_s):
    ''' Renders the given text as a MiniJay string literal. '''
    return '"' + value_s.replace('\\', '\\\\').replace('"', '\\"') \
        .replace('\n', '\\n').replace('\t', '\\t') + '"'


#==============================================================================
def decode_source(data, path_s=''):
    ''' Decodes UTF-8 source bytes; raises LexError at the first bad byte. '''
    try:
        return data.decode('utf-8')
    except UnicodeDecodeError as e:
        good = data[:e.start].decode('utf-8')
        line = good.count('\n') + 1
        column = len(good) - good.rfind('\n')
        raise LexError('invalid UTF-8 byte 0x{0:02x}'.format(data[e.start]),
                       line, column, path_s)


#==============================================================================
def tokenize(source_s, path_s=''):
    '''
    Splits MiniJay source into tokens.  Raises LexError (with line and
    column) on an unterminated string or block comment, a bad escape, or a
    character that cannot start any token.
    '''
    if isinstance(source_s, bytes):
        source_s = decode_source(source_s, path_s)
    tokens = []
    i, line, col = 0, 1, 1
    n = len(source_s)

    def advance(text):
        nonlocal line, col
        newlines = text.count('\n')
        if newlines:
            line += newlines
            col = len(text) - text.rfind('\n')
        else:
            col += len(text)

    while i < n:
        c = source_s[i]
        start = i
        if c in ' \t\r\n':
            while i < n and source_s[i] in ' \t\r\n':
                i += 1
            kind = WS
        elif source_s.startswith('//', i):
            end = source_s.find('\n', i)
            i = n if end < 0 else end
            kind = COMMENT
        elif source_s.startswith('/*', i):
            end = source_s.find('*/', i + 2)
            if end < 0:
                raise LexError('unterminated block comment', line, col, path_s)
            i = end + 2
            kind = COMMENT
        elif c == '"':
            i += 1
            while True:
                if i >= n or source_s[i] == '\n':
                    raise LexError('unterminated string', line, col, path_s)
                if source_s[i] == '\\':
                    if i + 1 >= n or source_s[i + 1] not in __ESCAPES:
                        raise LexError('bad escape in string', line, col,
                                       path_s)
                    i += 2
                elif source_s[i] == '"':
                    i += 1
                    break
                else:
                    i += 1
            kind = STRING
        elif c.isascii() and (c.isalpha() or c == '_'):
            while i < n and source_s[i].isascii() and \
                    (source_s[i].isalnum() or source_s[i] == '_'):
                i += 1
            kind = KEYWORD if source_s[start:i] in KEYWORDS else IDENT
        elif c.isascii() and c.isdigit():
            while i < n and source_s[i].isascii() and source_s[i].isdigit():
                i += 1
            kind = INT
        elif source_s[i:i + 2] in __PUNCT2:
            i += 2
            kind = PUNCT
        elif c in __PUNCT1:
            i += 1
            kind = PUNCT
        else:
            raise LexError("unexpected character '{0}'".format(c), line, col,
                           path_s)
        text = source_s[start:i]
        tokens.append(Token(kind, text, start, line, col))
        advance(text)
    return tokens


#==============================================================================
def significant(tokens):
    ''' The given tokens without whitespace and comments. '''
    return [t for t in tokens if t.significant]
