'''
Construct extraction and body normalization.

@author: vulntrace developers
'''

import os
from dataclasses import dataclass, field
from typing import Tuple

from core.errors import DuplicateConstruct, LoadError
from core.models import ConstructSignature, render_signature
from minijay import lexer, parser
from utils import log

SOURCE_SUFFIX = '.mj'


#==============================================================================
@dataclass(frozen=True)
class ExtractedConstruct:
    signature: ConstructSignature
    # (kind, text) pairs; no whitespace or comments
    body_tokens: Tuple[Tuple[str, str], ...]
    source_path: str
    start_line: int
    declaration: object = field(default=None, compare=False, repr=False)


#==============================================================================
def normalize_body(tokens):
    '''
    Drops whitespace and comment tokens from the given span, keeping every
    other token's kind and exact text.
    '''
    return tuple((t.kind, t.text) for t in tokens if t.significant)


#==============================================================================
def extract_constructs(unit):
    '''
    Returns one ExtractedConstruct per function, method and constructor of
    the given SourceUnit, in source order.  Raises DuplicateConstruct when
    two of them render to the same signature.
    '''
    constructs = []
    seen = set()
    for container, decl in parser.iter_functions(unit):
        signature = ConstructSignature.of(unit.package, container, decl.name,
                                          len(decl.params))
        if signature in seen:
            raise DuplicateConstruct("{0}: '{1}' is declared twice".format(
                unit.path or '<source>', render_signature(signature)))
        seen.add(signature)
        span = unit.tokens[decl.body.open_index:decl.body.close_index + 1]
        constructs.append(ExtractedConstruct(
            signature, normalize_body(span), unit.path, decl.line, decl))
    return constructs


#==============================================================================
def list_sources(root_s):
    '''
    The relative POSIX paths of all MiniJay files below the given directory,
    in ascending order.
    '''
    paths = []
    for directory, dirnames, filenames in os.walk(root_s):
        dirnames.sort()
        for filename in filenames:
            if filename.endswith(SOURCE_SUFFIX):
                full = os.path.join(directory, filename)
                paths.append(os.path.relpath(full, root_s)
                             .replace(os.sep, '/'))
    return sorted(paths)


#==============================================================================
def read_source(root_s, relative_s):
    ''' Reads a source file as text; bad UTF-8 raises LexError. '''
    with open(os.path.join(root_s, relative_s), 'rb') as f:
        return lexer.decode_source(f.read(), relative_s)


#==============================================================================
def parse_tree(root_s):
    ''' Parses every MiniJay file below the given directory. '''
    if not os.path.isdir(root_s):
        raise LoadError('not a directory: ' + root_s)
    units = []
    for relative in list_sources(root_s):
        units.append(parser.parse(read_source(root_s, relative), relative))
    log.debug('parsed ', len(units), ' file(s) below ', root_s)
    return units


#==============================================================================
def extract_units(units):
    '''
    Extracts the constructs of several units, which together must not
    declare a signature twice.
    '''
    constructs = []
    origin = {}
    for unit in units:
        for construct in extract_constructs(unit):
            other = origin.get(construct.signature)
            if other is not None:
                raise DuplicateConstruct(
                    "'{0}' is declared in both {1} and {2}".format(
                        render_signature(construct.signature), other,
                        unit.path))
            origin[construct.signature] = unit.path
            constructs.append(construct)
    return constructs


#==============================================================================
def extract_tree(root_s):
    ''' The constructs of all MiniJay files below the given directory. '''
    return extract_units(parse_tree(root_s))
