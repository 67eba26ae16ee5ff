'''
Static instrumentation: source-to-source insertion of trace calls.

@author: vulntrace developers
'''

import os

from core.models import ConstructSignature, render_signature
from minijay import extractor, parser
from minijay.lexer import IDENT, PUNCT, quote_string
from minijay.tracing import TRACE_BUILTIN
from utils import log


#==============================================================================
def __is_traced(unit, body):
    ''' True if the body already starts with a call to the trace builtin. '''
    following = [t for t in unit.tokens[body.open_index + 1:body.close_index]
                 if t.significant][:2]
    return len(following) == 2 and following[0].is_(IDENT, TRACE_BUILTIN) \
        and following[1].is_(PUNCT, '(')


#==============================================================================
def instrument(source_s, digest_s=None, path_s=''):
    '''
    Returns the given source with a statement

        __trace("SIG", "DIGEST");

    inserted at the start of every function, method and constructor body.
    SIG is the construct's canonical signature and DIGEST the given archive
    digest (empty for application code).  All other text is left as it is,
    and bodies that already start with a trace call are skipped, so
    instrumenting twice gives the same result as instrumenting once.
    '''
    if isinstance(source_s, bytes):
        source_s = source_s.decode('utf-8')
    unit = parser.parse(source_s, path_s)
    insertions = []
    for container, decl in parser.iter_functions(unit):
        if __is_traced(unit, decl.body):
            continue
        signature = ConstructSignature.of(unit.package, container, decl.name,
                                          len(decl.params))
        offset = unit.tokens[decl.body.open_index].offset + 1
        text = ' {0}({1}, {2});'.format(
            TRACE_BUILTIN, quote_string(render_signature(signature)),
            quote_string(digest_s or ''))
        if source_s[offset:offset + 1] == '}':
            text += ' '
        insertions.append((offset, text))

    for offset, text in sorted(insertions, reverse=True):
        source_s = source_s[:offset] + text + source_s[offset:]
    return source_s


#==============================================================================
def instrument_tree(source_root_s, target_root_s, digest_s=None):
    '''
    Instruments every MiniJay file below 'source_root_s', writing the
    results to the same relative paths below 'target_root_s'.  Returns the
    relative paths written.
    '''
    written = []
    for relative in extractor.list_sources(source_root_s):
        text = instrument(extractor.read_source(source_root_s, relative),
                          digest_s, relative)
        target = os.path.join(target_root_s, *relative.split('/'))
        os.makedirs(os.path.dirname(target), exist_ok=True)
        with open(target, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        written.append(relative)
    log.info('instrumented ', len(written), ' file(s) into ', target_root_s)
    return written
