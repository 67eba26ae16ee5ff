'''
The ingest service: a small FastAPI application in front of one
AssessmentEngine, so that tracers, analyzers and builds can upload their
results to a central engine and read its views back.

Every endpoint is a thin adapter over one engine operation.  Mutations go
through the engine's single writer and are saved to the snapshot file right
away; the snapshot is saved once more on shutdown.

@author: vulntrace developers
'''

import socket
import urllib.parse
from contextlib import asynccontextmanager
from typing import List

import uvicorn
from fastapi import Body, FastAPI, Query, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.exceptions import RequestValidationError
from fastapi.responses import HTMLResponse, JSONResponse, Response
from starlette.exceptions import HTTPException as StarletteHTTPException

from core.errors import (BindError, HttpError, MalformedRecord,
                         MethodNotAllowed, NotFound, RecordFormatError,
                         VulnTraceError)
from core.models import (ChangeList, LibraryRelease, VulnerabilityRecord,
                         parse_app_id, parse_library_id)
from engine.assessment import AssessmentEngine
from engine.report import render_report
from service.schemas import (ApiError, ChangeListBody, IngestResponse,
                             ReleaseBody, UpsertResponse, VulnerabilityBody)
from utils import log
from utils.utils import sstr

DEFAULT_HOST = '127.0.0.1'
DEFAULT_PORT = 8642

# HTTP status per error kind; anything else is a server error
ERROR_STATUS = {
    'MalformedSignature': 400,
    'MalformedRecord': 400,
    'RecordFormatError': 400,
    'ConfigError': 400,
    'UnknownApp': 404,
    'UnknownVuln': 404,
    'NotFound': 404,
    'MethodNotAllowed': 405,
    'NoChangeList': 409,
    'StateCorrupt': 500,
}


#==============================================================================
def error_response(error):
    status = ERROR_STATUS.get(error.kind, 500)
    if status >= 500:
        log.handle_error(error)
    body = ApiError(error=error.kind, message=error.message)
    return JSONResponse(status_code=status, content=body.model_dump())


# errors raised by routing, before any endpoint runs
HTTP_ERRORS = {404: NotFound, 405: MethodNotAllowed}


#==============================================================================
def create_app(engine, autosave=True):
    '''
    Builds the FastAPI application around the given engine.  With
    'autosave', every accepted mutation is written to the engine's
    snapshot file.
    '''

    def saved(result):
        if autosave and engine.state_file:
            engine.save()
        return result

    @asynccontextmanager
    async def lifespan(app):
        log.info('ingest service started with ', len(engine.known_apps()),
                 ' known application(s)')
        yield
        if engine.state_file:
            engine.save()
            log.info('saved engine state to ', engine.state_file)

    app = FastAPI(title='vulntrace ingest service', lifespan=lifespan)

    @app.exception_handler(VulnTraceError)
    async def domain_error(request: Request, error: VulnTraceError):
        log.debug(request.method, ' ', request.url.path, ' failed: ',
                  error.kind, ': ', error.message)
        return error_response(error)

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request,
                               error: RequestValidationError):
        messages = ['{0}: {1}'.format('.'.join(map(sstr, e.get('loc', ()))),
                                      e.get('msg', '')) for e in error.errors()]
        body = ApiError(error=MalformedRecord.KIND,
                        message='; '.join(messages))
        return JSONResponse(status_code=400, content=body.model_dump())

    @app.exception_handler(StarletteHTTPException)
    async def http_error(request: Request, error: StarletteHTTPException):
        kind = HTTP_ERRORS.get(error.status_code, HttpError).KIND
        log.debug(request.method, ' ', request.url.path, ' failed: ', kind)
        body = ApiError(error=kind, message=sstr(error.detail))
        return JSONResponse(status_code=error.status_code,
                            content=body.model_dump(),
                            headers=getattr(error, 'headers', None))

    # ---- uploads ------------------------------------------------------------

    @app.put('/apps/{app_s}/constructs', response_model=UpsertResponse)
    def put_constructs(app_s: str, signatures: List[str] = Body(...)):
        app_id = parse_app_id(app_s)
        engine.upsert_app_constructs(app_id, signatures)
        return saved(UpsertResponse(stored=len(set(signatures))))

    @app.post('/apps/{app_s}/traces', response_model=IngestResponse)
    async def post_traces(app_s: str, request: Request):
        app_id = parse_app_id(app_s)
        try:
            text = (await request.body()).decode('utf-8')
        except UnicodeDecodeError as e:
            raise MalformedRecord('trace upload is not UTF-8 (byte {0})'
                                  .format(e.start))
        result = await run_in_threadpool(engine.ingest_trace_lines,
                                         text.split('\n'), app_id)
        await run_in_threadpool(saved, None)
        body = result.to_dict()
        return JSONResponse(status_code=400 if result.errors else 200,
                            content=body)

    @app.put('/libs/{library_s}/vulns/{vuln_id_s}/changelist',
             response_model=UpsertResponse)
    def put_change_list(library_s: str, vuln_id_s: str,
                        body: ChangeListBody):
        d = body.model_dump()
        d['library'] = __path_value(d['library'], library_s, 'library')
        d['vulnId'] = __path_value(d['vulnId'], vuln_id_s, 'vulnId')
        parse_library_id(d['library'])
        change_list = ChangeList.from_dict(d)
        engine.upsert_change_list(change_list)
        return saved(UpsertResponse(stored=len(change_list.entries)))

    @app.put('/apps/{app_s}/archives', response_model=UpsertResponse)
    def put_archives(app_s: str, releases: List[ReleaseBody]):
        app_id = parse_app_id(app_s)
        parsed = [LibraryRelease.from_dict(r.model_dump()) for r in releases]
        engine.upsert_declared_archives(app_id, parsed)
        return saved(UpsertResponse(stored=len(set(parsed))))

    @app.put('/archives/{digest_s}/constructs', response_model=UpsertResponse)
    def put_archive_constructs(digest_s: str,
                               signatures: List[str] = Body(...)):
        engine.upsert_archive_constructs(digest_s, signatures)
        return saved(UpsertResponse(stored=len(set(signatures))))

    @app.put('/vulns/{vuln_id_s}', response_model=UpsertResponse)
    def put_vuln(vuln_id_s: str, body: VulnerabilityBody):
        d = body.model_dump()
        d['vulnId'] = __path_value(d['vulnId'], vuln_id_s, 'vulnId')
        engine.upsert_vuln(VulnerabilityRecord.from_dict(d))
        return saved(UpsertResponse(stored=1))

    @app.put('/index', response_model=UpsertResponse)
    def put_index(releases: List[ReleaseBody]):
        parsed = [LibraryRelease.from_dict(r.model_dump()) for r in releases]
        engine.upsert_index(parsed)
        return saved(UpsertResponse(stored=len(set(parsed))))

    # ---- views --------------------------------------------------------------

    @app.get('/apps/{app_s}/assessment')
    def get_assessment(app_s: str):
        app_id = parse_app_id(app_s)
        return [v.to_dict() for v in engine.assess_all(app_id)]

    @app.get('/apps/{app_s}/assessment/{vuln_id_s}')
    def get_verdict(app_s: str, vuln_id_s: str):
        return engine.assess(parse_app_id(app_s), vuln_id_s).to_dict()

    @app.get('/apps/{app_s}/coverage')
    def get_coverage(app_s: str):
        return engine.coverage(parse_app_id(app_s)).to_dict()

    @app.get('/apps/{app_s}/archives')
    def get_archives(app_s: str):
        app_id = parse_app_id(app_s)
        return [v.to_dict() for v in engine.archives_view(app_id)]

    @app.get('/apps/{app_s}/report')
    def get_report(app_s: str,
                   format_s: str = Query('json', alias='format')):
        text = render_report(engine, parse_app_id(app_s), format_s)
        if format_s == 'html':
            return HTMLResponse(text)
        return Response(text, media_type='application/json')

    return app


#==============================================================================
def __path_value(body_value, path_value_s, name_s):
    ''' A body field that repeats a path parameter must agree with it. '''
    path_value_s = urllib.parse.unquote(path_value_s)
    if body_value is not None and body_value != path_value_s:
        raise RecordFormatError("{0} '{1}' does not match the URL ('{2}')"
                                .format(name_s, body_value, path_value_s))
    return path_value_s


#==============================================================================
def check_bind(host_s, port_n):
    ''' Raises BindError unless the address can be bound right now. '''
    try:
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
            s.bind((host_s, port_n))
    except OSError as e:
        raise BindError('cannot bind {0}:{1}: {2}'.format(host_s, port_n,
                                                         sstr(e)))


#==============================================================================
def serve(state_file_s, host_s=DEFAULT_HOST, port_n=DEFAULT_PORT,
          log_level_s='info'):
    '''
    Runs the ingest service on the given address until it is interrupted,
    backed by the engine snapshot at 'state_file_s'.  Raises StateCorrupt
    if the snapshot cannot be read and BindError if the address is taken.
    '''
    engine = AssessmentEngine.open(state_file_s)
    check_bind(host_s, port_n)
    log.info('serving on http://', host_s, ':', port_n, '/')
    uvicorn.run(create_app(engine), host=host_s, port=port_n,
                log_level=sstr(log_level_s).lower())
    return engine
