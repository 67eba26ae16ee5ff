'''
Request and response bodies of the ingest service.  The request models only
check the shape of a body; the domain checks (signature grammar, digests,
version strings) happen when a body is converted into model objects.

@author: vulntrace developers
'''

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field


class StrictBody(BaseModel):
    model_config = ConfigDict(extra='forbid')


class ReleaseBody(StrictBody):
    library: str = Field(..., examples=['acme:fileupload'])
    version: str = Field(..., examples=['1.2.2'])
    digest: str


class ChangeEntryBody(StrictBody):
    sig: str = Field(..., examples=['acme.fileupload.MultipartStream.init/3'])
    change: str = Field(..., examples=['MOD'])


class ChangeListBody(StrictBody):
    library: Optional[str] = None  # defaults to the path's library
    vulnId: Optional[str] = None  # defaults to the path's vulnerability
    fixRevision: str
    entries: List[ChangeEntryBody] = []
    affectedVersions: Optional[List[str]] = None
    fixedVersions: Optional[List[str]] = None
    fixedAt: Optional[str] = None


class CpeBody(StrictBody):
    cpe: str = Field(..., examples=['cpe:/a:acme:fileupload'])
    versionEndExcluding: Optional[str] = None


class FixRevisionBody(StrictBody):
    store: str
    revision: str


class VulnerabilityBody(StrictBody):
    vulnId: Optional[str] = None  # defaults to the path's vulnerability
    description: str = ''
    references: List[str] = []
    affectedCpes: List[CpeBody] = []
    fixRevisions: Optional[List[FixRevisionBody]] = None


class UpsertResponse(BaseModel):
    stored: int


class IngestResponse(BaseModel):
    accepted: int
    applied: int
    errors: List[dict] = []


class ApiError(BaseModel):
    error: str
    message: str
