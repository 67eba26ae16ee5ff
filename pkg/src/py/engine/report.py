'''
Renders an application's assessment into a JSON document or a static HTML
page: the verdicts with their change-list detail, the archives view and
the coverage view.

Both formats are deterministic: equal engine states render byte-identical
documents.

@author: vulntrace developers
'''

import json

from bs4 import BeautifulSoup

from core.errors import ConfigError, UnknownApp
from core.models import VerdictStatus
from utils import log
from utils.utils import sstr

FORMATS = ('json', 'html')

__STATUS_TEXT = {
    VerdictStatus.RELEVANT_TRACED:
        'relevant: constructs of the change-list were executed',
    VerdictStatus.AFFECTED_NOT_TRACED:
        'vulnerable release in use, no change-list construct traced',
    VerdictStatus.NOT_AFFECTED_VERSION: 'non-vulnerable release in use',
    VerdictStatus.UNKNOWN_VERSION: 'release or affectedness unknown',
}

__STYLE = '''
body { font-family: sans-serif; margin: 2em; }
table { border-collapse: collapse; margin-bottom: 1.5em; }
th, td { border: 1px solid #999; padding: 0.2em 0.6em; text-align: left; }
.RELEVANT_TRACED { background: #f4b6b6; }
.AFFECTED_NOT_TRACED { background: #f7deb0; }
.NOT_AFFECTED_VERSION { background: #c9ecc4; }
.UNKNOWN_VERSION { background: #dddddd; }
.highlight { background: #f7deb0; }
.traced { font-weight: bold; }
'''


#==============================================================================
def report_data(engine, app):
    '''
    The report content as a JSON-friendly dict.  Raises UnknownApp if the
    engine knows nothing about the application.  Everything is read under
    one hold of the engine lock, so concurrent uploads never show up in
    only part of the report.
    '''
    return engine.read(lambda state: __collect(engine, app))


#==============================================================================
def __collect(engine, app):
    if not engine.has_app(app):
        raise UnknownApp('unknown application ' + str(app))
    verdicts = []
    for verdict in engine.assess_all(app):
        row = verdict.to_dict()
        row['changeList'] = engine.change_list_detail(app, verdict)
        verdicts.append(row)
    try:
        coverage = engine.coverage(app).to_dict()
    except UnknownApp:
        coverage = None  # no construct set uploaded
    return {'app': str(app), 'verdicts': verdicts,
            'archives': [v.to_dict() for v in engine.archives_view(app)],
            'coverage': coverage}


#==============================================================================
def render_report(engine, app, format_s='json'):
    ''' Renders the report of one application in the given format. '''
    if format_s not in FORMATS:
        raise ConfigError('unknown report format: ' + sstr(format_s))
    data = report_data(engine, app)
    log.debug('rendering ', format_s, ' report for ', app, ' with ',
              len(data['verdicts']), ' verdict(s)')
    if format_s == 'json':
        return json.dumps(data, sort_keys=True, indent=2,
                          ensure_ascii=False) + '\n'
    return render_html(data)


#==============================================================================
def render_html(data):
    ''' Builds the static page for the given report data. '''
    soup = BeautifulSoup('<!DOCTYPE html><html><head></head>'
                         '<body></body></html>', 'html.parser')
    title = 'Vulnerability assessment of ' + data['app']
    soup.head.append(__tag(soup, 'meta', charset='utf-8'))
    soup.head.append(__tag(soup, 'title', title))
    soup.head.append(__tag(soup, 'style', __STYLE))
    body = soup.body
    body.append(__tag(soup, 'h1', title))

    body.append(__tag(soup, 'h2', 'Vulnerabilities'))
    if data['verdicts']:
        body.append(__verdict_table(soup, data['verdicts']))
        for verdict in data['verdicts']:
            body.append(__tag(soup, 'h3', 'Change-list of {0} in {1}'.format(
                verdict['vulnId'], sstr(verdict['library']))))
            body.append(__change_list_table(soup, verdict))
    else:
        body.append(__tag(soup, 'p', 'No vulnerabilities with a '
                                     'change-list are known.'))

    body.append(__tag(soup, 'h2', 'Archives'))
    if data['archives']:
        body.append(__archive_table(soup, data['archives']))
    else:
        body.append(__tag(soup, 'p', 'No archives declared or traced.'))

    body.append(__tag(soup, 'h2', 'Coverage'))
    if data['coverage'] is None:
        body.append(__tag(soup, 'p', 'No application constructs uploaded.'))
    else:
        for table in __coverage_tables(soup, data['coverage']):
            body.append(table)
    return str(soup) + '\n'


#==============================================================================
def __tag(soup, name_s, text_s=None, **attrs):
    if 'class_' in attrs:
        attrs['class'] = attrs.pop('class_')
    tag = soup.new_tag(name_s, attrs=attrs)
    if text_s is not None:
        tag.string = sstr(text_s)
    return tag


#==============================================================================
def __table(soup, headers):
    table = soup.new_tag('table')
    row = soup.new_tag('tr')
    for header in headers:
        row.append(__tag(soup, 'th', header))
    table.append(row)
    return table


#==============================================================================
def __release_text(release):
    if not release:
        return '-'
    return '{0} {1}'.format(release['library'], release['version'])


#==============================================================================
def __verdict_table(soup, verdicts):
    table = __table(soup, ('Vulnerability', 'Library', 'Release in use',
                           'Status', 'Evidence', 'Latest non-vulnerable'))
    for verdict in verdicts:
        status = VerdictStatus(verdict['status'])
        row = __tag(soup, 'tr', class_=status.value)
        row.append(__tag(soup, 'td', verdict['vulnId']))
        row.append(__tag(soup, 'td', verdict['library'] or '-'))
        row.append(__tag(soup, 'td', __release_text(verdict['libraryInUse'])))
        row.append(__tag(soup, 'td', status.value,
                         title=__STATUS_TEXT[status]))
        evidence = str(len(verdict['evidence']))
        if verdict['unresolvedEvidence']:
            evidence += ' (unresolved archive)'
        row.append(__tag(soup, 'td', evidence))
        row.append(__tag(soup, 'td', verdict['latestNonVulnerable'] or '-'))
        table.append(row)
    return table


#==============================================================================
def __change_list_table(soup, verdict):
    table = __table(soup, ('Construct', 'Change', 'Traced'))
    for entry in verdict['changeList']:
        row = __tag(soup, 'tr', class_='traced') if entry['traced'] \
            else soup.new_tag('tr')
        row.append(__tag(soup, 'td', entry['sig']))
        row.append(__tag(soup, 'td', entry['change']))
        if entry['traced']:
            row.append(__tag(soup, 'td', 'yes',
                             title='first seen ' + entry['firstSeen']))
        else:
            row.append(__tag(soup, 'td', 'no'))
        table.append(row)
    return table


#==============================================================================
def __archive_table(soup, archives):
    table = __table(soup, ('Digest', 'Release', 'Declared', 'Traced',
                           'Highlights'))
    for archive in archives:
        row = __tag(soup, 'tr', class_='highlight') if archive['highlights'] \
            else soup.new_tag('tr')
        row.append(__tag(soup, 'td', archive['digest']))
        release = archive['release'] or archive['declaredRelease']
        row.append(__tag(soup, 'td', __release_text(release)))
        row.append(__tag(soup, 'td', 'yes' if archive['declared'] else 'no'))
        row.append(__tag(soup, 'td', 'yes' if archive['traced'] else 'no'))
        row.append(__tag(soup, 'td', ', '.join(archive['highlights']) or '-'))
        table.append(row)
    return table


#==============================================================================
def __coverage_tables(soup, coverage):
    summary = __tag(soup, 'p', 'Overall: {0} of {1} application constructs '
                    'executed ({2:.1%}).'.format(coverage['covered'],
                                                coverage['total'],
                                                coverage['ratio']))
    if coverage['noConstructs']:
        summary.string = 'The application has no constructs.'
    tables = [summary]

    table = __table(soup, ('Package', 'Covered', 'Total'))
    for package in sorted(coverage['perPackage']):
        counts = coverage['perPackage'][package]
        row = soup.new_tag('tr')
        row.append(__tag(soup, 'td', package or '(default package)'))
        row.append(__tag(soup, 'td', counts['covered']))
        row.append(__tag(soup, 'td', counts['total']))
        table.append(row)
    tables.append(table)

    if coverage['perArchive']:
        table = __table(soup, ('Archive', 'Covered', 'Total'))
        for digest in sorted(coverage['perArchive']):
            counts = coverage['perArchive'][digest]
            row = soup.new_tag('tr')
            row.append(__tag(soup, 'td', digest))
            row.append(__tag(soup, 'td', counts['covered']))
            total = __tag(soup, 'td', counts['total'])
            if not counts['constructsKnown']:
                total['title'] = 'archive constructs unknown; ' \
                    'traced constructs only'
            row.append(total)
            table.append(row)
        tables.append(table)
    return tables
