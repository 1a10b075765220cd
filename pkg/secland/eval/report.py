"""
Report tables for SecLand
Merges result CSVs from evaluate, ablate and baselines runs into table-shaped CSVs
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from ..utils.errors import DataError
from ..utils.logger import get_logger
from ..utils.output import read_csv, write_csv
from .pckh import TABLE_THRESHOLDS

logger = get_logger('eval.report')

REPORT_THRESHOLD = 0.5
RUN_FIELDS = ('method', 'mode', 'label_ratio', 'primaries')
CURVE_FIELDS = RUN_FIELDS + ('threshold', 'mean_primary', 'mean_secondary')
FAILURE_FIELDS = ('source',) + RUN_FIELDS + ('error',)
TABLE_FILES = {
    'modes': 'modes.csv',
    'methods': 'methods.csv',
    'label_ratios': 'label_ratios.csv',
    'curves': 'pckh_curves.csv',
    'failures': 'failures.csv',
}

RunKey = Tuple[str, str, str, str]


@dataclass
class ReportBundle:
    tables: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    fieldnames: Dict[str, List[str]] = field(default_factory=dict)
    sources: List[Path] = field(default_factory=list)
    gaps: List[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not any(self.tables.get(name) for name in ('modes', 'methods', 'label_ratios', 'curves'))

    def write(self, output_dir) -> Dict[str, Path]:
        output_dir = Path(output_dir)
        return {name: write_csv(output_dir / TABLE_FILES[name], self.tables.get(name, []), self.fieldnames[name])
                for name in TABLE_FILES}


def _number(value: Any) -> Optional[float]:
    if value is None or value == '':
        return None
    try:
        return float(value)
    except (TypeError, ValueError):
        return None


def _ratio(value: Any) -> str:
    number = _number(value)
    return '' if number is None else f"{number:g}"


def _run_key(row: Dict[str, Any]) -> RunKey:
    return (row.get('method') or '', row.get('mode') or '', _ratio(row.get('label_ratio')), row.get('primaries') or '')


def _run_label(key: RunKey) -> str:
    method, mode, _, primaries = key
    label = f"{method}:{mode}" if mode else method
    return f"{label}:{primaries}" if primaries and method != 'secland' else label


def collect_result_files(paths: Iterable) -> List[Path]:
    """Result CSVs named directly or found under directories, sorted for deterministic merging"""
    found = set()
    for entry in paths:
        entry = Path(entry)
        if entry.is_dir():
            found.update(p for p in entry.rglob('*.csv') if _is_result_file(p))
        elif entry.is_file():
            found.add(entry)
        else:
            raise DataError(f"Result path does not exist: {entry}", path=str(entry))
    return sorted(found)


def _is_result_file(path: Path) -> bool:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            header = f.readline().strip().split(',')
    except OSError:
        return False
    return {'landmark', 'pckh', 'threshold', 'method'} <= set(header)


def load_results(paths: Sequence[Path]) -> List[Dict[str, Any]]:
    rows = []
    for path in paths:
        for row in read_csv(path):
            missing = [name for name in ('method', 'landmark', 'threshold', 'pckh') if name not in row]
            if missing:
                raise DataError(f"{path} is not a results file (missing columns {missing})", path=str(path))
            rows.append(row)
    return rows


def _pckh_table(rows: List[Dict[str, Any]], threshold: Optional[float],
                keys: Sequence[str]) -> Tuple[List[Dict[str, Any]], List[str]]:
    """Wide table: one row per run (and threshold), one column per secondary landmark plus the secondary mean"""
    columns: List[str] = []
    cells: Dict[Tuple, Dict[str, Any]] = {}
    for row in rows:
        if row.get('kind') not in ('secondary', 'mean') or row.get('landmark') == 'mean_primary':
            continue
        t = _number(row.get('threshold'))
        if t is None or (threshold is not None and abs(t - threshold) > 1e-9):
            continue
        landmark = row['landmark']
        if landmark not in columns:
            columns.append(landmark)
        key = _run_key(row) + ((t,) if threshold is None else ())
        cells.setdefault(key, {})[landmark] = _number(row.get('pckh'))

    # Means last
    columns = [c for c in columns if c != 'mean_secondary'] + (['mean_secondary'] if 'mean_secondary' in columns else [])
    table = []
    for key in sorted(cells):
        entry = dict(zip(keys, key))
        entry.update(cells[key])
        table.append(entry)
    return table, list(keys) + columns


def _label_ratio_table(rows: List[Dict[str, Any]]) -> Tuple[List[Dict[str, Any]], List[str], List[str]]:
    """Label ratio × method at PCKh@0.5 (mean over secondary landmarks); absent combinations are flagged"""
    values: Dict[str, Dict[str, Optional[float]]] = {}
    labels = set()
    for row in rows:
        if row.get('landmark') != 'mean_secondary':
            continue
        t = _number(row.get('threshold'))
        if t is None or abs(t - REPORT_THRESHOLD) > 1e-9:
            continue
        key = _run_key(row)
        if not key[2]:
            continue
        label = _run_label(key)
        labels.add(label)
        values.setdefault(key[2], {})[label] = _number(row.get('pckh'))

    labels = sorted(labels)
    table, gaps = [], []
    for ratio in sorted(values, key=float):
        entry: Dict[str, Any] = {'label_ratio': ratio}
        missing = []
        for label in labels:
            value = values[ratio].get(label)
            entry[label] = value
            if value is None:
                missing.append(label)
        entry['missing'] = ';'.join(missing)
        gaps.extend(f"ratio {ratio}: {label}" for label in missing)
        table.append(entry)
    return table, ['label_ratio'] + labels + ['missing'], gaps


def _curves(rows: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    means: Dict[Tuple, Dict[str, Optional[float]]] = {}
    for row in rows:
        if row.get('kind') != 'mean':
            continue
        t = _number(row.get('threshold'))
        if t is None:
            continue
        means.setdefault(_run_key(row) + (t,), {})[row['landmark']] = _number(row.get('pckh'))
    return [{**dict(zip(RUN_FIELDS + ('threshold',), key)),
             'mean_primary': values.get('mean_primary'), 'mean_secondary': values.get('mean_secondary')}
            for key, values in sorted(means.items())]


def build_report(rows: List[Dict[str, Any]]) -> ReportBundle:
    """Table-shaped views of merged result rows"""
    failures = [row for row in rows if row.get('error')]
    scored = [row for row in rows if not row.get('error')]
    secland = [row for row in scored if row.get('method') == 'secland']

    bundle = ReportBundle()
    modes = []
    mode_columns: List[str] = ['mode', 'label_ratio', 'threshold']
    for t in TABLE_THRESHOLDS:
        part, columns = _pckh_table(secland, t, ('method', 'mode', 'label_ratio', 'primaries'))
        for entry in part:
            entry['threshold'] = t
        modes.extend(part)
        mode_columns.extend(c for c in columns if c not in mode_columns and c not in RUN_FIELDS)
    modes.sort(key=lambda e: (e['mode'], e['label_ratio'], e['threshold']))
    bundle.tables['modes'] = [{k: v for k, v in e.items() if k in mode_columns} for e in modes]
    bundle.fieldnames['modes'] = mode_columns

    methods, method_columns = _pckh_table(scored, REPORT_THRESHOLD, RUN_FIELDS)
    bundle.tables['methods'] = methods
    bundle.fieldnames['methods'] = method_columns

    label_ratios, ratio_columns, gaps = _label_ratio_table(scored)
    bundle.tables['label_ratios'] = label_ratios
    bundle.fieldnames['label_ratios'] = ratio_columns
    bundle.gaps = gaps

    bundle.tables['curves'] = _curves(scored)
    bundle.fieldnames['curves'] = list(CURVE_FIELDS)

    bundle.tables['failures'] = [{name: row.get(name) for name in FAILURE_FIELDS}
                                 for row in sorted(failures, key=lambda r: tuple(r.get(n) or '' for n in FAILURE_FIELDS))]
    bundle.fieldnames['failures'] = list(FAILURE_FIELDS)
    return bundle


def report_tables(sources: Iterable, output_dir=None) -> ReportBundle:
    """
    Regenerate the comparison tables from run artifacts.

    Args:
        sources: Result CSV files or run directories searched recursively
        output_dir: Write the CSV bundle here when given

    Returns:
        ReportBundle; empty input yields empty tables and a warning
    """
    files = collect_result_files(sources)
    rows = load_results(files)
    bundle = build_report(rows)
    bundle.sources = files
    if bundle.empty:
        logger.warning("No result rows found; writing empty tables")
    for gap in bundle.gaps:
        logger.warning(f"Missing run in label-ratio table: {gap}")
    if bundle.tables['failures']:
        logger.warning(f"{len(bundle.tables['failures'])} runs failed; see {TABLE_FILES['failures']}")
    if output_dir is not None:
        bundle.write(output_dir)
    return bundle

