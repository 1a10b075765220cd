"""
Evaluation for SecLand
PCKh scoring, feature correlation statistics and report tables
"""

from .pckh import CURVE_THRESHOLDS, RESULT_FIELDS, TABLE_THRESHOLDS, PckhResult, default_thresholds, pckh
from .correlation import CORRELATION_FIELDS, CorrelationStats, correlation_stats, correlations_from_features
from .evaluate import annotated_views, detect_frames, evaluate_model
from .report import TABLE_FILES, ReportBundle, build_report, collect_result_files, load_results, report_tables

__all__ = [
    'CORRELATION_FIELDS', 'CURVE_THRESHOLDS', 'RESULT_FIELDS', 'TABLE_FILES', 'TABLE_THRESHOLDS',
    'CorrelationStats', 'PckhResult', 'ReportBundle', 'annotated_views', 'build_report', 'collect_result_files',
    'correlation_stats', 'correlations_from_features', 'default_thresholds', 'detect_frames', 'evaluate_model',
    'load_results', 'pckh', 'report_tables',
]
