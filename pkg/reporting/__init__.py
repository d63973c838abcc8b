"""
Evaluation report files
"""

from reporting.report_generator import EpisodeReport, ReportGenerator, read_reports, reports_frame, summarize

__all__ = [
    'EpisodeReport',
    'ReportGenerator',
    'read_reports',
    'reports_frame',
    'summarize',
]
