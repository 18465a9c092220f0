import logging
from collections import Counter
from typing import Any, Dict, List, Sequence

from reportlab.lib.pagesizes import letter
from reportlab.lib import colors
from reportlab.lib.styles import getSampleStyleSheet, ParagraphStyle
from reportlab.platypus import SimpleDocTemplate, Paragraph, Spacer, Table, TableStyle
from reportlab.platypus import ListFlowable, ListItem
from reportlab.lib.units import inch

from core.drone_env import TerminationStatus
from core.evaluation import MetricsSummary, TrialRecord
from utils.constants import APP_NAME, APP_VERSION
from utils.exceptions import wrap_export_errors

# Initialize logger
logger = logging.getLogger(__name__)


class ReportGenerator:
    """
    Generates one-page PDF reports of an evaluation run.
    Covers the aggregate metrics and the termination breakdown; no plots.
    """

    def __init__(self):
        self.styles = getSampleStyleSheet()

        self.styles['Heading1'].fontSize = 16
        self.styles['Heading1'].spaceAfter = 8

        self.styles['Heading2'].fontSize = 14
        self.styles['Heading2'].spaceAfter = 6

        self.styles['Normal'].fontSize = 10
        self.styles['Normal'].spaceAfter = 4

        self.styles.add(ParagraphStyle(
            name='TableHeader',
            parent=self.styles['Normal'],
            fontName='Helvetica-Bold',
            fontSize=10,
            alignment=1,  # Center alignment
        ))

        logger.info("ReportGenerator initialized")

    @wrap_export_errors
    def create_evaluation_report(self, summary: MetricsSummary, records: Sequence[TrialRecord],
                                 run_info: Dict[str, Any], path: str) -> str:
        """
        Create a one-page PDF report for an evaluation run.

        Args:
            summary: Aggregate metrics
            records: Per-trial records (for the termination breakdown)
            run_info: Run identification (algorithm, stage, seed, checkpoint, ...)
            path: Output PDF path

        Returns:
            Path to the generated PDF file
        """
        # invariant=True keeps the file bytes independent of the wall clock
        doc = SimpleDocTemplate(path, pagesize=letter,
                                rightMargin=36, leftMargin=36,
                                topMargin=36, bottomMargin=36,
                                title=f"{APP_NAME} evaluation", invariant=True)

        elements = [
            Paragraph(f"{APP_NAME}: Evaluation Report", self.styles['Title']),
            Spacer(1, 0.15 * inch),
            Paragraph("Run", self.styles['Heading1']),
            self._create_run_table(run_info),
            Spacer(1, 0.1 * inch),
        ]

        elements.append(Paragraph("1. Metrics", self.styles['Heading2']))
        elements.append(self._create_metrics_table(summary))
        elements.append(Spacer(1, 0.1 * inch))

        elements.append(Paragraph("2. Episode Outcomes", self.styles['Heading2']))
        elements.append(self._create_outcome_table(records))
        elements.append(Spacer(1, 0.1 * inch))

        elements.append(Paragraph("3. Observations", self.styles['Heading2']))
        elements.append(ListFlowable(
            [ListItem(Paragraph(note, self.styles['Normal'])) for note in self._get_observations(summary)],
            bulletType='bullet',
            leftIndent=20
        ))

        elements.append(Spacer(1, 0.1 * inch))
        elements.append(Paragraph(
            f"Generated by {APP_NAME} {APP_VERSION}. Positional errors in meters; "
            f"standard deviations are population values over all trials.",
            self.styles['Italic']
        ))

        doc.build(elements)
        logger.info(f"Created evaluation report at {path}")
        return path

    def _create_run_table(self, run_info: Dict[str, Any]) -> Table:
        data = [[str(key).replace('_', ' ').title(), str(value)] for key, value in sorted(run_info.items())]
        if not data:
            data = [["Run", "N/A"]]
        table = Table(data, colWidths=[2 * inch, 4.5 * inch])
        table.setStyle(TableStyle([
            ('BACKGROUND', (0, 0), (0, -1), colors.lightgrey),
            ('FONTNAME', (0, 0), (-1, -1), 'Helvetica'),
            ('ALIGN', (0, 0), (-1, -1), 'LEFT'),
            ('GRID', (0, 0), (-1, -1), 1, colors.black)
        ]))
        return table

    def _create_metrics_table(self, summary: MetricsSummary) -> Table:
        data = [
            ["Success Ratio", f"{summary.success_ratio:.1f}%"],
            ["Trials", str(summary.trials)],
            ["Average Cumulative Reward", f"{summary.average_reward:.4f}"],
            ["Reward Std", f"{summary.reward_std:.4f}"],
            ["Average Positional Error", f"{summary.average_positional_error:.4f} m"],
            ["Precision (Error Std)", f"{summary.precision:.4f} m"],
        ]
        table = Table(data, colWidths=[2.5 * inch, 2 * inch])
        table.setStyle(TableStyle([
            ('BACKGROUND', (0, 0), (0, -1), colors.lightgrey),
            ('BACKGROUND', (1, 0), (1, 0), self._get_ratio_color(summary.success_ratio)),
            ('TEXTCOLOR', (1, 0), (1, 0), colors.white),
            ('ALIGN', (0, 0), (0, -1), 'LEFT'),
            ('ALIGN', (1, 0), (1, -1), 'CENTER'),
            ('FONTNAME', (0, 0), (-1, -1), 'Helvetica'),
            ('FONTNAME', (1, 0), (1, 0), 'Helvetica-Bold'),
            ('BOTTOMPADDING', (0, 0), (-1, -1), 8),
            ('GRID', (0, 0), (-1, -1), 1, colors.black)
        ]))
        return table

    def _create_outcome_table(self, records: Sequence[TrialRecord]) -> Table:
        counts = Counter(r.status for r in records)
        total = max(len(records), 1)
        header = [Paragraph(text, self.styles['TableHeader']) for text in ("Status", "Trials", "Share")]
        data = [header]
        for status in TerminationStatus:
            if status is TerminationStatus.RUNNING:
                continue
            n = counts.get(status.value, 0)
            data.append([status.value, str(n), f"{100.0 * n / total:.1f}%"])
        table = Table(data, colWidths=[1.8 * inch, 1.2 * inch, 1.2 * inch])
        table.setStyle(TableStyle([
            ('BACKGROUND', (0, 0), (-1, 0), colors.lightgrey),
            ('ALIGN', (1, 1), (-1, -1), 'CENTER'),
            ('FONTNAME', (0, 1), (-1, -1), 'Helvetica'),
            ('GRID', (0, 0), (-1, -1), 1, colors.black)
        ]))
        return table

    def _get_observations(self, summary: MetricsSummary) -> List[str]:
        notes = []
        if summary.success_ratio >= 90:
            notes.append("The policy reaches and holds the final waypoint in nearly every trial.")
        elif summary.success_ratio >= 50:
            notes.append("The policy succeeds in most trials; inspect failed trials in trials.csv.")
        else:
            notes.append("Most trials fail; check the termination breakdown for the dominant cause.")
        if summary.trials > 1 and summary.precision > summary.average_positional_error:
            notes.append("Positional error spread exceeds its mean; a few trials end far from target.")
        notes.append("Raw positional-error samples are in errors.csv for distribution fitting.")
        return notes

    def _get_ratio_color(self, ratio: float):
        """Get color for success ratio display based on value."""
        if ratio >= 85:
            return colors.green
        elif ratio >= 70:
            return colors.blue
        elif ratio >= 50:
            return colors.orange
        else:
            return colors.red
