from django.db import models
from django.utils import timezone


class ExperimentKind(models.TextChoices):
    LANGEVIN_DECAY = "langevin-decay", "Order-parameter decay"
    SPECTRUM = "spectrum", "Order-parameter spectrum"
    SYNC_SWEEP = "sync-sweep", "Synchronization sweep"
    HISTOGRAMS = "histograms", "Phase-space histograms"
    LIOUVILLE_SPECTRUM = "liouville-spectrum", "Liouvillian spectrum"
    ORACLE_SUITE = "oracle-suite", "Oracle suite"


class RunStatus(models.TextChoices):
    RUNNING = "running", "Running"
    SUCCEEDED = "succeeded", "Succeeded"
    PARTIAL = "partial", "Partial results"
    FAILED = "failed", "Failed"


class ExperimentRunQuerySet(models.QuerySet):
    """Custom queryset for ExperimentRun model"""

    def finished(self):
        return self.exclude(status=RunStatus.RUNNING)

    def of_kind(self, kind):
        return self.filter(kind=kind)


class ExperimentRun(models.Model):
    """
    One invocation of an experiment command.

    The row is created as ``running`` before any numerical work starts and
    closed with the exit code and JSON summary the command printed.
    """

    kind = models.CharField(
        max_length=32,
        choices=ExperimentKind.choices,
        verbose_name="Experiment kind"
    )

    status = models.CharField(
        max_length=16,
        choices=RunStatus.choices,
        default=RunStatus.RUNNING,
        verbose_name="Status"
    )

    output_dir = models.CharField(
        max_length=1024,
        verbose_name="Output directory"
    )

    config = models.JSONField(
        default=dict,
        verbose_name="Resolved configuration"
    )

    # 64-bit seeds do not fit a signed BigIntegerField
    seed = models.CharField(
        max_length=24,
        verbose_name="Seed"
    )

    workers = models.PositiveIntegerField(
        default=1,
        verbose_name="Worker processes"
    )

    git_describe = models.CharField(
        max_length=128,
        blank=True,
        verbose_name="Git describe",
        help_text="Build identifier, empty when not run from a checkout"
    )

    exit_code = models.IntegerField(
        null=True,
        blank=True,
        verbose_name="Exit code"
    )

    summary = models.JSONField(
        default=dict,
        blank=True,
        verbose_name="Summary"
    )

    started_at = models.DateTimeField(
        default=timezone.now,
        verbose_name="Started at"
    )

    duration = models.FloatField(
        null=True,
        blank=True,
        verbose_name="Duration (s)"
    )

    objects = ExperimentRunQuerySet.as_manager()

    class Meta:
        ordering = ['-started_at']
        indexes = [
            models.Index(fields=['kind', '-started_at'], name='idx_kind_started'),
            models.Index(fields=['status'], name='idx_status'),
        ]
        verbose_name = "Experiment run"
        verbose_name_plural = "Experiment runs"

    def __str__(self):
        return f"{self.kind} #{self.pk} ({self.status})"

    def close(self, status, exit_code, summary=None, duration=None):
        """Record the outcome of the run"""
        self.status = status
        self.exit_code = exit_code
        if summary is not None:
            self.summary = summary
        if duration is not None:
            self.duration = duration
        self.save(update_fields=['status', 'exit_code', 'summary', 'duration'])


class OracleCheck(models.Model):
    """Outcome of one oracle comparison inside an oracle-suite run."""

    run = models.ForeignKey(
        ExperimentRun,
        on_delete=models.CASCADE,
        related_name='oracle_checks',
        verbose_name="Run"
    )

    name = models.CharField(
        max_length=100,
        verbose_name="Check"
    )

    expected = models.FloatField(
        null=True,
        blank=True,
        verbose_name="Expected"
    )

    provenance = models.CharField(
        max_length=255,
        blank=True,
        verbose_name="Provenance",
        help_text="Where the expected value comes from"
    )

    observed = models.FloatField(
        null=True,
        blank=True,
        verbose_name="Observed"
    )

    tolerance = models.FloatField(
        verbose_name="Tolerance"
    )

    passed = models.BooleanField(
        default=False,
        verbose_name="Passed"
    )

    class Meta:
        ordering = ['run', 'id']
        verbose_name = "Oracle check"
        verbose_name_plural = "Oracle checks"

    def __str__(self):
        return f"{self.name}: {'passed' if self.passed else 'failed'}"

    @classmethod
    def from_report(cls, run, report):
        """Build an unsaved row from an engine OracleReport; NaN is stored as NULL"""
        def finite(value):
            return value if value == value else None

        return cls(
            run=run,
            name=report.name,
            expected=finite(report.expected),
            provenance=report.provenance[:255],
            observed=finite(report.observed),
            tolerance=report.tolerance,
            passed=report.passed,
        )
