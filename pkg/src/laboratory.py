"""
Main laboratory class for the Rellich verification lab
# Runs the configured suites for every (dimension, field) pair
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from src.rellich import __version__
from src.rellich import identities
from src.rellich.fields import make_field
from src.rellich.identities import Fingerprint, IdentityChecker, IdentityReport
from src.rellich.operators import pointwise_identity_suite
from src.rellich.quadrature import ERROR_MODEL
from src.utils.errors import ConfigError, LabError

# Initialize logger
logger = logging.getLogger("rellich-lab")

EXIT_PASS = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def sample_points(field, count, r_min, r_max, seed, stream=0):
    """
    Seeded points in a spherical shell, inside the support when the field has one.
    Fields living in a ball off the origin are sampled in that ball.

    Args:
        field (ScalarField): Field whose support bounds the radii
        count (int): Number of points
        r_min (float): Inner radius
        r_max (float): Outer radius
        seed (int): Base seed
        stream (int): Independent stream index

    Returns:
        np.ndarray: Points, shape (count, n)
    """
    centre = np.zeros(field.n)
    if field.centre is not None:
        centre, r_min, r_max = np.asarray(field.centre), 0.0, field.centre_radius
    elif field.support is not None:
        r_min, r_max = field.support
    rng = np.random.default_rng([seed, field.n, stream])
    directions = rng.standard_normal((count, field.n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = r_min + (r_max - r_min) * rng.random(count)
    return centre + directions * radii[:, None]


@dataclass
class Task:
    """One (dimension, field) group or one field-free suite."""

    index: int
    n: int
    params: object = None
    suite: str = None


class RellichLaboratory:
    """
    Run verification suites from a validated RunConfig.
    """

    def __init__(self, config):
        """
        Initialize the laboratory.

        Args:
            config (RunConfig): Validated configuration
        """
        self.config = config
        self.workers = config.quadrature.workers

        # Statistics tracking
        self.stats = {"passed": 0, "failed": 0, "errors": 0}
        self.suite_stats = {suite: {"passed": 0, "failed": 0} for suite in config.suites}
        self.failures = []
        self.errors = []

    def manifest(self):
        return {
            "tool": "rellich-lab",
            "version": __version__,
            "seed": self.config.seed,
            "config": self.config.as_dict(),
            "error_model": ERROR_MODEL,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }

    def tasks(self):
        """Work items in output order: field groups per dimension, then lemma and scan."""
        field_suites = [s for s in self.config.suites if s not in ("lemma", "scan")]
        tasks = []
        if field_suites:
            for n in self.config.dimensions:
                for params in self.config.field_params(n):
                    tasks.append(Task(len(tasks), n, params))
        if "lemma" in self.config.suites:
            tasks.append(Task(len(tasks), 0, suite="lemma"))
        if "scan" in self.config.suites:
            for n in self.config.dimensions:
                tasks.append(Task(len(tasks), n, suite="scan"))
        return tasks

    def _field_reports(self, task):
        field = make_field(task.params)
        checker = IdentityChecker(field, self.config.quadrature, self.config.tolerances)
        logger.info(f"Checking {field.label} in n={task.n} [{checker.spec.describe()}]")
        reports = []
        for suite in self.config.suites:
            if suite == "hardy":
                reports += checker.hardy()
            elif suite == "rellich":
                reports += checker.rellich_equalities()
                reports.append(checker.rellich_implication())
            elif suite == "theorem2":
                reports += checker.theorem2()
            elif suite == "corollary":
                reports += checker.corollary()
            elif suite == "inequality":
                reports.append(checker.rellich_inequality())
            elif suite == "proof-chain":
                reports += checker.proof_chain()
            elif suite == "pointwise":
                reports += self._pointwise_reports(field, task)
        logger.debug(f"Integrator stats for {field.key}: {checker.integrator.stats}")
        return reports

    def _pointwise_reports(self, field, task):
        settings = self.config.pointwise
        x = sample_points(
            field, settings.points, settings.r_min, settings.r_max, self.config.seed, task.index
        )
        residuals = pointwise_identity_suite(field, x, settings.lambdas)
        tolerance = self.config.tolerances.pointwise
        fingerprint = Fingerprint(field.label, field.n, "pointwise", self.config.seed)
        reports = []
        for name, residual in residuals.items():
            report = IdentityReport(
                "pointwise",
                name,
                (
                    ("max_abs_lhs", residual.lhs_max, 0.0),
                    ("max_abs_rhs", residual.rhs_max, 0.0),
                ),
                residual.lhs_max,
                residual.rhs_max,
                residual.abs_residual,
                residual.rel_residual,
                tolerance,
                residual.passed(tolerance),
                kind="pointwise",
                fingerprint=fingerprint,
                note=f"worst over {settings.points} points",
            )
            identities.log_report(report)
            reports.append(report)
        return reports

    def run_task(self, task):
        """
        Run one task.

        Args:
            task (Task): Work item

        Returns:
            tuple: (reports, error); error is None on success
        """
        try:
            if task.suite == "lemma":
                lemma = self.config.lemma
                return [
                    identities.check_lemma_batch(
                        lemma.triples, self.config.seed, lemma.max_dim, lemma.c_max,
                        self.config.tolerances,
                    )
                ], None
            if task.suite == "scan":
                _, reports = identities.extremiser_scan(
                    self.config.scan.deltas, task.n, self.config.quadrature, self.config.tolerances
                )
                return reports, None
            return self._field_reports(task), None
        except ConfigError:
            raise
        except LabError as e:
            what = task.suite or f"{task.params.label} n={task.n}"
            logger.error(f"✗ {what}: {e}")
            return [], e

    def _record(self, reports, error):
        if error is not None:
            self.stats["errors"] += 1
            self.errors.append(str(error))
        for report in reports:
            stats = self.suite_stats.setdefault(report.suite, {"passed": 0, "failed": 0})
            if report.passed:
                self.stats["passed"] += 1
                stats["passed"] += 1
            else:
                self.stats["failed"] += 1
                stats["failed"] += 1
                self.failures.append(f"{report.suite}/{report.name} ({report.fingerprint.field})")

    def run(self, writer):
        """
        Run every task and stream the reports in task order.

        Args:
            writer (ReportWriter): Destination of the manifest and reports

        Returns:
            int: Exit code (0 all pass, 1 identity failure, 3 runtime error)
        """
        writer.write_manifest(self.manifest())
        tasks = self.tasks()
        logger.info(f"Running {len(tasks)} task(s) with {self.workers} worker(s)")
        if self.workers > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as executor:
                results = executor.map(self.run_task, tasks)
                for reports, error in results:
                    self._emit(writer, reports, error)
        else:
            for task in tasks:
                self._emit(writer, *self.run_task(task))

        if self.errors:
            logger.error(f"{len(self.errors)} task(s) aborted with runtime errors")
            return EXIT_RUNTIME
        if self.failures:
            logger.error(f"Failed identities: {', '.join(self.failures)}")
            return EXIT_FAILED
        logger.info(f"All {self.stats['passed']} identity checks passed")
        return EXIT_PASS

    def _emit(self, writer, reports, error):
        for report in reports:
            writer.write(report)
        self._record(reports, error)
