"""Core statistical primitives for mixture-of-Cox subgroup models.

A trial records, for each subject, a right-censored follow-up time, a
treatment indicator and the result of a diagnostic test for a binary
biomarker.  The test has known sensitivity and specificity, so the true
biomarker status is latent and the survivor function in each observed test
group is a two-component mixture of proportional-hazards models.  This
module holds the value types shared by the estimator, the inference
routines and the simulator, together with the diagnostic-accuracy algebra
(predictive values), the component log-likelihoods and the mixture
survivor function.

All types are immutable after construction and all functions are pure, so
everything here is safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DatasetError

__all__ = [
    "Subject",
    "Dataset",
    "DiagnosticModel",
    "EffectParams",
    "BaselineHazard",
    "ppv",
    "npv",
    "linear_predictor",
    "log_component_likelihood",
    "mixture_survival",
]

# Sentinel used for a missing diagnostic-test result in array form.
TEST_MISSING = -1


@dataclass(frozen=True)
class Subject:
    """One subject: follow-up time, event status, arm and test result.

    Parameters
    ----------
    time : float
        Follow-up time, strictly positive.
    event : int
        1 if the event was observed, 0 if censored.
    treatment : int
        1 for the experimental arm, 0 for control.
    test : int or None
        Observed biomarker test result: 1 positive, 0 negative,
        None when the test was not taken.
    """

    time: float
    event: int
    treatment: int
    test: int | None

    def __post_init__(self):
        if not self.time > 0:
            raise DatasetError(f"time must be positive, got {self.time}")
        if self.event not in (0, 1):
            raise DatasetError(f"event must be 0 or 1, got {self.event}")
        if self.treatment not in (0, 1):
            raise DatasetError(f"treatment must be 0 or 1, got {self.treatment}")
        if self.test not in (0, 1, None):
            raise DatasetError(f"test must be 0, 1 or None, got {self.test}")


class Dataset:
    """Immutable column store for a trial's subjects.

    Validates that the data can identify anything at all: at least one
    observed event and at least one subject in each treatment arm.
    """

    __slots__ = ("time", "event", "treatment", "test", "__weakref__")

    def __init__(self, subjects: Iterable[Subject]):
        subs = list(subjects)
        time = np.array([s.time for s in subs], dtype=float)
        event = np.array([s.event for s in subs], dtype=np.int8)
        treatment = np.array([s.treatment for s in subs], dtype=np.int8)
        test = np.array(
            [TEST_MISSING if s.test is None else s.test for s in subs], dtype=np.int8
        )
        self._init_arrays(time, event, treatment, test)

    @classmethod
    def from_arrays(cls, time, event, treatment, test) -> "Dataset":
        """Build a dataset from columns; ``test`` uses -1 for missing."""
        obj = cls.__new__(cls)
        obj._init_arrays(
            np.array(time, dtype=float),
            np.array(event, dtype=np.int8),
            np.array(treatment, dtype=np.int8),
            np.array(test, dtype=np.int8),
        )
        return obj

    def _init_arrays(self, time, event, treatment, test):
        n = time.size
        if not (event.size == treatment.size == test.size == n):
            raise DatasetError("column lengths differ")
        if n == 0:
            raise DatasetError("dataset is empty")
        if not np.all(time > 0):
            raise DatasetError("all follow-up times must be positive")
        if not np.all(np.isin(event, (0, 1))):
            raise DatasetError("event indicators must be 0 or 1")
        if not np.all(np.isin(treatment, (0, 1))):
            raise DatasetError("treatment indicators must be 0 or 1")
        if not np.all(np.isin(test, (0, 1, TEST_MISSING))):
            raise DatasetError("test results must be 0, 1 or -1 (missing)")
        if not np.any(event == 1):
            raise DatasetError("dataset has no observed events")
        if len(np.unique(treatment)) < 2:
            raise DatasetError("both treatment arms must be present")
        for name, arr in (
            ("time", time), ("event", event), ("treatment", treatment), ("test", test)
        ):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.time.size

    def subjects(self) -> list[Subject]:
        """Materialize the rows as Subject values."""
        return [
            Subject(
                float(t),
                int(d),
                int(x),
                None if v == TEST_MISSING else int(v),
            )
            for t, d, x, v in zip(self.time, self.event, self.treatment, self.test)
        ]

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")


@dataclass(frozen=True)
class DiagnosticModel:
    """Accuracy of the biomarker test and the biomarker prevalence.

    Parameters
    ----------
    sensitivity : float
        Probability of a positive test given true positive status; (0, 1].
    specificity : float
        Probability of a negative test given true negative status; (0, 1].
    prevalence : float
        Marginal probability of true positive status; (0, 1).  When
        ``prevalence_known`` is False this is only a nominal value and the
        estimator replaces it with a data-driven estimate.
    prevalence_known : bool
        Whether ``prevalence`` is to be trusted rather than estimated.
    """

    sensitivity: float
    specificity: float
    prevalence: float
    prevalence_known: bool = True

    def __post_init__(self):
        if not 0 < self.sensitivity <= 1:
            raise DatasetError("sensitivity must be in (0, 1]")
        if not 0 < self.specificity <= 1:
            raise DatasetError("specificity must be in (0, 1]")
        if not self.sensitivity + self.specificity > 1:
            raise DatasetError("test must be informative: sensitivity + specificity > 1")
        if not 0 < self.prevalence < 1:
            raise DatasetError("prevalence must be in (0, 1)")

    def with_prevalence(self, pi: float) -> "DiagnosticModel":
        return DiagnosticModel(self.sensitivity, self.specificity, pi, self.prevalence_known)


@dataclass(frozen=True)
class EffectParams:
    """Log-hazard-scale regression effects.

    ``beta1`` is the treatment effect in the biomarker-negative group,
    ``beta2`` the effect of positive biomarker status under control, and
    ``gamma`` the treatment-by-biomarker interaction, so the treatment
    log hazard ratio is ``beta1`` for negatives and ``beta1 + gamma`` for
    positives.
    """

    beta1: float
    beta2: float
    gamma: float

    def __post_init__(self):
        for name in ("beta1", "beta2", "gamma"):
            if not np.isfinite(getattr(self, name)):
                raise DatasetError(f"{name} must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.beta1, self.beta2, self.gamma], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "EffectParams":
        b1, b2, g = (float(v) for v in arr)
        return cls(b1, b2, g)


NULL_EFFECTS = EffectParams(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class BaselineHazard:
    """Piecewise-constant baseline hazard on inter-event intervals.

    The hazard equals ``increments[j]`` on the interval
    ``(event_times[j-1], event_times[j]]`` (with ``event_times[-1]``
    read as 0) and 0 beyond the last event time, so the cumulative hazard
    is continuous, piecewise linear, and flat after the last event.
    """

    event_times: np.ndarray
    increments: np.ndarray
    # cumulative hazard at each event time; derived, cached at construction
    _cum_at_events: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        ets = np.array(self.event_times, dtype=float)
        inc = np.array(self.increments, dtype=float)
        if ets.size != inc.size:
            raise DatasetError("event_times and increments must have equal length")
        if ets.size and not np.all(ets > 0):
            raise DatasetError("event times must be positive")
        if ets.size and not np.all(np.diff(ets) > 0):
            raise DatasetError("event times must be strictly increasing")
        if inc.size and not np.all(inc > 0):
            raise DatasetError("hazard increments must be positive")
        ets.flags.writeable = False
        inc.flags.writeable = False
        object.__setattr__(self, "event_times", ets)
        object.__setattr__(self, "increments", inc)
        widths = np.diff(np.concatenate(([0.0], ets)))
        cum = np.concatenate(([0.0], np.cumsum(inc * widths)))
        cum.flags.writeable = False
        object.__setattr__(self, "_cum_at_events", cum)

    @property
    def interval_widths(self) -> np.ndarray:
        return np.diff(np.concatenate(([0.0], self.event_times)))

    def hazard(self, t):
        """Hazard level at time ``t`` (0 beyond the last event time)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="left")
        padded = np.concatenate((self.increments, [0.0]))
        out = padded[np.minimum(idx, self.event_times.size)]
        return out if out.ndim else float(out)

    def cumulative(self, t):
        """Cumulative hazard at ``t``: piecewise linear, flat past the end."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DatasetError("cumulative hazard requires t >= 0")
        m = self.event_times.size
        idx = np.searchsorted(self.event_times, t, side="left")
        left = np.where(idx > 0, self.event_times[np.minimum(idx, m) - 1], 0.0)
        part = np.where(idx < m, t - left, 0.0)
        padded = np.concatenate((self.increments, [0.0]))
        out = self._cum_at_events[idx] + padded[idx] * part
        return out if out.ndim else float(out)

    def step_cumulative(self, t):
        """Cumulative hazard with all of an interval's mass placed at its
        event time, i.e. the usual jump-form nonparametric estimate.

        This is the evaluation the EM estimator uses in its likelihoods:
        the weighted partial-likelihood update and the baseline update are
        the exact joint maximizers of the complete-data likelihood under
        this form, which makes every EM iteration an exact ascent step.
        """
        t = np.asarray(t, dtype=float)
        nle = np.searchsorted(self.event_times, t, side="right")
        out = self._cum_at_events[nle]
        return out if out.ndim else float(out)


def ppv(diag: DiagnosticModel) -> float:
    """Positive predictive value: P(true positive | test positive)."""
    pi, se, sp = diag.prevalence, diag.sensitivity, diag.specificity
    return pi * se / (pi * se + (1 - pi) * (1 - sp))


def npv(diag: DiagnosticModel) -> float:
    """Negative predictive value: P(true negative | test negative)."""
    pi, se, sp = diag.prevalence, diag.sensitivity, diag.specificity
    return (1 - pi) * sp / (pi * (1 - se) + (1 - pi) * sp)


def linear_predictor(theta: EffectParams, x, z):
    """Log relative hazard ``beta1*x + beta2*z + gamma*x*z``."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    out = theta.beta1 * x + theta.beta2 * z + theta.gamma * x * z
    return out if out.ndim else float(out)


def log_component_likelihood(
    s: Subject, theta: EffectParams, baseline: BaselineHazard, z: int
) -> float:
    """Log-likelihood of one subject given true biomarker status ``z``.

    For an event this is ``log h0(t) + eta - H0(t) exp(eta)``, for a
    censored subject just ``-H0(t) exp(eta)``, with ``eta`` the linear
    predictor at (treatment, z) and ``H0`` the piecewise-linear cumulative
    hazard.

    Raises
    ------
    DegenerateDataError
        If the subject is an event at a time where the hazard is 0 (past
        the last event time of ``baseline``); this cannot happen when the
        baseline was estimated from data containing the subject.
    """
    from .errors import DegenerateDataError

    eta = linear_predictor(theta, s.treatment, z)
    total = -baseline.cumulative(s.time) * np.exp(eta)
    if s.event:
        h = baseline.hazard(s.time)
        if h <= 0:
            raise DegenerateDataError(
                f"event at t={s.time} where the baseline hazard is 0"
            )
        total += np.log(h) + eta
    return float(total)


def mixture_survival(
    t: float,
    x: int,
    group: int | None,
    theta: EffectParams,
    baseline: BaselineHazard,
    diag: DiagnosticModel,
) -> float:
    """Survivor probability at ``t`` for a subject in a test-result group.

    ``group`` is the observed test result (1 positive, 0 negative, None
    missing).  The result is the two-component mixture of the latent-status
    survivor functions ``exp(-H0(t) exp(eta))`` with mixing weight PPV,
    1 - NPV or the prevalence, respectively.  Computed on the log scale.
    """
    if group == 1:
        w = ppv(diag)
    elif group == 0:
        w = 1.0 - npv(diag)
    elif group is None:
        w = diag.prevalence
    else:
        raise DatasetError(f"group must be 0, 1 or None, got {group}")
    h0t = baseline.cumulative(t)
    log_s1 = -h0t * np.exp(linear_predictor(theta, x, 1))
    log_s0 = -h0t * np.exp(linear_predictor(theta, x, 0))
    if w == 1.0:
        return float(np.exp(log_s1))
    if w == 0.0:
        return float(np.exp(log_s0))
    return float(np.exp(np.logaddexp(np.log(w) + log_s1, np.log1p(-w) + log_s0)))
