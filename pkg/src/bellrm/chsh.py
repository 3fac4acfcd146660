"""Correlation, CHSH and ergodicity estimators.

All estimators are pure aggregations over coincidence records; counts are
exact integers so partial results can be reduced in any order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    IncompleteSettingsError,
    UndefinedStatisticError,
    UnsupportedModelError,
)
from .models import (
    PI,
    HIDDEN_VARIABLE_KINDS,
    ModelKind,
    OutcomeModel,
    local_hv_bit,
    normalize_angle,
    stationary_lambda_samples,
)
from .streams import substream
from .timetags import match_coincidences

TSIRELSON_BOUND = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class CorrelationEstimate:
    alpha: float
    beta: float
    n00: int
    n01: int
    n10: int
    n11: int
    E: float
    std_err: float

    @property
    def n_total(self) -> int:
        return self.n00 + self.n01 + self.n10 + self.n11


def correlation_from_counts(
    n00: int, n01: int, n10: int, n11: int, alpha: float = math.nan, beta: float = math.nan
) -> CorrelationEstimate:
    n = n00 + n01 + n10 + n11
    if n == 0:
        raise UndefinedStatisticError("correlation undefined for zero records")
    e = (n00 + n11 - n01 - n10) / n
    std_err = math.sqrt(max(0.0, 1.0 - e * e) / n)
    return CorrelationEstimate(alpha, beta, n00, n01, n10, n11, e, std_err)


def estimate_correlation(
    records: np.ndarray, alpha: float = math.nan, beta: float = math.nan
) -> CorrelationEstimate:
    """Correlation of records that all share one settings pair."""
    joint = 2 * records["bit_a"].astype(np.int64) + records["bit_b"]
    counts = np.bincount(joint, minlength=4)
    return correlation_from_counts(
        int(counts[0]), int(counts[1]), int(counts[2]), int(counts[3]), alpha, beta
    )


@dataclass(frozen=True)
class ChshAngles:
    """The four analyzer angles; defaults reach the quantum maximum."""

    a: float = 0.0
    a_prime: float = PI / 4
    b: float = PI / 8
    b_prime: float = 3 * PI / 8

    @property
    def pairs(self) -> tuple:
        """Setting pairs in S order: (a,b), (a,b'), (a',b), (a',b')."""
        return (
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        )


#: signs applied to the four pair correlations: S = E1 - E2 + E3 + E4.
CHSH_SIGNS = (1.0, -1.0, 1.0, 1.0)


@dataclass(frozen=True)
class ChshEstimate:
    slice_index: int | None
    correlations: tuple
    S: float
    std_err: float

    @property
    def n_records(self) -> int:
        return sum(c.n_total for c in self.correlations)


def _menu_indices_for_pair(settings_menu, pair, tol=1e-9) -> list[int]:
    a, b = normalize_angle(pair[0]), normalize_angle(pair[1])
    hits = []
    for k, (ma, mb) in enumerate(settings_menu):
        if abs(ma - a) < tol and abs(mb - b) < tol:
            hits.append(k)
    return hits


def estimate_chsh(
    records: np.ndarray,
    settings_menu,
    angles: ChshAngles = ChshAngles(),
    slice_index: int | None = None,
) -> ChshEstimate:
    """CHSH estimate S = |E(a,b) - E(a,b') + E(a',b) + E(a',b')|.

    ``slice_index`` of None pools every slice; otherwise only records of
    that slice enter.  Raises IncompleteSettingsError when any of the four
    settings pairs has no records.
    """
    if slice_index is not None:
        records = records[records["slice_index"] == slice_index]
    correlations = []
    s_value = 0.0
    var = 0.0
    for sign, pair in zip(CHSH_SIGNS, angles.pairs):
        menu_idx = _menu_indices_for_pair(settings_menu, pair)
        if not menu_idx:
            raise IncompleteSettingsError(
                f"settings menu has no entry for pair {pair}"
            )
        mask = np.isin(records["setting_index"], menu_idx)
        selected = records[mask]
        if selected.size == 0:
            raise IncompleteSettingsError(
                f"no records for settings pair {pair}"
                + (f" in slice {slice_index}" if slice_index is not None else "")
            )
        est = estimate_correlation(selected, pair[0], pair[1])
        correlations.append(est)
        s_value += sign * est.E
        var += est.std_err**2
    return ChshEstimate(
        slice_index=slice_index,
        correlations=tuple(correlations),
        S=abs(s_value),
        std_err=math.sqrt(var),
    )


def chsh_by_slice(
    records: np.ndarray,
    settings_menu,
    n_slices: int,
    angles: ChshAngles = ChshAngles(),
) -> list[ChshEstimate]:
    return [
        estimate_chsh(records, settings_menu, angles, slice_index=k)
        for k in range(n_slices)
    ]


def qm_chsh_value(angles: ChshAngles = ChshAngles()) -> float:
    """Quantum prediction for the configured angles (2*sqrt(2) at default)."""
    s = 0.0
    for sign, (a, b) in zip(CHSH_SIGNS, angles.pairs):
        s += sign * math.cos(2.0 * (a - b))
    return abs(s)


# --------------------------------------------------------------------------
# S versus coincidence window
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowScanPoint:
    window_ns: int
    n_matched: int
    S: float
    std_err: float
    S_pred: float


def s_vs_window(
    events_a: np.ndarray,
    events_b: np.ndarray,
    windows_ns,
    settings_menu,
    *,
    rep_rate_hz: float,
    run_duration_s: float,
    angles: ChshAngles = ChshAngles(),
) -> list[WindowScanPoint]:
    """Measured S(W) plus the uncorrelated-accidentals prediction.

    The prediction anchors on the smallest window: the matched pairs there
    are taken as true coincidences, per-station leftover rates give the
    accidental-pair rate 2*rA*rB*W*T, and a survival factor
    exp(-(rA+rB)*W) accounts for true pairs whose partner is stolen by an
    earlier in-window accidental.  Both effects assume the out-of-pulse
    detections are fully uncorrelated, which is exactly the hypothesis the
    measured curve tests.
    """
    windows = sorted(int(w) for w in windows_ns)
    if not windows:
        raise ConfigError("empty window list")
    if run_duration_s <= 0:
        raise ConfigError("run_duration_s must be > 0")

    measured = []
    for w in windows:
        records = match_coincidences(
            events_a, events_b, w, rep_rate_hz=rep_rate_hz, settings_menu=settings_menu
        )
        est = estimate_chsh(records, settings_menu, angles)
        measured.append((w, records.size, est.S, est.std_err))

    w0, n0, s0, se0 = measured[0]
    t_run = float(run_duration_s)
    rate_a = max(0.0, (events_a.size - n0) / t_run)
    rate_b = max(0.0, (events_b.size - n0) / t_run)

    def accidental(w):
        return 2.0 * rate_a * rate_b * (w * 1e-9) * t_run

    n_true = max(1.0, n0 - accidental(w0))
    surv0 = math.exp(-(rate_a + rate_b) * (w0 * 1e-9))

    def fraction(w):
        kept = n_true * math.exp(-(rate_a + rate_b) * (w * 1e-9)) / surv0
        stolen = n_true - kept
        return kept / (kept + accidental(w) + stolen)

    s_true = s0 / fraction(w0)

    return [
        WindowScanPoint(w, n, s, se, s_true * fraction(w))
        for (w, n, s, se) in measured
    ]


# --------------------------------------------------------------------------
# Ergodicity: ensemble average vs time average
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ErgodicityReport:
    alpha: float
    window_s: float
    t_start_s: float
    ensemble_avg: float
    time_avg: float
    gap: float
    combined_std_err: float
    threshold: float

    @property
    def z(self) -> float:
        if self.combined_std_err > 0:
            return self.gap / self.combined_std_err
        return math.inf if self.gap > 0 else 0.0


def ensemble_average(
    model: OutcomeModel,
    alpha: float,
    n_samples: int = 1_000_000,
    seed: int = 0,
    lam_samples: np.ndarray | None = None,
) -> tuple[float, float]:
    """Monte Carlo estimate of the hidden-variable ensemble average.

    Integrates the transmitted-port probability over the stationary
    density of the hidden angle; ``lam_samples`` substitutes an explicit
    sample set (e.g. a degenerate density) for the model's own.
    """
    if lam_samples is None:
        if model.kind not in HIDDEN_VARIABLE_KINDS:
            raise UnsupportedModelError(
                f"{model.kind.value} has no hidden-variable ensemble"
            )
        lam_samples = stationary_lambda_samples(
            model, n_samples, substream(seed, "ensemble-average")
        )
    transmitted = local_hv_bit(lam_samples, alpha) == 0
    p = float(np.mean(transmitted))
    se = math.sqrt(p * (1.0 - p) / transmitted.size)
    return p, se


def model_time_average(
    model: OutcomeModel,
    alpha: float,
    t_start_s: float,
    window_s: float,
    rep_rate_hz: float = 1.0e6,
    seed: int = 0,
) -> tuple[float, float, int]:
    """Fraction of transmitted outcomes over pulses inside a time window.

    Runs the model with the analyzer fixed at ``alpha`` for every pulse
    whose start falls in [t_start, t_start + window).
    """
    if window_s <= 0:
        raise ConfigError("window_s must be > 0")
    first = int(math.ceil(t_start_s * rep_rate_hz - 1e-9))
    last = int(math.ceil((t_start_s + window_s) * rep_rate_hz - 1e-9))
    n = last - first
    if n <= 0:
        raise UndefinedStatisticError("window contains no pulses")
    if model.kind is ModelKind.LOCAL_ERGODIC:
        lam = substream(seed, "time-average").random(n) * PI
    elif model.kind is ModelKind.NONERGODIC:
        times = (first + np.arange(n, dtype=np.float64)) / rep_rate_hz
        lam = (PI / model.drift_period_s * times) % PI
    else:
        raise UnsupportedModelError(
            f"{model.kind.value} has no hidden-variable trajectory"
        )
    transmitted = local_hv_bit(lam, alpha) == 0
    p = float(np.mean(transmitted))
    se = math.sqrt(p * (1.0 - p) / n)
    return p, se, n


def time_average_trace(
    events: np.ndarray,
    t_start_s: float,
    window_s: float,
    station: int = 0,
    setting_indices=None,
) -> tuple[float, float, int]:
    """Transmitted fraction measured from an event trace inside a window."""
    t0 = int(round(t_start_s * 1e9))
    t1 = int(round((t_start_s + window_s) * 1e9))
    mask = (events["station"] == station) & (events["timestamp_ns"] >= t0) & (
        events["timestamp_ns"] < t1
    )
    if setting_indices is not None:
        mask &= np.isin(events["setting_index"], list(setting_indices))
    selected = events[mask]
    if selected.size == 0:
        raise UndefinedStatisticError("no events for this setting inside the window")
    p = float(np.mean(selected["port_bit"] == 0))
    se = math.sqrt(p * (1.0 - p) / selected.size)
    return p, se, int(selected.size)


def ergodicity_gap(
    model: OutcomeModel,
    alpha: float,
    windows_s,
    *,
    t_start_s: float = 0.0,
    rep_rate_hz: float = 1.0e6,
    n_ensemble: int = 1_000_000,
    seed: int = 0,
) -> list[ErgodicityReport]:
    """Gap between the ensemble average and windowed time averages.

    The threshold is three combined standard errors: an ergodic model
    stays below it for any window, the drifting model exceeds it for
    windows much shorter than the drift period and falls back below it
    over a whole number of periods.
    """
    ens, ens_se = ensemble_average(model, alpha, n_ensemble, seed)
    reports = []
    for w in windows_s:
        tavg, tavg_se, _ = model_time_average(
            model, alpha, t_start_s, float(w), rep_rate_hz, seed
        )
        combined = math.hypot(ens_se, tavg_se)
        gap = abs(ens - tavg)
        reports.append(
            ErgodicityReport(
                alpha=alpha,
                window_s=float(w),
                t_start_s=t_start_s,
                ensemble_avg=ens,
                time_avg=tavg,
                gap=gap,
                combined_std_err=combined,
                threshold=3.0 * combined,
            )
        )
    return reports


# --------------------------------------------------------------------------
# CSV emission
# --------------------------------------------------------------------------


def write_chsh_csv(path, estimates: list[ChshEstimate]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["slice_index", "n_records", "S", "std_err", "E_ab", "E_ab_prime", "E_a_prime_b", "E_a_prime_b_prime"]
        )
        for est in estimates:
            writer.writerow(
                [
                    est.slice_index if est.slice_index is not None else "",
                    est.n_records,
                    f"{est.S:.6f}",
                    f"{est.std_err:.6f}",
                ]
                + [f"{c.E:.6f}" for c in est.correlations]
            )


def write_ergodicity_csv(path, reports: list[ErgodicityReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["alpha", "window_s", "ensemble_avg", "time_avg", "gap", "threshold", "z"]
        )
        for rep in reports:
            z = rep.z if math.isfinite(rep.z) else "inf"
            writer.writerow(
                [
                    f"{rep.alpha:.6f}",
                    f"{rep.window_s:.9f}",
                    f"{rep.ensemble_avg:.6f}",
                    f"{rep.time_avg:.6f}",
                    f"{rep.gap:.6f}",
                    f"{rep.threshold:.6f}",
                    z if isinstance(z, str) else f"{z:.3f}",
                ]
            )
