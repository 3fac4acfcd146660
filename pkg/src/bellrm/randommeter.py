"""Randomness measurement: test battery, compressibility, rejection curve.

A sequence can never be certified random, only demonstrated not-random,
so the meter reading is the *rejection rate* R: the fraction of
fixed-length sequences flagged by at least one test of a small, fixed
battery (monobit, runs, block frequency, serial, cumulative sums, all at
significance alpha_sig).  A dictionary-compression ratio is reported
alongside as a complexity estimate.  Verdicts about which property the
data falsifies come from contrasting R between the first and second
pulse halves.
"""

from __future__ import annotations

import json
import csv
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erfc, gammaincc, ndtr

from .errors import ConfigError, InsufficientLengthError, UndefinedStatisticError

_WILSON_Z = 1.959963984540054  # two-sided 95%


@dataclass(frozen=True)
class TestResult:
    test_name: str
    statistic: float
    p_value: float
    rejected: bool
    applicable: bool = True


def _result(name: str, statistic: float, p_value: float, alpha_sig: float) -> TestResult:
    p_value = float(min(1.0, max(0.0, p_value)))
    return TestResult(name, float(statistic), p_value, p_value < alpha_sig)


def _as_bits(bits) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.ndim != 1:
        raise ConfigError("bit sequence must be one-dimensional")
    return arr


def monobit_test(bits, alpha_sig: float = 0.01) -> TestResult:
    """Excess of ones versus zeros: s = |sum(2x-1)|/sqrt(n), p = erfc(s/sqrt 2)."""
    x = _as_bits(bits)
    if x.size < 100:
        raise InsufficientLengthError("monobit needs at least 100 bits")
    s = abs(2.0 * int(np.count_nonzero(x)) - x.size) / math.sqrt(x.size)
    return _result("monobit", s, erfc(s / math.sqrt(2.0)), alpha_sig)


def runs_test(bits, alpha_sig: float = 0.01) -> TestResult:
    """Number of maximal constant-bit runs versus its expectation.

    Only meaningful when the ones proportion is near 1/2; outside the
    guard band the result is flagged not applicable (the monobit test
    rejects such sequences anyway).
    """
    x = _as_bits(bits)
    n = x.size
    if n < 100:
        raise InsufficientLengthError("runs needs at least 100 bits")
    pi_hat = np.count_nonzero(x) / n
    if abs(pi_hat - 0.5) >= 2.0 / math.sqrt(n):
        return TestResult("runs", math.nan, math.nan, False, applicable=False)
    v = int(np.count_nonzero(np.diff(x))) + 1
    denom = 2.0 * math.sqrt(2.0 * n) * pi_hat * (1.0 - pi_hat)
    stat = abs(v - 2.0 * n * pi_hat * (1.0 - pi_hat)) / denom
    return _result("runs", float(v), erfc(stat), alpha_sig)


def block_frequency_test(bits, block_size: int = 128, alpha_sig: float = 0.01) -> TestResult:
    """Chi-square of per-block ones proportions around 1/2."""
    x = _as_bits(bits)
    if block_size < 2:
        raise ConfigError("block_size must be >= 2")
    n_blocks = x.size // block_size
    if n_blocks < 20:
        raise InsufficientLengthError(
            f"block frequency needs at least {20 * block_size} bits for block size {block_size}"
        )
    blocks = x[: n_blocks * block_size].reshape(n_blocks, block_size)
    pi = blocks.mean(axis=1)
    chi2 = 4.0 * block_size * float(np.sum((pi - 0.5) ** 2))
    return _result("block_frequency", chi2, gammaincc(n_blocks / 2.0, chi2 / 2.0), alpha_sig)


def _pattern_counts(x: np.ndarray, m: int) -> np.ndarray:
    """Cyclic m-gram counts (2^m bins)."""
    if m == 0:
        return np.array([x.size])
    ext = np.concatenate([x, x[: m - 1]])
    code = np.zeros(x.size, dtype=np.int64)
    for j in range(m):
        code = (code << 1) | ext[j : j + x.size]
    return np.bincount(code, minlength=1 << m)


def _psi_squared(x: np.ndarray, m: int) -> float:
    if m <= 0:
        return 0.0
    counts = _pattern_counts(x, m)
    return float((1 << m) / x.size * np.sum(counts.astype(np.float64) ** 2) - x.size)


def serial_test(bits, m: int = 4, alpha_sig: float = 0.01) -> TestResult:
    """Uniformity of overlapping m-bit patterns (first generalized serial
    statistic, del-psi^2 with chi-square on 2^(m-2) degrees of freedom)."""
    x = _as_bits(bits)
    if m < 2:
        raise ConfigError("serial test order m must be >= 2")
    if m > math.log2(x.size) - 2:
        raise InsufficientLengthError("serial test needs m <= log2(n) - 2")
    del_psi = _psi_squared(x, m) - _psi_squared(x, m - 1)
    p = gammaincc(2 ** (m - 2), del_psi / 2.0)
    return _result("serial", del_psi, p, alpha_sig)


def cusum_test(bits, alpha_sig: float = 0.01) -> TestResult:
    """Maximum excursion of the +/-1 partial-sum walk (forward mode)."""
    x = _as_bits(bits)
    n = x.size
    if n < 100:
        raise InsufficientLengthError("cusum needs at least 100 bits")
    walk = np.cumsum(2 * x.astype(np.int64) - 1)
    z = int(np.max(np.abs(walk)))
    sqrt_n = math.sqrt(n)
    k1 = np.arange(math.floor((-n / z + 1) / 4), math.floor((n / z - 1) / 4) + 1)
    k2 = np.arange(math.floor((-n / z - 3) / 4), math.floor((n / z - 1) / 4) + 1)
    term1 = np.sum(ndtr((4 * k1 + 1) * z / sqrt_n) - ndtr((4 * k1 - 1) * z / sqrt_n))
    term2 = np.sum(ndtr((4 * k2 + 3) * z / sqrt_n) - ndtr((4 * k2 + 1) * z / sqrt_n))
    return _result("cusum", float(z), 1.0 - term1 + term2, alpha_sig)


# --------------------------------------------------------------------------
# Compression-ratio complexity estimate
# --------------------------------------------------------------------------


def compression_ratio(bits) -> float:
    """Incremental-parsing dictionary compression ratio (compressed/original).

    Each phrase is the longest already-seen phrase plus one new bit and is
    emitted as (phrase index, next bit); the index costs ceil(log2 t) bits
    when the dictionary holds t entries including the empty phrase.  The
    scheme is fixed so ratios are comparable across runs: incompressible
    input lands slightly above 1, constant input near 0.1, short-period
    input well below 1.
    """
    x = _as_bits(bits)
    n = x.size
    if n < 1000:
        raise InsufficientLengthError("compression_ratio needs at least 1000 bits")
    children: dict[int, int] = {}
    node = 0
    next_id = 1
    phrases = 0
    cost = 0
    for bit in x.tolist():
        key = (node << 1) | bit
        child = children.get(key)
        if child is not None:
            node = child
        else:
            phrases += 1
            cost += (phrases - 1).bit_length() + 1
            children[key] = next_id
            next_id += 1
            node = 0
    if node != 0:
        cost += phrases.bit_length()
    return cost / n


# --------------------------------------------------------------------------
# Battery and rejection rate
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BatteryConfig:
    alpha_sig: float = 0.01
    block_size: int = 128
    serial_m: int = 4

    TEST_NAMES = ("monobit", "runs", "block_frequency", "serial", "cusum")

    @property
    def n_tests(self) -> int:
        return len(self.TEST_NAMES)

    @property
    def false_alarm_rate(self) -> float:
        """Compound any-test false-alarm level assuming independence."""
        return 1.0 - (1.0 - self.alpha_sig) ** self.n_tests

    @property
    def min_length(self) -> int:
        return max(100, 20 * self.block_size, 1 << (self.serial_m + 2), 1000)


@dataclass(frozen=True)
class RandomnessReport:
    sequence_id: str
    results: tuple
    overall_rejected: bool
    compression_ratio: float

    def p_values(self) -> dict:
        return {r.test_name: r.p_value for r in self.results}


def run_battery(bits, config: BatteryConfig = BatteryConfig(), sequence_id: str = "") -> RandomnessReport:
    """All five tests plus the compression ratio for one sequence.

    Overall rejection is any-test-rejects with no multiplicity correction;
    the implied compound false-alarm level is config.false_alarm_rate.
    """
    results = (
        monobit_test(bits, config.alpha_sig),
        runs_test(bits, config.alpha_sig),
        block_frequency_test(bits, config.block_size, config.alpha_sig),
        serial_test(bits, config.serial_m, config.alpha_sig),
        cusum_test(bits, config.alpha_sig),
    )
    return RandomnessReport(
        sequence_id=sequence_id,
        results=results,
        overall_rejected=any(r.rejected for r in results),
        compression_ratio=compression_ratio(bits),
    )


def wilson_interval(k: int, n: int, z: float = _WILSON_Z) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if n == 0:
        raise UndefinedStatisticError("Wilson interval undefined for n = 0")
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, center - half)
    hi = 1.0 if k == n else min(1.0, center + half)
    return lo, hi


def rejection_rate(
    sequences, config: BatteryConfig = BatteryConfig()
) -> tuple[float, tuple[float, float]]:
    """Fraction of sequences flagged not-random, with 95% Wilson interval."""
    sequences = list(sequences)
    if not sequences:
        raise UndefinedStatisticError("rejection rate of an empty sequence set")
    rejected = sum(run_battery(s, config).overall_rejected for s in sequences)
    return rejected / len(sequences), wilson_interval(rejected, len(sequences))


# --------------------------------------------------------------------------
# Randommeter curve and scenario classification
# --------------------------------------------------------------------------

#: minimum sequences per slice for the reading to count.
MIN_SEQUENCES_PER_SLICE = 30


@dataclass(frozen=True)
class SliceReading:
    slice_index: int
    n_sequences: int
    n_rejected: int
    rejection_rate: float
    ci_low: float
    ci_high: float
    mean_compression_ratio: float
    randomness_level: float
    sufficient: bool


@dataclass(frozen=True)
class RandommeterCurve:
    readings: tuple
    alpha_sig: float
    false_alarm_rate: float

    @property
    def n_slices(self) -> int:
        return len(self.readings)


def curve_from_reports(reports_by_slice: dict, config: BatteryConfig) -> RandommeterCurve:
    """Aggregate per-sequence battery reports into the per-slice curve.

    The derived randomness level rescales R so that the battery's
    false-alarm rate reads 1.0 (fully random) and R = 1 reads 0.0; it is
    the same information plotted in the orientation of a randomness dial.
    """
    if len(reports_by_slice) < 2:
        raise ConfigError("randommeter curve needs at least 2 slices")
    fa = config.false_alarm_rate
    readings = []
    for slice_index in sorted(reports_by_slice):
        reports = reports_by_slice[slice_index]
        n = len(reports)
        k = sum(r.overall_rejected for r in reports)
        if n == 0:
            readings.append(
                SliceReading(slice_index, 0, 0, math.nan, math.nan, math.nan, math.nan, math.nan, False)
            )
            continue
        rate = k / n
        lo, hi = wilson_interval(k, n)
        level = 1.0 - max(0.0, rate - fa) / (1.0 - fa)
        readings.append(
            SliceReading(
                slice_index=slice_index,
                n_sequences=n,
                n_rejected=k,
                rejection_rate=rate,
                ci_low=lo,
                ci_high=hi,
                mean_compression_ratio=float(np.mean([r.compression_ratio for r in reports])),
                randomness_level=level,
                sufficient=n >= MIN_SEQUENCES_PER_SLICE,
            )
        )
    return RandommeterCurve(tuple(readings), config.alpha_sig, fa)


def randommeter_curve(
    sequences_by_slice: dict, config: BatteryConfig = BatteryConfig()
) -> RandommeterCurve:
    """Run the battery over per-slice sequence sets and build the curve."""
    reports = {
        s: [run_battery(bits, config, sequence_id=f"s{s}-{i}") for i, bits in enumerate(seqs)]
        for s, seqs in sequences_by_slice.items()
    }
    return curve_from_reports(reports, config)


class Verdict(Enum):
    LOCALITY_FALSE = "LOCALITY_FALSE"
    REALISM_FALSE = "REALISM_FALSE"
    ERGODICITY_FALSE = "ERGODICITY_FALSE"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class ScenarioVerdict:
    label: Verdict
    z: float
    p_value: float
    r_first_half: float
    r_second_half: float
    n_first_half: int
    n_second_half: int
    per_slice_S: tuple
    per_slice_R: tuple
    reason: str = ""


def two_proportion_z(k1: int, n1: int, k2: int, n2: int) -> tuple[float, float]:
    """Pooled two-proportion z statistic and two-sided p-value."""
    if n1 == 0 or n2 == 0:
        raise UndefinedStatisticError("two-proportion test needs data on both sides")
    p1, p2 = k1 / n1, k2 / n2
    pooled = (k1 + k2) / (n1 + n2)
    var = pooled * (1 - pooled) * (1 / n1 + 1 / n2)
    if var == 0:
        return 0.0, 1.0
    z = (p1 - p2) / math.sqrt(var)
    return z, float(erfc(abs(z) / math.sqrt(2.0)))


def classify_scenario(
    curve: RandommeterCurve,
    chsh_per_slice,
    significance: float = 0.01,
    s_sigmas: float = 5.0,
) -> ScenarioVerdict:
    """Decide which property the run gives evidence against.

    Preconditions: every slice has a sufficient reading and violates the
    classical bound (S > 2 at >= s_sigmas); otherwise INCONCLUSIVE.  The
    rejection rates of the two pulse halves are then contrasted with a
    two-proportion test at ``significance``: a significantly larger R in
    the first half means ERGODICITY_FALSE, significantly smaller means
    LOCALITY_FALSE, and no detectable contrast means REALISM_FALSE
    (constant reading).  This is evidence, not proof.
    """
    s_by_slice = {est.slice_index: est for est in chsh_per_slice}
    per_slice_s = tuple(
        s_by_slice[r.slice_index].S if r.slice_index in s_by_slice else math.nan
        for r in curve.readings
    )
    per_slice_r = tuple(r.rejection_rate for r in curve.readings)

    def inconclusive(reason: str) -> ScenarioVerdict:
        return ScenarioVerdict(
            Verdict.INCONCLUSIVE, math.nan, math.nan, math.nan, math.nan, 0, 0,
            per_slice_s, per_slice_r, reason,
        )

    if curve.n_slices < 2:
        return inconclusive("fewer than two slices")
    for reading in curve.readings:
        if not reading.sufficient:
            return inconclusive(f"slice {reading.slice_index} has too few sequences")
        est = s_by_slice.get(reading.slice_index)
        if est is None:
            return inconclusive(f"slice {reading.slice_index} has no CHSH estimate")
        if est.std_err <= 0 or (est.S - 2.0) / est.std_err < s_sigmas:
            return inconclusive(
                f"slice {reading.slice_index}: S = {est.S:.3f} does not exceed 2 "
                f"at {s_sigmas:.0f} sigma"
            )

    n = curve.n_slices
    first = [r for r in curve.readings if 2 * r.slice_index + 1 < n]
    second = [r for r in curve.readings if 2 * r.slice_index + 1 >= n]
    if not first or not second:
        return inconclusive("slices do not cover both pulse halves")
    k1 = sum(r.n_rejected for r in first)
    n1 = sum(r.n_sequences for r in first)
    k2 = sum(r.n_rejected for r in second)
    n2 = sum(r.n_sequences for r in second)
    z, p = two_proportion_z(k1, n1, k2, n2)

    if p < significance:
        label = Verdict.ERGODICITY_FALSE if z > 0 else Verdict.LOCALITY_FALSE
    else:
        label = Verdict.REALISM_FALSE
    return ScenarioVerdict(
        label=label,
        z=z,
        p_value=p,
        r_first_half=k1 / n1,
        r_second_half=k2 / n2,
        n_first_half=n1,
        n_second_half=n2,
        per_slice_S=per_slice_s,
        per_slice_R=per_slice_r,
    )


# --------------------------------------------------------------------------
# CSV / JSON emission
# --------------------------------------------------------------------------


def write_reports_csv(path, rows) -> None:
    """rows: iterable of (sequence_id, slice_index, station, report)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["sequence_id", "slice_index", "station", "length_source"]
            + [f"p_{name}" for name in BatteryConfig.TEST_NAMES]
            + ["overall_rejected", "compression_ratio"]
        )
        for sequence_id, slice_index, station, report in rows:
            pvals = report.p_values()
            writer.writerow(
                [sequence_id, slice_index, station, ""]
                + [
                    "" if math.isnan(pvals[name]) else f"{pvals[name]:.6g}"
                    for name in BatteryConfig.TEST_NAMES
                ]
                + [int(report.overall_rejected), f"{report.compression_ratio:.6f}"]
            )


def write_curve_csv(path, curve: RandommeterCurve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "slice_index", "n_sequences", "rejection_rate", "ci_low", "ci_high",
                "mean_compression_ratio", "randomness_level", "sufficient",
            ]
        )
        for r in curve.readings:
            writer.writerow(
                [
                    r.slice_index, r.n_sequences,
                    f"{r.rejection_rate:.6f}", f"{r.ci_low:.6f}", f"{r.ci_high:.6f}",
                    f"{r.mean_compression_ratio:.6f}", f"{r.randomness_level:.6f}",
                    int(r.sufficient),
                ]
            )


def write_verdict_json(path, verdict: ScenarioVerdict) -> None:
    def _clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return None
        return x

    obj = {
        "label": verdict.label.value,
        "contrast_z": _clean(verdict.z),
        "p_value": _clean(verdict.p_value),
        "r_first_half": _clean(verdict.r_first_half),
        "r_second_half": _clean(verdict.r_second_half),
        "n_first_half": verdict.n_first_half,
        "n_second_half": verdict.n_second_half,
        "per_slice_S": [_clean(s) for s in verdict.per_slice_S],
        "per_slice_R": [_clean(r) for r in verdict.per_slice_R],
        "reason": verdict.reason,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
