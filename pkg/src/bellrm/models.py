"""Outcome models for the two-station polarization experiment.

A model decides, pulse by pulse, which output port fires at each station
(bit 0 = transmitted, 1 = reflected).  Six kinds are provided:

* ``QM_NONLOCAL``      - singlet-class photon pair statistics for the
  fully symmetric state (E(alpha, beta) = cos 2(alpha - beta)).
* ``LOCAL_ERGODIC``    - deterministic sign model with a hidden angle
  drawn fresh and uniformly for every pulse.
* ``NONERGODIC``       - same sign rule, but the hidden angle drifts
  linearly in time instead of being redrawn.
* ``SCENARIO_*``       - three generators that keep the quantum
  correlations in every pulse slice while pinning the *sequence*
  randomness of one pulse half, one per classifier outcome.

All samplers are pure functions of (model, hidden state, settings, time,
generator state), so they can be evaluated in parallel across pulses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, UnsupportedModelError

PI = math.pi

#: default drift period of the non-ergodic hidden angle, seconds.
#: 0.01 s equals 1e4 pulse periods at the default 1 MHz repetition rate:
#: slow enough that per-pulse setting changes cannot average it out, fast
#: enough to resolve inside a single run.
DEFAULT_DRIFT_PERIOD_S = 0.01

#: period (bits) of the compressible generator used by the scenario models.
DEFAULT_SCENARIO_PERIOD = 64


class ModelKind(Enum):
    QM_NONLOCAL = "QM_NONLOCAL"
    LOCAL_ERGODIC = "LOCAL_ERGODIC"
    NONERGODIC = "NONERGODIC"
    SCENARIO_LOCALITY_FALSE = "SCENARIO_LOCALITY_FALSE"
    SCENARIO_REALISM_FALSE = "SCENARIO_REALISM_FALSE"
    SCENARIO_ERGODICITY_FALSE = "SCENARIO_ERGODICITY_FALSE"


HIDDEN_VARIABLE_KINDS = frozenset({ModelKind.LOCAL_ERGODIC, ModelKind.NONERGODIC})
SCENARIO_KINDS = frozenset(
    {
        ModelKind.SCENARIO_LOCALITY_FALSE,
        ModelKind.SCENARIO_REALISM_FALSE,
        ModelKind.SCENARIO_ERGODICITY_FALSE,
    }
)


def normalize_angle(theta: float) -> float:
    """Fold an analyzer angle into [0, pi); polarization has period pi."""
    return float(theta) % PI


@dataclass(frozen=True)
class OutcomeModel:
    """A model kind plus its free parameters.

    Recognized parameters:
      drift_period_s   (NONERGODIC)  - period of the hidden-angle drift.
      period           (SCENARIO_*)  - length in bits of the compressible
                                       deterministic pattern.
    """

    kind: ModelKind
    parameters: dict = field(default_factory=dict)

    @property
    def drift_period_s(self) -> float:
        return float(self.parameters.get("drift_period_s", DEFAULT_DRIFT_PERIOD_S))

    @property
    def scenario_period(self) -> int:
        return int(self.parameters.get("period", DEFAULT_SCENARIO_PERIOD))

    @staticmethod
    def from_dict(obj: dict) -> "OutcomeModel":
        try:
            kind = ModelKind(obj["kind"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"unknown model kind in {obj!r}") from exc
        params = dict(obj.get("parameters", {}))
        return OutcomeModel(kind, params)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "parameters": dict(self.parameters)}


@dataclass(frozen=True)
class HiddenState:
    """Hidden variable carried by a pulse: angle(s) plus its epoch time."""

    lam: float
    epoch_time: float = 0.0


@dataclass(frozen=True)
class JointOutcome:
    bit_a: int
    bit_b: int
    detected: bool = True


def qm_joint_probability(alpha: float, beta: float, a: int, b: int) -> float:
    """Joint outcome probability for the symmetric entangled pair.

    P(a, b) = cos^2(alpha-beta)/2 when a == b, sin^2(alpha-beta)/2 otherwise,
    which gives the correlation E(alpha, beta) = cos 2(alpha-beta).
    """
    if a not in (0, 1) or b not in (0, 1):
        raise ValueError("outcome bits must be 0 or 1")
    delta = normalize_angle(alpha) - normalize_angle(beta)
    same = math.cos(delta) ** 2
    return 0.5 * same if a == b else 0.5 * (1.0 - same)


def qm_correlation(alpha: float, beta: float) -> float:
    """E(alpha, beta) = cos 2(alpha - beta)."""
    return math.cos(2.0 * (alpha - beta))


def local_hv_bit(lam, theta):
    """Deterministic local rule: transmitted (0) iff cos 2(theta - lam) > 0.

    Depends only on the local setting and the hidden angle, never on the
    remote station.  Accepts scalars or numpy arrays.
    """
    value = np.cos(2.0 * (np.asarray(theta) - np.asarray(lam)))
    bit = (value <= 0.0).astype(np.uint8)
    if bit.ndim == 0:
        return int(bit)
    return bit


def sawtooth_correlation(delta: float) -> float:
    """Correlation of the sign model over a uniform hidden angle.

    Piecewise linear: 1 - 4|delta|/pi on [0, pi/2], continued with period
    pi and even symmetry.  Equals +1 at aligned and -1 at orthogonal
    settings, and 0.5 at the standard CHSH separation pi/8.
    """
    d = abs(delta) % PI
    if d > PI / 2:
        d = PI - d
    return 1.0 - 4.0 * d / PI


def evolve_lambda(
    model: OutcomeModel, epoch_time: float, rng: np.random.Generator | None = None
) -> HiddenState:
    """Hidden state of the pulse that starts at ``epoch_time``.

    LOCAL_ERGODIC draws a fresh uniform angle (ignores the time);
    NONERGODIC returns the drifting angle (pi * t / drift_period) mod pi.
    """
    if model.kind is ModelKind.LOCAL_ERGODIC:
        if rng is None:
            raise ValueError("LOCAL_ERGODIC needs an rng to draw the hidden angle")
        return HiddenState(lam=float(rng.random() * PI), epoch_time=epoch_time)
    if model.kind is ModelKind.NONERGODIC:
        omega = PI / model.drift_period_s
        return HiddenState(lam=(omega * epoch_time) % PI, epoch_time=epoch_time)
    raise UnsupportedModelError(f"{model.kind.value} has no hidden variable to evolve")


def stationary_lambda_samples(
    model: OutcomeModel, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Samples from the stationary hidden-angle density rho(lambda).

    Uniform on [0, pi) for both hidden-variable kinds: the ergodic model
    draws from it directly and the drifting angle spends equal time in
    equal intervals.
    """
    if model.kind not in HIDDEN_VARIABLE_KINDS:
        raise UnsupportedModelError(
            f"{model.kind.value} does not expose a hidden-variable density"
        )
    return rng.random(n) * PI


def scenario_pattern(period: int, seed: int) -> np.ndarray:
    """Balanced deterministic bit pattern used by the scenario generators.

    Exactly half ones so the marginal stays 1/2 over full periods; the
    arrangement is a seed-derived fixed permutation, so the emitted
    sequence is strictly periodic (and therefore compressible).
    """
    from .streams import substream

    if period < 2 or period % 2:
        raise ConfigError("scenario pattern period must be an even integer >= 2")
    base = np.repeat(np.arange(2, dtype=np.uint8), period // 2)
    return substream(seed, "scenario-pattern").permutation(base)


def _qm_pair_bits(
    deltas: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    bits_a = (rng.random(deltas.size) < 0.5).astype(np.uint8)
    flip = rng.random(deltas.size) < np.sin(deltas) ** 2
    return bits_a, bits_a ^ flip.astype(np.uint8)


def _pattern_pair_bits(
    deltas: np.ndarray,
    pattern: np.ndarray,
    offset: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, int]:
    k = deltas.size
    idx = (offset + np.arange(k, dtype=np.int64)) % pattern.size
    bits_a = pattern[idx]
    flip = rng.random(k) < np.sin(deltas) ** 2
    return bits_a, bits_a ^ flip.astype(np.uint8), offset + k


class PairSampler:
    """Vectorized joint-outcome sampler for one run.

    Keeps the single piece of cross-pulse state the scenario generators
    need (the position inside the deterministic pattern); everything else
    comes from the caller-supplied generator, so results are reproducible
    given (model, seed, call sequence).
    """

    def __init__(self, model: OutcomeModel, seed: int):
        self.model = model
        if model.kind in SCENARIO_KINDS:
            self._pattern = scenario_pattern(model.scenario_period, seed)
        else:
            self._pattern = None
        self._pattern_pos = 0

    def sample(
        self,
        alphas: np.ndarray,
        betas: np.ndarray,
        pulse_times_s: np.ndarray,
        within_pulse_ns: np.ndarray,
        pulse_duration_ns: int,
        rng: np.random.Generator,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Outcome bits for a batch of coincident pulses, in time order."""
        kind = self.model.kind
        deltas = np.asarray(alphas, dtype=np.float64) - np.asarray(betas, dtype=np.float64)
        k = deltas.size

        if kind is ModelKind.QM_NONLOCAL or kind is ModelKind.SCENARIO_REALISM_FALSE:
            return _qm_pair_bits(deltas, rng)

        if kind is ModelKind.LOCAL_ERGODIC:
            lam = rng.random(k) * PI
            return local_hv_bit(lam, alphas), local_hv_bit(lam, betas)

        if kind is ModelKind.NONERGODIC:
            omega = PI / self.model.drift_period_s
            lam = (omega * np.asarray(pulse_times_s, dtype=np.float64)) % PI
            return local_hv_bit(lam, alphas), local_hv_bit(lam, betas)

        if kind in (ModelKind.SCENARIO_LOCALITY_FALSE, ModelKind.SCENARIO_ERGODICITY_FALSE):
            # Second pulse half starts at duration/2; boundary goes to the
            # later half, mirroring the slice rule.
            in_second = 2 * np.asarray(within_pulse_ns, dtype=np.int64) >= pulse_duration_ns
            deterministic = in_second if kind is ModelKind.SCENARIO_LOCALITY_FALSE else ~in_second
            bits_a = np.empty(k, dtype=np.uint8)
            bits_b = np.empty(k, dtype=np.uint8)
            # Draw order is fixed (entropy half first) so output is
            # reproducible no matter how the mask partitions the batch.
            qa, qb = _qm_pair_bits(deltas[~deterministic], rng)
            bits_a[~deterministic] = qa
            bits_b[~deterministic] = qb
            pa, pb, self._pattern_pos = _pattern_pair_bits(
                deltas[deterministic], self._pattern, self._pattern_pos, rng
            )
            bits_a[deterministic] = pa
            bits_b[deterministic] = pb
            return bits_a, bits_b

        raise ConfigError(f"unknown model kind {kind!r}")


def sample_outcome(
    model: OutcomeModel,
    state: HiddenState | None,
    alpha: float,
    beta: float,
    within_pulse_time: float,
    pulse_duration: float,
    rng: np.random.Generator,
) -> JointOutcome:
    """Single joint outcome for one pulse.

    Scalar convenience over the vectorized :class:`PairSampler`; the
    hidden-variable kinds consume ``state`` as-is (use
    :func:`evolve_lambda` to produce it), so a fixed state gives a fixed
    outcome.
    """
    if not 0.0 <= within_pulse_time <= pulse_duration:
        raise ValueError("within_pulse_time must lie inside the pulse")
    kind = model.kind
    if kind is ModelKind.QM_NONLOCAL or kind is ModelKind.SCENARIO_REALISM_FALSE:
        bit_a = int(rng.random() < 0.5)
        flip = rng.random() < math.sin(alpha - beta) ** 2
        return JointOutcome(bit_a, bit_a ^ int(flip))
    if kind in HIDDEN_VARIABLE_KINDS:
        if state is None:
            raise ValueError("hidden-variable models need a HiddenState")
        return JointOutcome(local_hv_bit(state.lam, alpha), local_hv_bit(state.lam, beta))
    if kind in SCENARIO_KINDS:
        raise UnsupportedModelError(
            "scenario generators are sequential; sample them through PairSampler"
        )
    raise ConfigError(f"unknown model kind {kind!r}")
