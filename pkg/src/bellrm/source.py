"""Pulsed two-station run generator.

Produces the time-tagged detection streams of a pulsed pair source with
stations A and B: per pulse, one settings pair (held constant across the
pulse), at most one coincident pair, independent per-station singles, and
homogeneous dark counts.  Timestamps are quantized to 1 ns; two events
landing on the same nanosecond at one station keep only the first
(resolution-limited detector), with coincidence members taking priority.

Generation is chunked over pulse blocks, each block fed by its own keyed
random stream, so output is reproducible from (config, seed) and blocks
could be produced out of order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, asdict

import numpy as np

from .btag import EVENT_DTYPE, STATION_A, STATION_B, BtagWriter
from .errors import ConfigError
from .models import PI, OutcomeModel, PairSampler, normalize_angle
from .streams import per_pulse_choice, substream

SPEED_OF_LIGHT_M_S = 299_792_458.0

#: standard CHSH settings menu: a=0, a'=pi/4, b=pi/8, b'=3pi/8.
CHSH_MENU = (
    (0.0, PI / 8),
    (0.0, 3 * PI / 8),
    (PI / 4, PI / 8),
    (PI / 4, 3 * PI / 8),
)

CHSH_ANGLES = (0.0, PI / 4, PI / 8, 3 * PI / 8)

_MAX_PULSES = 2**32 - 1
_DEFAULT_CHUNK = 1 << 22


@dataclass
class RunConfig:
    """Everything the generator needs; see README for the JSON schema."""

    seed: int
    station_separation_m: float = 20.0
    rep_rate_hz: float = 1.0e6
    pulse_duration_s: float | None = None  # default: 2L/c
    run_duration_s: float = 300.0
    detection_prob_per_pulse: float = 0.1
    coincidence_prob_per_pulse: float = 0.02
    dark_rate_hz: float = 100.0
    settings_menu: tuple = CHSH_MENU

    def __post_init__(self):
        self.settings_menu = tuple(
            (normalize_angle(a), normalize_angle(b)) for a, b in self.settings_menu
        )
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        if self.station_separation_m < 0:
            raise ConfigError("station_separation_m must be >= 0")
        if self.rep_rate_hz <= 0:
            raise ConfigError("rep_rate_hz must be > 0")
        if self.run_duration_s < 0:
            raise ConfigError("run_duration_s must be >= 0")
        if not 0.0 <= self.detection_prob_per_pulse <= 0.2:
            raise ConfigError(
                "detection_prob_per_pulse must stay in [0, 0.2]: the pipeline "
                "assumes a sparse-detection regime"
            )
        if self.detection_prob_per_pulse > 0.1:
            warnings.warn(
                "detection_prob_per_pulse above 0.1 strains the sparse-detection "
                "assumption",
                stacklevel=2,
            )
        if not 0.0 <= self.coincidence_prob_per_pulse < 1.0:
            raise ConfigError("coincidence_prob_per_pulse must lie in [0, 1)")
        if self.dark_rate_hz < 0:
            raise ConfigError("dark_rate_hz must be >= 0")
        if not self.settings_menu:
            raise ConfigError("settings_menu must not be empty")
        if len(self.settings_menu) > 65536:
            raise ConfigError("settings_menu is limited to 65536 entries")
        if self.n_pulses > _MAX_PULSES:
            raise ConfigError("run too long: pulse index would overflow 32 bits")
        geo = pulse_geometry(self)
        if geo.duty_cycle > 1.0 + 1e-12:
            raise ConfigError(
                f"duty cycle {geo.duty_cycle:.3f} > 1: pulses overlap"
            )

    @property
    def n_pulses(self) -> int:
        return int(round(self.run_duration_s * self.rep_rate_hz))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["settings_menu"] = [list(pair) for pair in self.settings_menu]
        return out

    @staticmethod
    def from_dict(obj: dict) -> "RunConfig":
        known = {f for f in RunConfig.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown run-config fields: {sorted(unknown)}")
        if "seed" not in obj:
            raise ConfigError("run config must provide a seed")
        kwargs = dict(obj)
        if "settings_menu" in kwargs:
            kwargs["settings_menu"] = tuple(tuple(p) for p in kwargs["settings_menu"])
        return RunConfig(**kwargs)


@dataclass(frozen=True)
class PulseGeometry:
    pulse_duration_s: float
    rep_period_s: float
    duty_cycle: float
    light_time_s: float

    @property
    def pulse_duration_ns(self) -> int:
        return max(1, int(round(self.pulse_duration_s * 1e9)))

    @property
    def rep_period_ns(self) -> float:
        return self.rep_period_s * 1e9


def pulse_geometry(config: RunConfig) -> PulseGeometry:
    """Pulse-train geometry; the default pulse length is 2L/c."""
    light_time = config.station_separation_m / SPEED_OF_LIGHT_M_S
    duration = config.pulse_duration_s
    if duration is None:
        duration = 2.0 * light_time
    if duration < 0:
        raise ConfigError("pulse_duration_s must be >= 0")
    rep_period = 1.0 / config.rep_rate_hz
    duty = duration * config.rep_rate_hz
    return PulseGeometry(
        pulse_duration_s=duration,
        rep_period_s=rep_period,
        duty_cycle=duty,
        light_time_s=light_time,
    )


def pulse_start_ns(pulse_indices, rep_rate_hz: float) -> np.ndarray:
    """Start timestamp (integer ns) of each pulse."""
    period_ns = 1e9 / rep_rate_hz
    return np.rint(np.asarray(pulse_indices, dtype=np.float64) * period_ns).astype(np.int64)


def pulse_index_of(times_ns: np.ndarray, rep_rate_hz: float) -> np.ndarray:
    """Pulse index containing each timestamp (floor division by the period)."""
    period_ns = 1e9 / rep_rate_hz
    t = np.asarray(times_ns, dtype=np.int64)
    if abs(period_ns - round(period_ns)) < 1e-9:
        return t // np.int64(round(period_ns))
    return np.floor(t / period_ns).astype(np.int64)


@dataclass
class RunStats:
    """Generation tallies; coincidence count is the headline number."""

    n_pulses: int = 0
    n_coincidence_pairs: int = 0
    n_singles_a: int = 0
    n_singles_b: int = 0
    n_darks_a: int = 0
    n_darks_b: int = 0
    n_events: int = 0
    n_collisions_dropped: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _station_chunk(parts: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]):
    """Combine (t, pulse, port, setting) category arrays for one station.

    Categories arrive in priority order (coincidences first); equal
    timestamps keep the earliest category.  Returns sorted, deduped
    columns plus the number of dropped collisions.
    """
    t = np.concatenate([p[0] for p in parts])
    pulse = np.concatenate([p[1] for p in parts])
    port = np.concatenate([p[2] for p in parts])
    setting = np.concatenate([p[3] for p in parts])
    prio = np.concatenate(
        [np.full(p[0].size, i, dtype=np.uint8) for i, p in enumerate(parts)]
    )
    order = np.lexsort((prio, t))
    t = t[order]
    keep = np.ones(t.size, dtype=bool)
    keep[1:] = t[1:] != t[:-1]
    dropped = int(t.size - keep.sum())
    return (
        t[keep],
        pulse[order][keep],
        port[order][keep],
        setting[order][keep],
        dropped,
    )


def iter_event_chunks(
    config: RunConfig,
    model: OutcomeModel,
    stats: RunStats | None = None,
    chunk_pulses: int = _DEFAULT_CHUNK,
):
    """Yield merged, time-sorted event chunks covering the whole run.

    Chunks partition the pulse train; all events of a chunk fall inside
    its time window, so concatenating chunks preserves global order.
    """
    geo = pulse_geometry(config)
    duration_ns = geo.pulse_duration_ns
    if config.run_duration_s > 0 and geo.pulse_duration_s <= 0:
        raise ConfigError("pulse_duration_s must be positive to generate events")
    n_pulses = config.n_pulses
    n_menu = len(config.settings_menu)
    menu_alpha = np.array([p[0] for p in config.settings_menu])
    menu_beta = np.array([p[1] for p in config.settings_menu])
    seed = config.seed
    sampler = PairSampler(model, seed)
    if stats is None:
        stats = RunStats()
    stats.n_pulses = n_pulses

    p_single = config.detection_prob_per_pulse
    p_coinc = config.coincidence_prob_per_pulse

    for block, start in enumerate(range(0, max(n_pulses, 1), chunk_pulses)):
        if n_pulses == 0:
            break
        stop = min(start + chunk_pulses, n_pulses)
        m = stop - start
        chunk_t0 = int(pulse_start_ns(start, config.rep_rate_hz))
        chunk_t1 = int(pulse_start_ns(stop, config.rep_rate_hz))

        parts_a: list = []
        parts_b: list = []

        # --- coincident pairs -------------------------------------------
        rng_c = substream(seed, "coincidence", block)
        mask = rng_c.random(m) < p_coinc
        local_idx = np.flatnonzero(mask)
        k = local_idx.size
        if k:
            pulses = (start + local_idx).astype(np.int64)
            starts = pulse_start_ns(pulses, config.rep_rate_hz)
            within = rng_c.integers(0, duration_ns, k)
            t = starts + within
            settings = per_pulse_choice(seed, "settings", pulses, n_menu)
            bits_a, bits_b = sampler.sample(
                menu_alpha[settings],
                menu_beta[settings],
                starts * 1e-9,
                within,
                duration_ns,
                rng_c,
            )
            parts_a.append((t, pulses, bits_a, settings))
            parts_b.append((t.copy(), pulses.copy(), bits_b, settings.copy()))
            stats.n_coincidence_pairs += k

        # --- uncorrelated singles ---------------------------------------
        for label, station_parts, attr in (
            ("singles-a", parts_a, "n_singles_a"),
            ("singles-b", parts_b, "n_singles_b"),
        ):
            if p_single <= 0:
                continue
            rng_s = substream(seed, label, block)
            mask = rng_s.random(m) < p_single
            local_idx = np.flatnonzero(mask)
            ks = local_idx.size
            if ks:
                pulses = (start + local_idx).astype(np.int64)
                t = pulse_start_ns(pulses, config.rep_rate_hz) + rng_s.integers(
                    0, duration_ns, ks
                )
                bits = (rng_s.random(ks) < 0.5).astype(np.uint8)
                settings = per_pulse_choice(seed, "settings", pulses, n_menu)
                station_parts.append((t, pulses, bits, settings))
                setattr(stats, attr, getattr(stats, attr) + ks)

        # --- dark counts --------------------------------------------------
        if config.dark_rate_hz > 0:
            rng_d = substream(seed, "dark", block)
            span_s = (chunk_t1 - chunk_t0) * 1e-9
            for station_parts, attr in ((parts_a, "n_darks_a"), (parts_b, "n_darks_b")):
                kd = int(rng_d.poisson(config.dark_rate_hz * span_s))
                if kd:
                    t = np.sort(rng_d.integers(chunk_t0, chunk_t1, kd))
                    pulses = pulse_index_of(t, config.rep_rate_hz)
                    bits = (rng_d.random(kd) < 0.5).astype(np.uint8)
                    settings = per_pulse_choice(seed, "settings", pulses, n_menu)
                    station_parts.append((t, pulses, bits, settings))
                    setattr(stats, attr, getattr(stats, attr) + kd)

        # --- merge, dedupe, sort ------------------------------------------
        columns = []
        for station_code, parts in ((STATION_A, parts_a), (STATION_B, parts_b)):
            if not parts:
                continue
            t, pulse, port, setting, dropped = _station_chunk(parts)
            stats.n_collisions_dropped += dropped
            columns.append((t, pulse, port, setting, station_code))
        if not columns:
            continue

        t_all = np.concatenate([c[0] for c in columns])
        station_all = np.concatenate(
            [np.full(c[0].size, c[4], dtype=np.uint8) for c in columns]
        )
        order = np.lexsort((station_all, t_all))

        events = np.empty(t_all.size, dtype=EVENT_DTYPE)
        events["timestamp_ns"] = t_all[order]
        events["pulse_index"] = np.concatenate([c[1] for c in columns])[order]
        events["port_bit"] = np.concatenate([c[2] for c in columns])[order]
        events["setting_index"] = np.concatenate([c[3] for c in columns])[order]
        events["station"] = station_all[order]
        stats.n_events += events.size
        yield events


def simulate_events(config: RunConfig, model: OutcomeModel) -> tuple[np.ndarray, RunStats]:
    """Generate the whole run in memory (small and medium runs)."""
    stats = RunStats()
    chunks = list(iter_event_chunks(config, model, stats))
    if chunks:
        events = np.concatenate(chunks)
    else:
        events = np.empty(0, dtype=EVENT_DTYPE)
    return events, stats


def simulate_to_btag(config: RunConfig, model: OutcomeModel, path) -> RunStats:
    """Stream the run straight into a BTAG file."""
    stats = RunStats()
    with BtagWriter(path) as writer:
        for chunk in iter_event_chunks(config, model, stats):
            writer.write(chunk)
    return stats
