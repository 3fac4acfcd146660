"""bellrm: pulsed Bell-test simulation and randomness-evolution analysis.

Simulate a pulsed two-station experiment with pluggable outcome models,
process the time-tagged detections into per-pulse-slice binary sequences,
and measure how randomness (rejection rate, compression ratio) and the
CHSH violation evolve across the pulse, classifying which property -
Locality, Realism or Ergodicity - the data gives evidence against.
"""

__version__ = "0.1.0"

from .btag import (
    EVENT_DTYPE,
    STATION_A,
    STATION_B,
    BtagWriter,
    read_btag,
    read_csv,
    split_stations,
    write_btag,
    write_csv,
)
from .chsh import (
    ChshAngles,
    ChshEstimate,
    CorrelationEstimate,
    ErgodicityReport,
    TSIRELSON_BOUND,
    WindowScanPoint,
    chsh_by_slice,
    correlation_from_counts,
    ensemble_average,
    ergodicity_gap,
    estimate_chsh,
    estimate_correlation,
    model_time_average,
    qm_chsh_value,
    s_vs_window,
    time_average_trace,
    write_chsh_csv,
    write_ergodicity_csv,
)
from .errors import (
    BellrmError,
    ConfigError,
    DataError,
    IncompleteSettingsError,
    InsufficientLengthError,
    IntegrityError,
    StreamOrderError,
    UndefinedStatisticError,
    UnsupportedModelError,
)
from .models import (
    DEFAULT_DRIFT_PERIOD_S,
    HiddenState,
    JointOutcome,
    ModelKind,
    OutcomeModel,
    PairSampler,
    evolve_lambda,
    local_hv_bit,
    normalize_angle,
    qm_correlation,
    qm_joint_probability,
    sample_outcome,
    sawtooth_correlation,
    scenario_pattern,
)
from .randommeter import (
    BatteryConfig,
    RandomnessReport,
    RandommeterCurve,
    ScenarioVerdict,
    SliceReading,
    TestResult,
    Verdict,
    block_frequency_test,
    classify_scenario,
    compression_ratio,
    cusum_test,
    monobit_test,
    randommeter_curve,
    rejection_rate,
    run_battery,
    runs_test,
    serial_test,
    two_proportion_z,
    wilson_interval,
)
from .source import (
    CHSH_ANGLES,
    CHSH_MENU,
    PulseGeometry,
    RunConfig,
    RunStats,
    iter_event_chunks,
    pulse_geometry,
    pulse_index_of,
    pulse_start_ns,
    simulate_events,
    simulate_to_btag,
)
from .timetags import (
    BinarySequence,
    COINC_DTYPE,
    extract_sequence,
    match_coincidences,
    sequence_partition,
    slice_records,
)
