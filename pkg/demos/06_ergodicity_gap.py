"""Ensemble average versus time average: the ergodicity check.

The ensemble average integrates the transmitted-port probability over
the hidden-variable density; the time average is what a run actually
measures over a finite window.  For the ergodic model they agree on
every window.  The drifting model agrees only once the window covers a
whole drift period; on short windows the gap is enormous.
"""

from bellrm import ModelKind, OutcomeModel, ergodicity_gap

LOCAL = OutcomeModel(ModelKind.LOCAL_ERGODIC)
NONERG = OutcomeModel(ModelKind.NONERGODIC)
drift = NONERG.drift_period_s

print("drifting hidden angle: period %.0f pulse periods at 1 MHz" % (drift * 1e6))
print()
for model, windows in (
    (LOCAL, [0.001, 0.01, 0.1]),
    (NONERG, [drift / 100, drift / 4, drift, 10 * drift]),
):
    print(model.kind.value)
    print("  window (s) | ensemble | time avg |   gap    | gap/sigma")
    for rep in ergodicity_gap(model, 0.0, windows, n_ensemble=10**6, seed=6):
        z = "%8.1f" % rep.z if rep.z < 1e6 else "     inf"
        print(
            "  %10.6f |  %.4f  |  %.4f  | %.5f | %s"
            % (rep.window_s, rep.ensemble_avg, rep.time_avg, rep.gap, z)
        )
    print()
print("equality of the two averages is what lets measured frequencies be")
print("inserted into the inequality; the drifting model breaks it exactly")
print("where the meter also reports not-random sequences.")
