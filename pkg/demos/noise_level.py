"""How the dither level changes what one sign can tell you.

Very little noise makes every sign of a given entry identical, so magnitudes
are lost; very large noise makes the signs close to coin flips. An
intermediate level recovers the tensor best. Run with
``python demos/noise_level.py``; it takes about a minute.
"""

from onebit_tc.experiments import ExperimentSpec, run_sigma_sweep

spec = ExperimentSpec(kind="sigma_sweep", shape=(12, 12, 12), ranks=(3,),
                      fractions=(0.5,), sigmas=(0.001, 0.03, 0.1, 0.3, 1.0, 10.0),
                      repetitions=2, methods=("tensor",), seed=0)
result = run_sigma_sweep(spec)

print(f"{'sigma':>8}  {'mean RSE':>9}")
for row in result.summary:
    bar = "#" * int(40 * min(row["rse_mean"], 1.0))
    print(f"{row['sigma']:8g}  {row['rse_mean']:9.3f}  {bar}")
