"""Compare the three inference rules driven by one trained network.

Runs the stock sampler-comparison experiment (trains once, then sweeps
the step grid for each update rule) and prints the result table that
would normally land in the CSV report.
"""

from restep.harness import default_config, run_experiment

config = default_config("sampler_compare")
config["eval"]["n_inputs"] = 300          # keep the demo quick

print("training a deliberately rough regressor, then sweeping N ...")
report = run_experiment(config, write=False)

print()
header = f"{'N':>5}  {'sampler':<15} {'mse':>10} {'hit rate':>9} {'div':>4}"
print(header)
print("-" * len(header))
for row in sorted(report.rows, key=lambda r: (r["N"], r["sampler"])):
    print(f"{row['N']:5d}  {row['sampler']:<15} {row['mse']:10.6f} "
          f"{row['mode_hit_rate']:9.3f} {row['divergent']:4d}")

print()
print("readings:")
print(" * at N=1 all three rules collapse to the same single call")
print(" * the naive rule tracks the stepwise one closely here but is the")
print("   only one with no contraction argument behind it; with rougher")
print("   estimators it drifts (and the divergence guard flags it)")
print(" * cold diffusion is stable but parks short of the modes, visible")
print("   in its lower hit rate at large N")
