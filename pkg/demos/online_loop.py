"""A small online-learning run on the spiral inductor oracle.

Trains a Bayesian surrogate, adds geometries and frequencies where the
ensemble disagrees, and compares against random geometries on a uniform
frequency grid at the same simulation budget. Takes a few minutes.
"""

from rfsurrogate import bnn, loop, oracle

spec = oracle.OracleSpec.default("si")
net = bnn.NetConfig(optimizer="adam", learning_rate=1e-3, batch_size=128, epochs=150)
cfg = loop.LoopConfig(max_iterations=4, ensemble_size=8, candidate_cap=300, net=net, seed=0)


def show(h):
    print(f"  iteration {h.iteration}: val rmse {h.val_rmse:.3f} dB, {h.n_records} records, "
          f"{h.cumulative_sim_seconds / 60:.1f} simulated minutes")


print("uncertainty-aware loop")
rep = loop.run_loop(cfg, spec, progress=show)
base = loop.run_baseline("random-uniform", cfg, spec)
print()
print(loop.table_csv([rep, base]))
print(f"conventional flow would cost {loop.conventional_sim_seconds(cfg, spec) / 60:.0f} simulated minutes")
