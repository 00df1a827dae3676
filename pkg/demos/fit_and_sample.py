"""Rational fitting of an oracle response, then greedy ensemble-driven sampling.

Run with ``python3 demos/fit_and_sample.py``; prints to stdout only.
"""

import numpy as np

from rfsurrogate import oracle, vecfit
from rfsurrogate.core import metrics

spec = oracle.OracleSpec.default("mtl")
dense = spec.dense_grid
index = spec.space.size // 2
print("geometry:", spec.space.point(index))

# full sweep, fit at order 12
ref = oracle.simulate(spec, index, dense)
model = vecfit.fit(ref, vecfit.FitConfig(order=12))
print("order 12 on 401 points:", metrics(ref, vecfit.evaluate(model, dense), allow_undefined=True))

# the same fit from 40 evenly spaced points
few = ref.subset(np.linspace(0, dense.count - 1, 40).round().astype(int))
model = vecfit.fit(few, vecfit.FitConfig(order=12))
print("order 12 on 40 points: rmse", metrics(ref, vecfit.evaluate(model, dense), allow_undefined=True).rmse)

# spread between fits of neighbouring orders marks where more samples help
u = vecfit.ensemble_uncertainty(few, [10, 12, 14], dense)
top = np.argsort(u)[-5:]
print("largest order-ensemble spread at (GHz):", np.round(dense.points[np.sort(top)] / 1e9, 3))

# classic adaptive loop: seed uniformly, then add the most uncertain point
rational = oracle.OracleSpec.default("rational", dense_count=301)
target = oracle.simulate(rational, 10, rational.dense_grid)
row = {float(f): k for k, f in enumerate(rational.dense_grid.points)}
res = vecfit.classic_afs(lambda f: target.data[row[f]], rational.dense_grid,
                         budget=30, orders=[8, 10, 12])
print(f"classic AFS: {len(res.indices)} points, best order {res.best_order}, {res.fit_calls} fits")
print("rmse over the band:",
      metrics(target, vecfit.evaluate(res.model, rational.dense_grid), allow_undefined=True).rmse)
