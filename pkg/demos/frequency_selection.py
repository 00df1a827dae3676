"""Where do uncertainty-aware frequency samples land?

A synthetic uncertainty curve with one narrow and one broad bump is split
into equal-mass partitions; one sample is drawn from each. Prints an ASCII
strip of the curve with the chosen points marked.
"""

import numpy as np

from rfsurrogate.core import FrequencyGrid
from rfsurrogate.sampling import uaw_afs

grid = FrequencyGrid.linspace(1e9, 10e9, 401)
t = np.linspace(0, 1, grid.count)
u = 0.05 + np.exp(-0.5 * ((t - 0.3) / 0.02) ** 2) + 0.4 * np.exp(-0.5 * ((t - 0.75) / 0.1) ** 2)

sel = uaw_afs(grid, u, 20, np.random.default_rng(0))
print("partition edges:", sel.edges)
print("chosen (GHz):", np.round(grid.points[list(sel.indices)] / 1e9, 2))

# 80-column strip: bar height from u, '^' under each chosen point
cols = np.linspace(0, grid.count - 1, 80).round().astype(int)
levels = " .:-=+*#%@"
print("".join(levels[int(9 * u[c] / u.max())] for c in cols))
marks = [" "] * 80
for i in sel.indices:
    marks[int(np.argmin(np.abs(cols - i)))] = "^"
print("".join(marks))

# with no uncertainty at all the partitions are uniform
flat = uaw_afs(grid, np.zeros(grid.count), 8, np.random.default_rng(0))
print("zero curve -> uniform fallback:", flat.uniform_fallback, flat.edges)
