"""Memory-experiment walkthrough: build a patch, sample noisy rounds,
decode, and estimate the logical error rate at a few physical rates.

Run with: python demos/memory_experiment.py
"""

import numpy as np

import latte

# A distance-5 rotated patch: 25 data qubits, 24 stabilizers split between
# the two bases, logical supports on the top row / left column.
patch = latte.build_surface_code(5)
print(f"d=5 patch: {len(patch.data_qubits)} data qubits, "
      f"{len(patch.z_stabilizers)} Z + {len(patch.x_stabilizers)} X stabs")

# The error model covers four mechanism kinds per round; the headline rate
# p maps to (pauli, measurement, diagonal, hook) = (p, p, p/2, p/2).
model = latte.build_dem(patch, rounds=5, noise=latte.NoiseParams.uniform(2e-3))
from collections import Counter
print("mechanisms:", dict(Counter(e.kind for e in model.edges)))

# One shot: flip mechanisms independently, read the detectors, decode the
# Z-basis subgraph, and compare against the true logical flip.
shot = latte.sample_shot(model, seed=7, shot_index=0)
graph = model.subgraph("Z")
local = model.basis_local_index("Z")
defects = [int(local[k]) for k in np.flatnonzero(shot.detector_bits)
           if local[k] >= 0]
corr = latte.uf_decode(graph, defects)
print(f"shot 0: {len(defects)} Z defects, matched {len(corr.edges)} edges, "
      f"decoded flip {corr.logical_flip & 1} vs true "
      f"{shot.true_logical & 1}")

# The experiment harness wraps the loop with Wilson intervals.
for p in (1e-3, 5e-3, 2e-2):
    m = latte.run_memory(latte.ExperimentSpec(
        kind="memory", d=5, p=p, shots=4000, seed=1))
    lo, hi = m["ci95"]
    print(f"p={p:g}: LER = {m['ler']:.2e}  (95% CI [{lo:.2e}, {hi:.2e}])")
