"""Three labeled blobs plus one blob nobody labeled.

Propagation with an extra "novel" column sends the unlabeled blob to class
c+1 instead of forcing it into the nearest known class. Run:

    python demos/01_novel_class.py
"""
import numpy as np

from situprop import SolverConfig, build_graph, evaluate, generate, SyntheticSpec
from situprop.core import build_fitting_weights, build_indicator
from situprop.solvers import solve

x, truth, prior = generate(SyntheticSpec(seed=1))
g = build_graph(x, "can", k=10)
y, u = build_indicator(prior, x.n), build_fitting_weights(prior, x.n)
print(f"{x.n} items, {prior.m} labeled, {prior.c} known classes, dim {x.p}")

for method in ("gss", "l1", "capped"):
    res = solve(g, y, u, SolverConfig(method=method))
    rep = evaluate(res, truth)
    print(f"{method:>6}: known {rep.acc_known:6.2f}%  novel {rep.acc_unknown:6.2f}%  "
          f"iterations {res.iterations}")

# a plain c-column argmax has nowhere to put the new blob: it gets split
# among the known classes
res = solve(g, y, u, SolverConfig(method="gss"))
closed = np.argmax(res.f[:, :prior.c], axis=1) + 1
novel = truth.classes == prior.c + 1
spread = np.bincount(closed[novel], minlength=prior.c + 1)[1:]
print("without the novel column the new blob goes to classes 1..c as", spread.tolist())
