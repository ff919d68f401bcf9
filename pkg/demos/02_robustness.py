"""Mislabeled-looking outliers: how much do the robust penalties help?

Ten percent of each class is moved into some other class's blob while keeping
its original class, so labeled outliers pull their neighbors the wrong way.
Averages over 20 draws. Run:

    python demos/02_robustness.py
"""
from situprop import SolverConfig, SyntheticSpec, robustness_comparison

configs = {
    "gss": SolverConfig(method="gss"),
    "l1": SolverConfig(method="l1"),
    "capped": SolverConfig(method="capped", p_exp=1.0, theta=1.0),
}
out = robustness_comparison(SyntheticSpec(outlier_fraction=0.1), range(20), configs)
print(f"{'method':>7}  {'known':>7}  {'novel':>7}")
for name, (known, novel) in out["means"].items():
    print(f"{name:>7}  {known:7.2f}  {novel:7.2f}")

gss = [row["gss"][0] for row in out["per_seed"]]
for name in ("l1", "capped"):
    wins = sum(row[name][0] > g for row, g in zip(out["per_seed"], gss))
    losses = sum(row[name][0] < g for row, g in zip(out["per_seed"], gss))
    print(f"{name} vs gss per draw: {wins} better, {losses} worse")
