"""Smoke test for the irtkit extension: python python/smoke.py"""

import math

import irtkit

assert abs(irtkit.probit(0.0) - 0.5) < 1e-15
assert abs(irtkit.probit(1.0) - 0.5 * math.erfc(-1.0 / math.sqrt(2.0))) < 1e-14

d = irtkit.Dataset.from_csv(
    "student_id,item_id,group_id,correct\na,x,g,1\na,y,g,0\nb,x,g,0\nb,y,,1\n"
)
assert (len(d), d.n_students, d.n_items) == (4, 2, 2)
assert d.records()[1] == ("a", "y", 1, False)
assert irtkit.Dataset.from_csv(d.to_csv()).content_hash() == d.content_hash()

d = irtkit.Dataset.synthetic(60, 15, 25, seed=3, n_groups=3)
fit = irtkit.fit_irt(d)
assert fit.converged and len(fit.theta) == 60 and len(fit.beta) == 15
assert 0.0 < fit.predict(0, 0) < 1.0
hfit = irtkit.fit_hirt(d, 0.25, 0.5)
assert len(hfit.mu) == 3

assert irtkit.accuracy([0.9, 0.2, 0.5], [True, False, True]) == 2 / 3
assert irtkit.auc([0.1, 0.4, 0.35, 0.8], [False, False, True, True]) == 0.75

holdout, folds = irtkit.make_split(d.n_students, 1)
assert len(holdout) == 12 and len(folds) == 5
assert sorted(holdout + sum(folds, [])) == list(range(60))

irt = irtkit.cross_validate(d, "irt", seed=1)
tirt = irtkit.cross_validate(d, "tirt", seed=1, gamma2=0.0)
assert irt["folds"] == tirt["folds"]
assert len(irt["predictions"]) == sum(
    len([r for r in d.records() if r[0] == s]) - 1
    for s in (d.student_ids()[i] for f in folds for i in f)
)
win = irtkit.cross_validate(d, "window", seed=1, w=3)
assert win["auc"] is None

try:
    irtkit.cross_validate(d, "irt", gamma2=0.1)
except ValueError:
    pass
else:
    raise AssertionError("foreign hyperparameter accepted")

rows, best = irtkit.sweep(d, "tirt", seed=1)
assert len(rows) == 6 and best in [r[0] for r in rows]

print("irtkit smoke test passed:", irt["model"], irt["accuracy"], irt["auc"])
