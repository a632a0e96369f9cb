"""The evaluation layer on synthetic scores, no training involved.

Shows how thresholds are anchored, what each rate counts, and why a small
imposter set refuses very fine FAR anchors. Runs in well under a second.
"""

import numpy as np

from morphbench import vulneval

rng = np.random.default_rng(7)

# fake a verification system: genuine pairs score high, imposters low,
# morphs in between (that overlap is exactly what the metrics quantify)
scores = vulneval.ScoreSet(
    genuine=np.clip(rng.normal(0.75, 0.12, 2000), -1, 1),
    imposter=np.clip(rng.normal(0.05, 0.18, 5000), -1, 1),
    mmmss=np.clip(rng.normal(0.45, 0.20, 300), -1, 1),
)

for far in (1e-1, 1e-2, 1e-3):
    t = vulneval.threshold_at_far(scores.imposter, far)
    r = vulneval.rates_at(scores, t)
    print(f"anchor FAR<={far:<6g} threshold {t:+.4f}  far {r['far']:.4f}  "
          f"frr {r['frr']:.4f}  mmpmr {r['mmpmr']:.4f}  rmmr {r['rmmr']:.4f}")

t = vulneval.threshold_at_frr(scores.genuine, 0.0073)
r = vulneval.rates_at(scores, t)
print(f"anchor FRR<=0.0073 threshold {t:+.4f}  far {r['far']:.4f}  "
      f"frr {r['frr']:.4f}  mmpmr {r['mmpmr']:.4f}  rmmr {r['rmmr']:.4f}")

# 5000 imposters cannot resolve a one-in-a-million rate; the report
# machinery flags this instead of silently rounding to zero
entries = vulneval._anchor_entries(scores, far_anchors=(1e-6,), frr_anchors=())
print(f"\nanchor FAR<=1e-6 -> refused: {entries[0]['why']}")

roc = vulneval.roc_mmpmr_frr(scores)
knee = np.argmin(np.abs(roc.frr - 0.01))
print(f"\nROC: {roc.thresholds.size} swept thresholds; at frr {roc.frr[knee]:.4f} "
      f"the morph acceptance rate is {roc.mmpmr[knee]:.4f}")
