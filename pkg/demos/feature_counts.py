"""How the feature vector grows with grid size for HENG-RC and NG-RC.

NG-RC keeps every quadratic product of the delayed state, so its size grows
with the square of Q*(k+1). HENG-RC keeps only products of spatial neighbors
at adjacent delays: 6 terms per grid point per delay block.

    python demos/feature_counts.py
"""

from chaosrc.features import FeatureConfig, plan_features

print(f"{'Q':>5} {'k':>2} {'HENG-RC':>9} {'NG-RC':>10} {'ratio':>7}")
for q in (16, 64, 256, 512):
    for k in (1, 2):
        heng = plan_features(FeatureConfig("heng_rc", q, k)).total_dim
        ng = plan_features(FeatureConfig("ng_rc", q, k)).total_dim
        print(f"{q:5d} {k:2d} {heng:9d} {ng:10d} {ng / heng:7.1f}")

# The terms are listed explicitly; a small case shows their order.
fm = plan_features(FeatureConfig("heng_rc", 3, 1))
for i, term in enumerate(fm.term_index[:10]):
    print(i, term)
