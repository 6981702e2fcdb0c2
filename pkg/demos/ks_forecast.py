"""Forecast Kuramoto-Sivashinsky chaos (L=22, 64 grid points) with HENG-RC.

The neighbor-product features grow linearly with the grid (6 per point per
delay block), so the 960-feature model trains in a fraction of a second on
10000 samples. The difference field between truth and prediction is written
to CSV for plotting elsewhere.

    python demos/ks_forecast.py [out.csv]
"""

import sys

from chaosrc.bench import KS_LAMBDA, ks_lyapunov
from chaosrc.dynsys import KsParams, ks_generate
from chaosrc.features import FeatureConfig, plan_features
from chaosrc.metrics import difference_field, valid_time
from chaosrc.readout import predict_closed_loop, train
from chaosrc.timeseries import write_csv

TRAIN, HORIZON = 10000, 1000

series = ks_generate(KsParams(), TRAIN + HORIZON - 1, seed=7)
warm, truth = series.slice(0, TRAIN), series.slice(TRAIN)
lyap = ks_lyapunov(22, 64)
print(f"lambda_max={lyap.lambda_max:.4f}, Lyapunov time={lyap.lyapunov_time:.1f}")

fmap = plan_features(FeatureConfig("heng_rc", 64, 2))
model, summary = train(warm, fmap, KS_LAMBDA["heng_rc"])
print(f"{fmap.total_dim} features, featurize {summary.wall_clock_featurize:.2f}s, "
      f"solve {summary.wall_clock_train:.2f}s")

pred = predict_closed_loop(model, warm, HORIZON)
for theta in (0.2, 0.3, 0.5):
    rep = valid_time(truth, pred, theta, lyap)
    print(f"theta={theta}: {rep.valid_steps} steps = {rep.valid_lyapunov_times:.2f} Lyapunov times")

if len(sys.argv) > 1 and not pred.blew_up:
    write_csv(difference_field(truth, pred), sys.argv[1])
    print(f"difference field written to {sys.argv[1]}")
