"""
A reproducible run directory
============================

``cmd_run`` writes a manifest, the step log, trades, checkpoints and a
report; ``cmd_report`` recomputes the metrics from the logs alone.
The same steps are available as ``rltrader run`` and ``rltrader report``.
"""
import os
import tempfile

import numpy as np

from rltrader.cli import cmd_report, cmd_run
from rltrader.config import make_config
from rltrader.data import PriceSeries, write_price_csv

out = tempfile.mkdtemp(prefix="rltrader-demo-")
rng = np.random.default_rng(3)
px = 1000 * np.exp(np.cumsum(rng.normal(0, 0.01, 300)))
data = os.path.join(out, "prices.csv")
write_price_csv(data, PriceSeries(1_546_300_800 + 86_400 * np.arange(300), px))

# a smaller network keeps the demo quick
cfg = make_config({"data_path": data, "out": out, "instrument": "DEMO", "seed": 1,
                   "lstm1": 8, "lstm2": 4, "merge1": 8, "merge2": 4})
run_dir = cmd_run(cfg)
print(sorted(os.listdir(run_dir)))
cmd_report(run_dir)
