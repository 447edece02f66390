"""Inference cost on this machine: latency, throughput, MAC accounting."""

import time
from pathlib import Path

import numpy as np

from earpipe import io, nn

MODEL = Path(__file__).parent.parent / "tests" / "fixtures" / "model_crossear.epw"

model = io.load_model(MODEL)
params, macs = nn.count_params_and_macs(model)
print(f"deployed path: {params} parameters, {macs} MACs per 2 s window")

rng = np.random.default_rng(0)
windows = rng.standard_normal((64, 1, 500)).astype(np.float32)

for _ in range(20):
    nn.infer_probabilities(model, windows[0])

n = 500
t0 = time.perf_counter()
for i in range(n):
    nn.infer_probabilities(model, windows[i % 64])
dt = (time.perf_counter() - t0) / n
print(f"\nfloat path:  {dt * 1e3:7.3f} ms/inference "
      f"({macs / dt / 1e9:.2f} GMAC/s)")
print(f"  one 0.4 s rolling step costs {100 * dt / 0.4:.2f}% of real time")

qmodel = nn.calibrate(model, windows[:, 0, :])
for _ in range(5):
    nn.forward_quantized(qmodel, windows[0])
t0 = time.perf_counter()
for i in range(100):
    nn.forward_quantized(qmodel, windows[i % 64])
dq = (time.perf_counter() - t0) / 100
print(f"int8 path:   {dq * 1e3:7.3f} ms/inference "
      f"(desk emulation of the integer pipeline, not an MCU number)")
