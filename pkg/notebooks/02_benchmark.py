"""Simulated benchmark: GC vs RC vs step at increasing noise.

Each stream is drawn from its own Philox generator keyed by
``hash64(seed, index)``, so the result does not depend on worker count.
"""
from changestream import SimConfig, detect, evaluate_methods, simulate_benchmark

METHODS = ("step", "gc", "rc")

for sigma_p in (0.0, 0.5, 1.0):
    cfg = SimConfig(num_streams=40, no_change_streams=40, sigma_p=sigma_p, sigma_h=0.2, seed=42)
    streams = simulate_benchmark(cfg)
    detections = [detect(table, m, stream_id=truth.stream_id) for table, truth in streams for m in METHODS]
    reports = evaluate_methods(detections, [truth for _, truth in streams])
    row = "  ".join(f"{m}: AP@0={reports[m].ap_per_window[0]:6.2f} mAP={reports[m].map_value:6.2f}"
                    for m in METHODS)
    print(f"sigma_p={sigma_p:.1f}  {row}")
