#!/usr/bin/env python3
"""Smoke test for the crosswalk_twin_py extension module.

Builds nothing itself: it locates the compiled cdylib under target/
(release preferred), stages it under an importable name, and exercises the
geodesy, risk-region, detection-zone, and predictor surfaces.

    cargo build -p crosswalk-twin-py --release
    python3 python/smoke_test.py
"""

import math
import os
import shutil
import sys
import tempfile

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def stage_module() -> str:
    candidates = [
        os.path.join(REPO, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libcrosswalk_twin_py.so", "crosswalk_twin_py.so")
    ]
    built = next((c for c in candidates if os.path.exists(c)), None)
    if built is None:
        sys.exit("build first: cargo build -p crosswalk-twin-py --release")
    stage = tempfile.mkdtemp(prefix="crosswalk_twin_py_")
    shutil.copy(built, os.path.join(stage, "crosswalk_twin_py.so"))
    return stage


sys.path.insert(0, stage_module())
import crosswalk_twin_py as ct  # noqa: E402


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


# Geodesy: one degree of equatorial arc and cardinal bearings.
close(ct.haversine_distance(0.0, 0.0, 0.0, 1.0), math.pi * 6_371_000.0 / 180.0, 0.01)
close(ct.bearing(0.0, 0.0, 1.0, 0.0), 0.0, 1e-9)
close(ct.bearing(0.0, 0.0, 0.0, 1.0), 90.0, 1e-9)

# Risk region: the reference half-angle and risk-estimate rows.
close(ct.crr_half_angle(2.6, 16.95), 8.72, 0.01)
close(ct.compute_cre(16.95, 14.57), 1.16, 0.005)
close(ct.compute_cre(16.95, 6.24), 2.72, 0.005)
assert ct.in_crr(14.57, -5.32)
assert ct.in_crr(14.38, -8.46)
assert not ct.in_crr(10.0, 9.0)
assert not ct.in_crr(20.0, 0.0)

# Vehicle detection zone from the stopping-sight-distance rule.
final_m, start_m = ct.compute_vehicle_zone(47.24, 11.176, 15.0)
close(final_m, 58.42, 0.01)
close(start_m, 167.64, 0.01)

# Predictor: fit constant-speed walking, compare with the constant-velocity
# oracle, and round-trip the model file.
SPEED = 1.4
window = [[SPEED, 0, 0, 0, 0, 0, 0, SPEED * i] for i in range(4)]
windows = [window] * 12
targets = [[SPEED * k for k in range(1, 9)]] * 12

model, rmse = ct.train_model(
    "pedestrian", windows, targets, epochs=200, seed=7, units=(32, 32, 16), batch_size=8
)
assert model.role == "pedestrian"
assert model.input_steps == 4
assert rmse <= 0.05, f"trained rmse {rmse}"

pred = model.predict(window)
assert len(pred) == 8
for k, value in enumerate(pred, start=1):
    close(value, SPEED * k, 0.1)

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "model.json")
    model.save(path)
    back = ct.Model.load(path)
    assert back.role == "pedestrian"
    for a, b in zip(back.predict(window), pred):
        close(a, b, 1e-12)

print("smoke test passed")
