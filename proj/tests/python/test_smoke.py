#!/usr/bin/env python3
"""Smoke checks for the _cavlab extension module. Needs the built module on
PYTHONPATH; pass --cavlab to also exercise Model against a freshly trained
checkpoint."""
import argparse
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

import numpy as np

import _cavlab as cl

failures = []


def check(name, ok, detail=""):
    line = f"{'ok' if ok else 'FAIL'}  {name}"
    if detail:
        line += f"  [{detail}]"
    print(line)
    if not ok:
        failures.append(name)


def checks_without_model():
    check("version string", isinstance(cl.version(), str) and len(cl.version()) > 0,
          cl.version())

    names = cl.class_names("simple", 64)
    check("simple class count", len(names) == 69, str(len(names)))
    check("standard class count", len(cl.class_names("standard", 64)) == 153)

    a = cl.dataset_image("simple", 64, 7, 0)
    b = cl.dataset_image("simple", 64, 7, 0)
    c = cl.dataset_image("simple", 64, 8, 0)
    check("image shape", a.shape == (64, 64, 3) and a.dtype == np.float32)
    check("image deterministic", np.array_equal(a, b))
    check("image seed sensitive", not np.array_equal(a, c))
    check("image range", float(a.min()) >= 0.0 and float(a.max()) <= 1.0)

    labels = cl.image_classes("simple", 64, 7, 0)
    check("labels multi-hot", len(labels) == 69 and sum(labels) >= 1, str(sum(labels)))

    rng = np.random.default_rng(3)
    pos = rng.normal(1.5, 1.0, size=(120, 12)).astype(np.float32)
    neg = rng.normal(-1.5, 1.0, size=(120, 12)).astype(np.float32)
    v, intercept, acc = cl.train_cav(pos, neg)
    check("cav unit norm", math.isclose(float(np.linalg.norm(v)), 1.0, rel_tol=1e-5))
    check("cav separates gaussians", acc > 0.95, f"{acc:.3f}")
    v2, _, _ = cl.train_cav(neg, pos)
    check("cav swap negates", np.array_equal(v, -v2))

    check("tcav zeros count against", cl.tcav_score([2.0, -1.0, 0.0, 1.0]) == 0.5)
    check("pair fraction ties half", cl.pair_fraction([1.0, 2.0], [2.0, 0.0]) == 0.625)

    x = [1.1, 2.3, 1.9, 2.8, 0.7, 1.5]
    y = [3.2, 2.9, 4.1, 3.3, 3.8]
    p = cl.welch_p(x, y)
    try:
        from scipy import stats
        ref = stats.ttest_ind(x, y, equal_var=False).pvalue
        check("welch p matches scipy", abs(p - ref) < 1e-9, f"{p:.6g} vs {ref:.6g}")
    except ImportError:
        check("welch p in range", 0.0 < p < 0.01, f"{p:.6g}")

    direction = rng.normal(size=48).astype(np.float32)
    grid = cl.direction_grid(direction, 4, 3)
    check("grid shape", grid.shape == (4, 4))
    check("grid norm identity",
          math.isclose(float((grid ** 2).sum()), float((direction.astype(np.float64) ** 2).sum()),
                       rel_tol=0, abs_tol=1e-10))


def checks_with_model(cavlab, config):
    work = pathlib.Path(tempfile.mkdtemp(prefix="cavlab-py-"))
    try:
        store = str(work / "store")
        subprocess.run([cavlab, "gen", "--store", store, "--config", config], check=True,
                       capture_output=True)
        out = subprocess.run([cavlab, "train", "--store", store, "--config", config,
                              "--data", "dataset"], check=True, capture_output=True, text=True)
        model_dir = pathlib.Path(out.stdout.strip())

        model = cl.Model(str(model_dir / "model.bin"))
        check("model layer names", model.layers[0] == "layers.0", ",".join(model.layers))

        img = cl.dataset_image("simple", 32, 11, 2)
        z1 = model.logits(img)
        z2 = model.logits(img)
        check("logit count", z1.shape == (len(cl.class_names("simple", 32)),), str(z1.shape))
        check("logits deterministic", np.array_equal(z1, z2))

        act = model.capture(img, 1)
        check("capture nonempty", act.size > 0 and np.isfinite(act).all(), str(act.size))
        check("capture nonnegative", float(act.min()) >= 0.0)
    finally:
        shutil.rmtree(work, ignore_errors=True)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cavlab", help="cli binary; enables the Model checks")
    ap.add_argument("--config", help="smoke config for the Model checks")
    args = ap.parse_args()

    checks_without_model()
    if args.cavlab and args.config:
        checks_with_model(args.cavlab, args.config)

    if failures:
        print(f"{len(failures)} checks failed: {', '.join(failures)}")
        return 1
    print("all python checks pass")
    return 0


if __name__ == "__main__":
    sys.exit(main())
