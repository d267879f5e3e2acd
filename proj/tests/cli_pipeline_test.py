#!/usr/bin/env python3
"""Drives the command line tool through a full pipeline at smoke scale and
checks artifact wiring: determinism of digests, byte-identical reruns,
schema-valid reports and the documented exit codes."""
import argparse
import json
import pathlib
import shutil
import subprocess
import sys
import tempfile

failures = []


def check(name, ok, detail=""):
    line = f"{'ok' if ok else 'FAIL'}  {name}"
    if detail:
        line += f"  [{detail}]"
    print(line)
    if not ok:
        failures.append(name)


def run(binary, *args, expect=0):
    proc = subprocess.run([binary, *args], capture_output=True, text=True)
    if proc.returncode != expect:
        raise RuntimeError(
            f"{' '.join(args)} exited {proc.returncode} (wanted {expect}):\n{proc.stderr}"
        )
    return proc.stdout.strip()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cavlab", required=True)
    ap.add_argument("--config", required=True)
    args = ap.parse_args()
    bin_ = args.cavlab
    cfg = args.config

    work = pathlib.Path(tempfile.mkdtemp(prefix="cavlab-cli-"))
    store = str(work / "store")
    try:
        # determinism: the same generation config lands in the same directory
        gen1 = run(bin_, "gen", "--store", store, "--config", cfg)
        gen2 = run(bin_, "gen", "--store", store, "--config", cfg)
        check("gen digest deterministic", gen1 == gen2, gen1)
        scenes = json.loads((pathlib.Path(gen1) / "scenes.json").read_text())
        check("gen scene count", len(scenes["scenes"]) == 150)

        model = run(bin_, "train", "--store", store, "--config", cfg, "--data", "dataset")
        check("train emits model.bin", (pathlib.Path(model) / "model.bin").exists(), model)

        cav = run(bin_, "cav", "--store", store, "--config", cfg, "--model", "model")
        summary = json.loads((pathlib.Path(cav) / "cav_summary.json").read_text())
        # 10 concepts + the random family, at two capture layers
        check("cav summary families", len(summary["families"]) == 22,
              str(len(summary["families"])))

        tcav1 = run(bin_, "tcav", "--store", store, "--config", cfg, "--model", "model",
                    "--cavs", "cav")
        tcav_json = pathlib.Path(tcav1) / "tcav.json"
        rows = json.loads(tcav_json.read_text())["rows"]
        # classes x concepts x layers
        check("tcav row count", len(rows) == 2 * 10 * 2, str(len(rows)))
        check("tcav display convention",
              all(r["display"] == ("black" if r["significant"] else "red") for r in rows))

        # byte-identical rerun of an analysis stage with identical inputs
        before = tcav_json.read_bytes()
        tcav2 = run(bin_, "tcav", "--store", store, "--config", cfg, "--model", "model",
                    "--cavs", "cav")
        check("tcav rerun digest", tcav1 == tcav2)
        check("tcav rerun bytes", tcav_json.read_bytes() == before)

        cons = run(bin_, "consistency", "--store", store, "--config", cfg, "--model", "model",
                   "--cavs", "cav")
        check("consistency emits csv", (pathlib.Path(cons) / "consistency.csv").exists())

        ent = run(bin_, "entangle", "--store", store, "--config", cfg, "--cavs", "cav")
        sim_files = sorted(p.name for p in pathlib.Path(ent).glob("similarity-*.json"))
        check("entangle per-layer files", len(sim_files) == 2, ",".join(sim_files))

        spat = run(bin_, "spatial", "--store", store, "--config", cfg, "--model", "model",
                   "--cavs", "cav")
        spatial = json.loads((pathlib.Path(spat) / "spatial.json").read_text())
        check("spatial mass rows", len(spatial["mass"]) > 0)

        png = str(work / "scene.png")
        run(bin_, "render", "--config", cfg, "--index", "3", "--out", png)
        check("render writes png", pathlib.Path(png).read_bytes()[:8] ==
              b"\x89PNG\r\n\x1a\n")

        schemas = work / "schemas"
        run(bin_, "schemas", "--out", str(schemas))
        check("schema files", len(list(schemas.glob("*.schema.json"))) >= 5)
        run(bin_, "validate", "--kind", "tcav", "--file", str(tcav_json))
        check("validate accepts tcav report", True)

        theory = run(bin_, "theory")
        check("theory cases pass", "FAIL" not in theory, theory.splitlines()[0])

        # exit codes: 2 config, 3 missing artifact, 4 numeric failure
        p = subprocess.run([bin_, "gen", "--store", store, "--set", "dataset.nope=1"],
                           capture_output=True, text=True)
        check("unknown key exits 2", p.returncode == 2, p.stderr.strip())
        p = subprocess.run([bin_, "tcav", "--store", str(work / "empty"), "--model", "model",
                            "--cavs", "cav"], capture_output=True, text=True)
        check("missing artifact exits 3", p.returncode == 3, p.stderr.strip())
        p = subprocess.run([bin_, "gen", "--store", str(work / "jam"), "--set",
                            "dataset.side=32", "--set", "dataset.elements=20", "--set",
                            "dataset.min_size=24", "--set", "dataset.max_size=28"],
                           capture_output=True, text=True)
        check("unplaceable scene exits 4", p.returncode == 4, p.stderr.strip())
        p = subprocess.run([bin_, "frobnicate"], capture_output=True, text=True)
        check("unknown subcommand exits 2", p.returncode == 2)
    finally:
        shutil.rmtree(work, ignore_errors=True)

    if failures:
        print(f"{len(failures)} checks failed: {', '.join(failures)}")
        return 1
    print("all cli checks pass")
    return 0


if __name__ == "__main__":
    sys.exit(main())
