"""Benchmark harness: cold, warm and sequential-baseline runs over batch sizes."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .config import SceneConfig
from .engine import GENERATION_STAGES, INIT_STAGES, cold_generate, initialize, sequential_baseline, warm_generate

MODES = ("cold", "warm", "baseline")
COLUMNS = ("mode", "n", "scenes_run", "seed", "n_valid", "total_s", "per_scene_s", "valid_per_s",
           *INIT_STAGES, *GENERATION_STAGES, "speedup_vs_baseline")


def _row(mode, n, scenes_run, seed, n_valid, total, timings):
    row = {
        "mode": mode, "n": n, "scenes_run": scenes_run, "seed": seed, "n_valid": n_valid,
        "total_s": total, "per_scene_s": total / scenes_run,
        "valid_per_s": n_valid / total if total > 0 else float("inf"),
        "speedup_vs_baseline": None,
    }
    for stage in INIT_STAGES + GENERATION_STAGES:
        row[stage] = timings.get(stage) if stage in timings else None
    return row


def run_bench(config: SceneConfig, sizes, modes=MODES, seed: int = 0, base_dir=None,
              baseline_cap: int = 64, log=print) -> list[dict]:
    """One row per (mode, N). Warm rows time generation only, after one untimed warm-up.

    The baseline runs ``min(N, baseline_cap)`` scenes and reports per-scene cost.
    """
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}")
    rows = []
    for n in sizes:
        if "cold" in modes:
            _, _, rep = cold_generate(config, n, seed, base_dir)
            rows.append(_row("cold", n, n, seed, rep.n_valid, rep.wall_time, rep.timings))
            log(f"cold     N={n:<7d} {rep.wall_time:9.3f}s  valid={rep.n_valid}")
        if "warm" in modes:
            state = initialize(config, n, base_dir)
            warm_generate(state, seed)
            _, rep = warm_generate(state, seed)
            rows.append(_row("warm", n, n, seed, rep.n_valid, rep.wall_time, rep.timings))
            log(f"warm     N={n:<7d} {rep.wall_time:9.3f}s  valid={rep.n_valid}")
        if "baseline" in modes:
            k = min(n, baseline_cap)
            res = sequential_baseline(config, k, seed, base_dir)
            timings = {}
            for r in res.reports:
                for stage, v in r.timings.items():
                    timings[stage] = timings.get(stage, 0.0) + v
            rows.append(_row("baseline", n, k, seed, res.n_valid, res.wall_time, timings))
            log(f"baseline N={n:<7d} {res.wall_time:9.3f}s  valid={res.n_valid} (ran {k} scenes)")
    base = {r["n"]: r["per_scene_s"] for r in rows if r["mode"] == "baseline"}
    for r in rows:
        if r["mode"] != "baseline" and r["n"] in base:
            r["speedup_vs_baseline"] = base[r["n"]] / r["per_scene_s"]
    return rows


def summary(rows: list[dict]) -> str:
    lines = [f"{'mode':<9}{'N':>8}{'total s':>11}{'valid/s':>12}{'speedup':>10}"]
    for r in rows:
        sp = "" if r["speedup_vs_baseline"] is None else f"{r['speedup_vs_baseline']:.1f}x"
        lines.append(f"{r['mode']:<9}{r['n']:>8}{r['total_s']:>11.3f}{r['valid_per_s']:>12.1f}{sp:>10}")
    cold = {r["n"]: r["total_s"] for r in rows if r["mode"] == "cold"}
    warm = {r["n"]: r["total_s"] for r in rows if r["mode"] == "warm"}
    for n in sorted(cold.keys() & warm.keys()):
        lines.append(f"cold/warm time ratio at N={n}: {cold[n] / warm[n]:.2f}")
    return "\n".join(lines)


def write_bench(rows: list[dict], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.json").write_text(json.dumps(rows, indent=1) + "\n")
    with (out / "bench.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: "" if r.get(k) is None else r[k] for k in COLUMNS})
    (out / "summary.txt").write_text(summary(rows) + "\n")
