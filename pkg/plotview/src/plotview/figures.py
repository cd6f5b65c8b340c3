"""Render randnls study CSVs into figures.

Four figure kinds are supported: tail survival curves (log survival against
R^2 so the fitted sub-Gaussian envelope is a straight line), bilinear
ratio-vs-N2 scans, existence-time against amplitude on log-log axes, and
continuation partition timelines.  Inputs are read-only; figures are written
atomically (temp file + rename) and deterministically for identical inputs.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SUPPORTED_SCHEMA = "1"

FIGURE_KINDS = ("tail", "bilinear", "existence", "continuation")

# fixed style so output bytes depend only on input data
STYLE = {
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "plotview",
}


class SchemaError(ValueError):
    pass


class EmptyDataError(ValueError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    csv_path: str
    manifest_path: str | None
    kind: str
    out_path: str

    def __post_init__(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {FIGURE_KINDS}")


def read_study_csv(path: str) -> list[dict]:
    """Typed rows from a study CSV; rejects unsupported schema versions."""
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or "schema_version" not in reader.fieldnames:
            raise SchemaError(f"{path}: missing schema_version column")
        rows = []
        for raw in reader:
            version = raw.pop("schema_version")
            if version != SUPPORTED_SCHEMA:
                raise SchemaError(
                    f"{path}: schema_version {version} not supported (supported: {SUPPORTED_SCHEMA})"
                )
            rows.append({key: _coerce(value) for key, value in raw.items()})
    return rows


def _coerce(value: str):
    if value in ("true", "false"):
        return value == "true"
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


def _load_manifest(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as handle:
        return json.load(handle)


def _atomic_save(fig, out_path: str) -> None:
    directory = os.path.dirname(os.path.abspath(out_path)) or "."
    os.makedirs(directory, exist_ok=True)
    handle, tmp_path = tempfile.mkstemp(suffix=".png", dir=directory)
    os.close(handle)
    try:
        fig.savefig(tmp_path, format="png", metadata={"Software": "plotview"})
        os.replace(tmp_path, out_path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp_path):
            os.remove(tmp_path)


def _study_params(manifest: dict) -> str:
    config = manifest.get("config", {})
    keys = ("grid.dimension", "grid.points", "random.law", "random.s", "run.seed")
    parts = [f"{key.split('.')[1]}={config[key]}" for key in keys if key in config]
    return ", ".join(parts)


def render_tail(rows: list[dict], manifest: dict, out_path: str) -> dict:
    """Log survival against R^2 with the fitted envelope per norm family."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["family"], row["horizon"]), []).append(row)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        fit_drawn = False
        for (family, horizon), group in sorted(groups.items()):
            thresholds = np.array([r["threshold"] for r in group], dtype=float)
            survival = np.array([r["survival"] for r in group], dtype=float)
            label = family if horizon == 0 else f"{family} T={horizon:g}"
            positive = survival > 0
            ax.semilogy(thresholds[positive] ** 2, survival[positive], "o", ms=4, label=label)
            in_fit = np.array([bool(r["in_fit"]) for r in group])
            if len(group) >= 2 and in_fit.any():
                fit_a = group[0]["fit_a"]
                fit_b = group[0]["fit_b"]
                if isinstance(fit_a, float) and isinstance(fit_b, float) and math.isfinite(fit_a) and math.isfinite(fit_b):
                    span = np.linspace(thresholds[in_fit].min(), thresholds[in_fit].max(), 64)
                    ax.semilogy(span**2, np.exp(fit_a - fit_b * span**2), "-", lw=1.2,
                                label=f"{label} envelope")
                    fit_drawn = True
        ax.set_xlabel("threshold R squared")
        ax.set_ylabel("empirical survival P(norm > R)")
        title = "survival of randomized-data norms"
        params = _study_params(manifest)
        ax.set_title(f"{title}\n{params}" if params else title)
        ax.legend(fontsize=8)
        _atomic_save(fig, out_path)
    return {"points": len(rows), "fit_drawn": fit_drawn}


def render_bilinear(rows: list[dict], manifest: dict, out_path: str) -> dict:
    """Bilinear ratio against N2 on log-log axes, with the fitted trend."""
    n2 = np.array([r["n2"] for r in rows], dtype=float)
    ratio = np.array([r["ratio"] for r in rows], dtype=float)
    fit = manifest.get("fits", {}).get("log_ratio_vs_log_n2", {})
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(n2, ratio, "o", ms=4, alpha=0.6, label="draws")
        fit_drawn = False
        scales = np.array(sorted(set(n2)))
        means = np.array([ratio[n2 == scale].mean() for scale in scales])
        ax.loglog(scales, means, "s-", lw=1.2, label="mean per scale")
        if {"slope", "intercept"} <= set(fit) and len(scales) >= 2:
            span = np.linspace(math.log(scales.min()), math.log(scales.max()), 32)
            ax.loglog(np.exp(span), np.exp(fit["intercept"] + fit["slope"] * span), "--",
                      label=f"fit slope {fit['slope']:.3f}")
            fit_drawn = True
        ax.set_xlabel("high dyadic scale N2")
        ax.set_ylabel("bilinear L2 / predicted scaling")
        params = _study_params(manifest)
        ax.set_title("bilinear ratio scan" + (f"\n{params}" if params else ""))
        ax.legend(fontsize=8)
        _atomic_save(fig, out_path)
    return {"points": len(rows), "fit_drawn": fit_drawn}


def render_existence(rows: list[dict], manifest: dict, out_path: str) -> dict:
    """Largest convergent horizon against amplitude on log-log axes."""
    amplitude = np.array([r["amplitude"] for r in rows], dtype=float)
    t_star = np.array([r["t_star"] for r in rows], dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        positive = t_star > 0
        ax.loglog(amplitude[positive], t_star[positive], "o", ms=4, alpha=0.5, label="seeds")
        fit_drawn = False
        amps = np.array(sorted(set(amplitude)))
        if len(amps) >= 2:
            medians = np.array([np.median(t_star[amplitude == a]) for a in amps])
            keep = medians > 0
            if keep.sum() >= 2:
                ax.loglog(amps[keep], medians[keep], "s-", lw=1.2, label="median")
                fit_drawn = True
        failed = ~positive
        if failed.any():
            ax.plot(amplitude[failed], np.full(failed.sum(), np.min(t_star[positive]) if positive.any() else 1.0),
                    "x", color="crimson", label="no convergent step")
        ax.set_xlabel("amplitude")
        ax.set_ylabel("largest convergent horizon T*")
        params = _study_params(manifest)
        ax.set_title("existence-time trend" + (f"\n{params}" if params else ""))
        ax.legend(fontsize=8)
        _atomic_save(fig, out_path)
    return {"points": len(rows), "fit_drawn": fit_drawn}


def render_continuation(rows: list[dict], manifest: dict, out_path: str) -> dict:
    """Partition timelines: one lane per (seed, eps), one bar per interval."""
    lanes: dict[tuple, list[dict]] = {}
    for row in rows:
        lanes.setdefault((row["seed"], row["eps"]), []).append(row)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        eps_values = sorted({key[1] for key in lanes}, reverse=True)
        colors = plt.cm.viridis(np.linspace(0.15, 0.8, max(len(eps_values), 1)))
        for lane_index, (key, group) in enumerate(sorted(lanes.items())):
            seed, eps = key
            color = colors[eps_values.index(eps)]
            for rec in group:
                if rec["interval_index"] < 0 or not math.isfinite(rec["t_start"]):
                    continue
                ax.plot([rec["t_start"], rec["t_end"]], [lane_index, lane_index], "-",
                        color=color, lw=4, solid_capstyle="butt")
                ax.plot([rec["t_end"]], [lane_index], "|", color="black", ms=10)
            failed = [rec for rec in group if isinstance(rec["verdict"], str) and "failed" in rec["verdict"]]
            if failed and math.isfinite(failed[0]["fail_time"]):
                ax.plot([failed[0]["fail_time"]], [lane_index], "x", color="crimson", ms=8)
        labels = [f"seed {seed}, eps {eps:g}" for seed, eps in sorted(lanes)]
        ax.set_yticks(range(len(labels)), labels, fontsize=7)
        ax.set_xlabel("time")
        params = _study_params(manifest)
        ax.set_title("continuation partitions" + (f"\n{params}" if params else ""))
        _atomic_save(fig, out_path)
    return {"points": len(rows), "fit_drawn": False}


_RENDERERS = {
    "tail": render_tail,
    "bilinear": render_bilinear,
    "existence": render_existence,
    "continuation": render_continuation,
}


def render(spec: FigureSpec) -> dict:
    """Render one figure; refuses empty data and unsupported schemas."""
    rows = read_study_csv(spec.csv_path)
    if not rows:
        raise EmptyDataError(f"{spec.csv_path}: 0 data rows, nothing to draw")
    manifest = _load_manifest(spec.manifest_path)
    return _RENDERERS[spec.kind](rows, manifest, spec.out_path)


def render_all(manifest_path: str, out_dir: str) -> dict:
    """One figure per study listed in the manifest, plus an index page.

    Failures on individual studies do not stop the rest; they are collected
    in the returned mapping under "failures".
    """
    with open(manifest_path) as handle:
        manifest = json.load(handle)
    base = os.path.dirname(os.path.abspath(manifest_path))
    os.makedirs(out_dir, exist_ok=True)
    rendered: list[dict] = []
    failures: list[dict] = []
    for entry in manifest.get("studies", []):
        kind = entry["kind"]
        csv_path = os.path.join(base, entry["csv"])
        stem = os.path.splitext(os.path.basename(entry["csv"]))[0]
        out_path = os.path.join(out_dir, f"{stem}.png")
        try:
            info = render(FigureSpec(csv_path, manifest_path, kind, out_path))
        except Exception as exc:  # noqa: BLE001 - partial failure is reported
            failures.append({"kind": kind, "csv": entry["csv"], "error": str(exc)})
            continue
        rendered.append({"kind": kind, "figure": os.path.basename(out_path), **info})
    index_path = os.path.join(out_dir, "index.html")
    _write_index(index_path, rendered, failures)
    return {"rendered": rendered, "failures": failures, "index": index_path}


def _write_index(path: str, rendered: list[dict], failures: list[dict]) -> None:
    lines = ["<!DOCTYPE html>", "<html><head><title>plotview index</title></head><body>", "<h1>figures</h1>", "<ul>"]
    for item in rendered:
        lines.append(f'<li><a href="{item["figure"]}">{item["kind"]}: {item["figure"]}</a></li>')
    lines.append("</ul>")
    if failures:
        lines.append("<h2>failures</h2><ul>")
        for item in failures:
            lines.append(f"<li>{item['kind']} ({item['csv']}): {item['error']}</li>")
        lines.append("</ul>")
    lines.append("</body></html>")
    directory = os.path.dirname(os.path.abspath(path)) or "."
    handle, tmp_path = tempfile.mkstemp(suffix=".html", dir=directory)
    with os.fdopen(handle, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp_path, path)
