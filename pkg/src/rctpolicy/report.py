"""Structured reports and their rendered tables.

Reports are plain dicts written as sorted, indented JSON. Markdown tables
and delimiter-separated plot data are derived from them, never computed
separately.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import AteResult, PolicyValueResult, RandomPolicyDistribution, ThresholdSweep

ARM_NAMES = ("1FED", "6FED")


def _clean(obj):
    """JSON-safe copy: NaN and inf become None, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_rows(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating))
                                              else v) for v in row])
    return path


def _fmt(v, digits=3) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "n/a"
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def markdown_table(header: Sequence[str], rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(_fmt(v) for v in row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


# --- ATE --------------------------------------------------------------------

def ate_report(results: Sequence[AteResult], n_patients: int, dropped=()) -> dict:
    return {"table": "ate", "n_patients": n_patients, "dropped_columns": list(dropped),
            "rows": [r.to_dict() for r in results]}


def render_ate(report: dict) -> str:
    rows = [(r["feature"], r["units"], r["ate"], f"[{_fmt(r['ci_95'][0])}, {_fmt(r['ci_95'][1])}]",
             r["p_value"], r["n_arm0"], r["n_arm1"]) for r in report["rows"]]
    return markdown_table(("Outcome", "Units", "ATE", "CI-95%", "p-value", "n arm 0", "n arm 1"), rows)


# --- policy values ------------------------------------------------------------

def policy_row(family: str, label: str, value: PolicyValueResult, band: RandomPolicyDistribution,
               **extra) -> dict:
    row = {"family": family, "label": label, **value.to_dict(),
           "in_band": band.in_band(value.effectiveness) if math.isfinite(value.effectiveness) else None}
    row.update(extra)
    return row


def random_row(band: RandomPolicyDistribution) -> dict:
    s = band.summary()
    return {"family": "random", "label": "Random", "policy": "random",
            "n_draws": band.n_draws,
            "mean_outcome": s["mean_outcome"]["mean"], "outcome_decrease": -s["mean_outcome"]["mean"],
            "outcome_ci_95": [s["mean_outcome"]["q2.5"], s["mean_outcome"]["q97.5"]],
            "effectiveness": s["effectiveness"]["mean"],
            "effectiveness_ci_95": [s["effectiveness"]["q2.5"], s["effectiveness"]["q97.5"]],
            "matched_count": float(np.mean(band.matched_count))}


def policy_report(rows: list, band: RandomPolicyDistribution, meta: dict, grid=()) -> dict:
    return {"table": "policy", **meta, "random_band": band.summary(), "rows": rows, "grid": list(grid)}


def render_policy(report: dict) -> str:
    out = []
    for r in report["rows"]:
        label = r["label"] + (" *" if r.get("optimistic") else "")
        if r["family"] == "random":
            lo, hi = r["outcome_ci_95"]
            elo, ehi = r["effectiveness_ci_95"]
            out.append((label, f"{_fmt(r['outcome_decrease'])} [{_fmt(-hi)}, {_fmt(-lo)}]",
                        f"{_fmt(r['effectiveness'])} [{_fmt(elo)}, {_fmt(ehi)}]", "", ""))
        else:
            out.append((label, _fmt(r["outcome_decrease"]), _fmt(r["effectiveness"]),
                        _fmt(r["empirical_p"], 4), r["matched_count"]))
    text = markdown_table(("Policy", "PEC decrease", "Effectiveness", "empirical p", "matched"), out)
    if any(r.get("optimistic") for r in report["rows"]):
        text += ("\n\\* chosen on the same patients it is scored on (in-sample sweep or grid "
                 "selection); optimistically biased\n")
    return text


def write_random_draws(band: RandomPolicyDistribution, path) -> Path:
    rows = zip(range(band.n_draws), band.seeds.tolist(), band.matched_count.tolist(),
               band.mean_outcome.tolist(), band.effectiveness.tolist())
    return write_rows(path, ("draw", "seed", "matched_count", "mean_outcome", "effectiveness"), rows)


def write_histograms(band: RandomPolicyDistribution, path, bins: int = 20) -> Path:
    rows = []
    for metric in ("effectiveness", "mean_outcome"):
        v = getattr(band, metric)
        v = v[~np.isnan(v)]
        counts, edges = np.histogram(v, bins=bins)
        rows += [(metric, float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]
    return write_rows(path, ("metric", "bin_low", "bin_high", "count"), rows)


def write_threshold_curve(sweeps: dict[str, ThresholdSweep], path) -> Path:
    rows = [(feat, row["threshold"], row["high_arm"], row["matched_count"], row["mean_outcome"],
             row["effectiveness"])
            for feat, sweep in sweeps.items() for row in sweep.curve]
    return write_rows(path, ("feature", "threshold", "high_arm", "matched_count", "mean_outcome",
                             "effectiveness"), rows)


# --- importance ---------------------------------------------------------------

def render_importance(report: dict) -> str:
    parts = []
    for panel in report["panels"]:
        parts.append(f"### target {panel['target']}, arm {panel['arm']} ({ARM_NAMES[panel['arm']]})\n")
        if not panel["features"]:
            parts.append("_no splits; model is constant_\n")
            continue
        parts.append(markdown_table(("Rank", "Feature", "Gain share"),
                                    [(i + 1, f["feature"], f["gain"]) for i, f in enumerate(panel["features"])]))
    return "\n".join(parts)
