"""Command-line front end: ``rctpolicy {ate,policy,importance,simulate}``.

Settings come from built-in defaults, then an optional YAML ``--config``
file, then flags; later sources win. Every command writes its outputs and a
``manifest.json`` under ``--output-dir``. Nothing time-dependent is written,
so identical inputs give byte-identical files.

Exit codes: 0 success, 1 computational failure, 2 input or validation failure.
"""

from __future__ import annotations

import argparse
import itertools
import platform
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .cohort import PEC_COLUMN, load_cohort, outcome_deltas, standardize
from .errors import ComputationError, RctPolicyError, UnsupportedOperation, ValidationError
from .evaluation import (
    STANDARDIZE_MODES,
    TrialData,
    ate,
    constant_policy,
    cross_validated_policy,
    cross_validated_threshold_policy,
    make_fold_plan,
    policy_value,
    random_policy_distribution,
    threshold_policy,
    threshold_policy_sweep,
)
from .learners import TREE_KINDS, LearnerSpec
from .meta import REMISSION_TARGET, MetaSpec, export_policy, fit_meta
from . import report as rep
from .synthetic import ScenarioSpec, generate, save_oracle

COMMANDS = ("ate", "policy", "importance", "simulate")
DEFAULT_GRID = ({"meta": ["s-learner", "t-learner"], "kind": "boosted-trees"},)


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    oracle: str | None = None
    output_dir: str = "."
    seed: int = 0
    outcome_column: list = field(default_factory=list)
    folds: int = 6
    bootstrap: int = 10_000
    permutations: int = 10_000
    random_draws: int = 1000
    standardize: str = "global"
    grid: Any = None
    jobs: int = 1
    top_k: int = 5
    threshold_feature: list = field(default_factory=list)
    learner: dict = field(default_factory=lambda: {"kind": "boosted-trees"})
    scenario: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        for name in ("folds", "random_draws", "top_k", "jobs"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name.replace('_', '-')} must be positive")
        for name in ("bootstrap", "permutations"):
            if int(getattr(self, name)) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.standardize not in STANDARDIZE_MODES:
            raise ValidationError(f"standardize must be one of {STANDARDIZE_MODES}")
        if isinstance(self.outcome_column, str):
            self.outcome_column = [self.outcome_column]
        if isinstance(self.threshold_feature, str):
            self.threshold_feature = [self.threshold_feature]
        if self.command != "simulate" and not self.input:
            raise ValidationError(f"{self.command} needs --input")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _load_yaml(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ValidationError(f"cannot parse {p}: {e}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError(f"{p}: top level must be a mapping")
    return data


def build_config(args: argparse.Namespace) -> RunConfig:
    settings = _load_yaml(args.config) if args.config else {}
    settings = {k.replace("-", "_"): v for k, v in settings.items()}
    known = {f.name for f in fields(RunConfig)} - {"command"}
    unknown = set(settings) - known
    if unknown:
        raise ValidationError(f"unknown config keys {sorted(unknown)}")
    for name in known:
        v = getattr(args, name, None)
        if v is not None:
            settings[name] = v
    scenario = dict(settings.get("scenario") or {})
    for name in ("n_patients", "n_features", "effect", "tau", "noise_sd", "missing_rate"):
        v = getattr(args, name, None)
        if v is not None:
            scenario[name] = v
    settings["scenario"] = scenario
    return RunConfig(command=args.command, **settings)


def _versions() -> dict:
    import scipy
    import sklearn

    return {"rctpolicy": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "pyyaml": yaml.__version__,
            "python": platform.python_version()}


def _write_manifest(cfg: RunConfig, out: Path, outputs: list[str], seeds: dict) -> None:
    rep.write_json({"command": cfg.command, "config": cfg.to_dict(), "versions": _versions(),
                    "seeds": seeds, "outputs": sorted(outputs)}, out / "manifest.json")


def _output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(cfg: RunConfig):
    return load_cohort(cfg.input)


# --- ate ---------------------------------------------------------------------------

def cmd_ate(cfg: RunConfig) -> dict:
    cohort = _load(cfg)
    cohort.require_both_arms()
    deltas = outcome_deltas(cohort)
    columns = cfg.outcome_column or list(deltas.columns)
    for c in columns:
        if c not in deltas.columns:
            raise ValidationError(f"unknown outcome column {c!r}; available: {list(deltas.columns)}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        z = standardize(deltas)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    results = []
    for c in columns:
        for units, col in (("raw", deltas.column(c)), ("standardized", z.column(c) if c in z.columns else None)):
            if col is None:
                continue
            results.append(ate(col, cohort.arms, c, cfg.bootstrap, cfg.permutations, cfg.seed, units))
    report = rep.ate_report(results, len(cohort), [d for d in z.dropped if d in columns])
    out = _output_dir(cfg)
    rep.write_json(report, out / "ate.json")
    (out / "ate.md").write_text(rep.render_ate(report), encoding="utf-8")
    _write_manifest(cfg, out, ["ate.json", "ate.md"], {"ate": cfg.seed})
    return report


# --- policy ------------------------------------------------------------------------

def expand_grid(grid, target: str, seed: int) -> list[MetaSpec]:
    """Cells look like ``{meta: [...], kind: ..., hyperparameters: {...}, search: {name: [values]}}``.

    ``search`` entries are expanded as a Cartesian product; everything else is fixed.
    """
    if isinstance(grid, (str, Path)):
        loaded = _load_yaml(grid)
        grid = loaded.get("grid", loaded.get("cells"))
    if grid is None:
        grid = DEFAULT_GRID
    if isinstance(grid, dict):
        grid = [grid]
    specs = []
    for cell in grid:
        if not isinstance(cell, dict) or "kind" not in cell:
            raise ValidationError(f"grid cell needs a learner 'kind': {cell!r}")
        metas = cell.get("meta", ["s-learner", "t-learner"])
        metas = [metas] if isinstance(metas, str) else list(metas)
        fixed = dict(cell.get("hyperparameters") or {})
        search = dict(cell.get("search") or {})
        names = sorted(search)
        for values in itertools.product(*(search[n] for n in names)):
            hp = {**fixed, **dict(zip(names, values))}
            for m in metas:
                specs.append(MetaSpec(m, LearnerSpec(cell["kind"], hp, seed), target))
    if not specs:
        raise ValidationError("hyperparameter grid is empty")
    return specs


def _threshold_values(cohort, data: TrialData, feature: str) -> np.ndarray:
    if feature == "pec_start":
        return data.pec_start
    return np.asarray(cohort.x_start[:, cohort.schema.index(feature)])


def cmd_policy(cfg: RunConfig) -> dict:
    cohort = _load(cfg)
    cohort.require_both_arms()
    target = cfg.outcome_column[0] if cfg.outcome_column else PEC_COLUMN
    if target != REMISSION_TARGET and target != PEC_COLUMN and target not in cohort.schema.names:
        raise ValidationError(f"unknown outcome column {target!r}")
    data = TrialData.from_cohort(cohort, target)
    n = len(data)
    specs = expand_grid(cfg.grid, target, cfg.seed)
    plan = make_fold_plan(data.ids, data.arms, cfg.folds, cfg.seed)
    band = random_policy_distribution(data, cfg.random_draws, cfg.seed)
    out = _output_dir(cfg)
    (out / "assignments").mkdir(exist_ok=True)
    outputs = []

    def value(pol):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            v = band.annotate(policy_value(pol, data))
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        return v

    def save(pol, name):
        export_policy(pol, out / "assignments" / f"{name}.csv")
        outputs.append(f"assignments/{name}.csv")

    rows = []
    for arm in (0, 1):
        pol = constant_policy(arm, n, data.ids)
        rows.append(rep.policy_row("constant", rep.ARM_NAMES[arm], value(pol), band, arm=arm))
    rows.append(rep.random_row(band))

    sweeps = {}
    for feature in ["pec_start", *cfg.threshold_feature]:
        values = _threshold_values(cohort, data, feature)
        sweep = threshold_policy_sweep(data, values, feature)
        sweeps[feature] = sweep
        p = sweep.best.provenance
        rows.append(rep.policy_row("threshold", f"{feature} threshold (in-sample)", value(sweep.best), band,
                                   in_sample=True, threshold=p["threshold"], high_arm=p["high_arm"],
                                   optimistic=True))
        oof = cross_validated_threshold_policy(data, plan, values, feature)
        save(oof, f"threshold_{feature}_oof")
        rows.append(rep.policy_row("threshold", f"{feature} threshold (out-of-fold)", value(oof), band,
                                   in_sample=False, per_fold=oof.provenance["per_fold"]))

    grid_rows, best = [], {}
    for spec in specs:
        pol = cross_validated_policy(spec, data, plan, cfg.standardize, cfg.jobs)
        v = value(pol)
        cell = {"meta": spec.kind, "learner": spec.base.kind,
                "hyperparameters": spec.base.to_dict()["hyperparameters"], **v.to_dict()}
        grid_rows.append(cell)
        key = spec.label
        if key not in best or rep_better(v, best[key][1]):
            best[key] = (pol, v, len(grid_rows) - 1)
    family_counts = {k: sum(1 for s in specs if s.label == k) for k in best}
    for key, (pol, v, idx) in best.items():
        grid_rows[idx]["selected"] = True
        meta, learner = key.split("/")
        save(pol, f"{meta}_{learner}")
        rows.append(rep.policy_row(meta, f"{'S' if meta == 's-learner' else 'T'}-learner ({learner})", v,
                                   band, learner=learner, hyperparameters=grid_rows[idx]["hyperparameters"],
                                   optimistic=family_counts[key] > 1, grid_size=family_counts[key]))
    for cell in grid_rows:
        cell.setdefault("selected", False)

    meta = {"n_patients": n, "target": target, "folds": cfg.folds, "standardize": cfg.standardize,
            "fold_sizes": plan.sizes().tolist()}
    report = rep.policy_report(rows, band, meta, grid_rows)
    rep.write_json(report, out / "policy.json")
    (out / "policy.md").write_text(rep.render_policy(report), encoding="utf-8")
    rep.write_random_draws(band, out / "random_draws.csv")
    rep.write_histograms(band, out / "random_histogram.csv")
    rep.write_threshold_curve(sweeps, out / "threshold_curve.csv")
    outputs += ["policy.json", "policy.md", "random_draws.csv", "random_histogram.csv",
                "threshold_curve.csv"]
    _write_manifest(cfg, out, outputs, {"folds": cfg.seed, "random_draws": cfg.seed, "learners": cfg.seed})
    return report


def rep_better(a, b) -> bool:
    """Grid selection: higher effectiveness, then lower mean outcome; earlier cells win ties."""
    ea = -np.inf if np.isnan(a.effectiveness) else a.effectiveness
    eb = -np.inf if np.isnan(b.effectiveness) else b.effectiveness
    if ea != eb:
        return ea > eb
    ma = np.inf if np.isnan(a.mean_outcome) else a.mean_outcome
    mb = np.inf if np.isnan(b.mean_outcome) else b.mean_outcome
    return ma < mb


# --- importance ----------------------------------------------------------------------

def cmd_importance(cfg: RunConfig) -> dict:
    cohort = _load(cfg)
    cohort.require_both_arms()
    base = LearnerSpec.from_dict({"seed": cfg.seed, **cfg.learner})
    if base.kind not in TREE_KINDS:
        raise UnsupportedOperation(f"gain importance needs a tree learner, got {base.kind!r}")
    names = cohort.schema.names
    panels = []
    for target in cfg.outcome_column or [PEC_COLUMN]:
        data = TrialData.from_cohort(cohort, target)
        y = data.target
        if target != REMISSION_TARGET:
            with np.errstate(all="ignore"):
                y = standardize(y, columns=(target,)).values[:, 0]
        model = fit_meta(MetaSpec("t-learner", base, target), data.features, data.arms, y)
        for arm, m in enumerate(model.models):
            gains = m.importance()
            order = sorted((i for i in range(len(names)) if gains[i] > 0), key=lambda i: (-gains[i], i))
            if not order:
                warnings.warn(f"target {target}, arm {arm}: model made no splits; importance table is empty",
                              stacklevel=2)
            panels.append({"target": target, "arm": arm,
                           "features": [{"feature": names[i], "gain": float(gains[i])}
                                        for i in order[:cfg.top_k]]})
    report = {"table": "importance", "learner": base.to_dict(), "top_k": cfg.top_k, "panels": panels}
    out = _output_dir(cfg)
    rep.write_json(report, out / "importance.json")
    (out / "importance.md").write_text(rep.render_importance(report), encoding="utf-8")
    _write_manifest(cfg, out, ["importance.json", "importance.md"], {"learners": cfg.seed})
    return report


# --- simulate ------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> dict:
    spec = ScenarioSpec.from_dict({**cfg.scenario, "seed": cfg.seed})
    oracle = generate(spec)
    out = _output_dir(cfg)
    cohort_path = Path(cfg.input) if cfg.input else out / "cohort.csv"
    oracle_path = Path(cfg.oracle) if cfg.oracle else out / "oracle.json"
    save_oracle(oracle, cohort_path, oracle_path)
    _write_manifest(cfg, out, [str(cohort_path), str(oracle_path)], {"scenario": cfg.seed})
    return {"cohort": str(cohort_path), "oracle": str(oracle_path)}


HANDLERS = {"ate": cmd_ate, "policy": cmd_policy, "importance": cmd_importance, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with settings; flags override it")
    common.add_argument("--input", help="cohort CSV (for simulate: where to write it)")
    common.add_argument("--oracle", help="oracle sidecar path")
    common.add_argument("--output-dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--outcome-column", action="append",
                        help="outcome column; repeat for several (policy uses the first)")
    common.add_argument("--folds", type=int, help="cross-validation folds (default 6)")
    common.add_argument("--bootstrap", type=int, help="bootstrap resamples (default 10000)")
    common.add_argument("--permutations", type=int, help="permutations (default 10000)")
    common.add_argument("--random-draws", type=int, help="random-policy draws (default 1000)")
    common.add_argument("--standardize", choices=STANDARDIZE_MODES)
    common.add_argument("--grid", help="YAML file with the meta-learner hyperparameter grid")
    common.add_argument("--jobs", type=int, help="parallel cross-validation folds")
    common.add_argument("--top-k", type=int, help="features per importance table (default 5)")
    common.add_argument("--threshold-feature", action="append",
                        help="extra baseline feature for the threshold policy")

    parser = argparse.ArgumentParser(prog="rctpolicy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ate", parents=[common], help="average treatment effect table")
    sub.add_parser("policy", parents=[common], help="policy value comparison")
    sub.add_parser("importance", parents=[common], help="per-arm gain importance")
    sim = sub.add_parser("simulate", parents=[common], help="write a synthetic cohort and its oracle")
    sim.add_argument("--n-patients", type=int)
    sim.add_argument("--n-features", type=int)
    sim.add_argument("--effect", choices=("constant", "threshold", "linear"))
    sim.add_argument("--tau", type=float)
    sim.add_argument("--noise-sd", type=float)
    sim.add_argument("--missing-rate", type=float)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        HANDLERS[cfg.command](cfg)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except UnsupportedOperation as e:
        print(f"unsupported: {e}", file=sys.stderr)
        return 2
    except (ComputationError, RctPolicyError) as e:
        print(f"failed: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
