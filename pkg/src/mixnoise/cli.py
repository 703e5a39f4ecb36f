"""Config-driven pipeline orchestration.

Stages map onto the estimation/training procedure one to one:

    synth -> corrupt -> warmup -> estimate -> train -> eval -> ttest

``experiment`` sweeps the (tau, rho, k, seed) grid end to end and aggregates.
Every stage appends a provenance record to ``manifest.jsonl`` in its output
directory; artifacts themselves carry no timestamps so re-runs are
bit-identical.

Exit codes: 0 success, 2 configuration error, 3 missing upstream artifact,
4 trial failure inside an experiment.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import evalstats, netcore, robusttrain, synthdata, transition
from .errors import ConfigurationError, DependencyError, MixnoiseError
from .netcore import TrainConfig
from .robusttrain import RobustConfig
from .synthdata import MixtureSpec, NoiseSpec, RegionSpec
from .transition import AnchorConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_TRIAL = 4


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_DEFAULTS: dict = {
    "mixture": {
        "c": 3,
        "d": 8,
        "separation": 6.0,
        "sigma": 1.0,
        "open_populations": 2,
        "open_separation": 0.0,  # 0 -> 2 * separation
        "class_priors": [],
        "means": [],
        "open_fraction_reservoir": 0.5,
    },
    "data": {"n": 20000, "test_fraction": 0.25, "val_fraction": 0.1},
    "noise": {
        "tau": 0.4,
        "rho": 0.5,
        "structure": "class_dependent",
        "uniform_label_replacement": False,
        "regions": [],
    },
    "warmup": {
        "learning_rate": 0.01,
        "epochs": 30,
        "batch_size": 128,
        "weight_decay": 0.0005,
        "momentum": 0.9,
        "hidden": [32, 32],
        "activation": "relu",
        "optimizer": "sgd",
        "lr_schedule": [],
    },
    "anchors": {
        "m": 5,
        "percentile": 97.0,
        "restarts": 10,
        "max_iters": 100,
        "fine_space": "representations",
        "coarse_space": "representations",
        "assign_method": "matching",
    },
    "robust": {
        "objective": "reweighted",
        "k": 1,
        "epsilon": 1e-8,
        "revise": False,
        "revise_lr": 5e-7,
        "revise_clf_lr": 5e-7,
        "revise_epochs": 10,
        "weight_mode": "stop_grad",
        "warm_start": False,
        "train": {
            "learning_rate": 0.01,
            "epochs": 60,
            "batch_size": 128,
            "weight_decay": 0.0005,
            "momentum": 0.9,
            "hidden": [32, 32],
            "activation": "relu",
            "optimizer": "sgd",
            "lr_schedule": [],
        },
    },
    "experiment": {
        "taus": [0.2, 0.4, 0.6, 0.8],
        "rhos": [0.25, 0.5, 0.75],
        "k_list": [1, 2, 3],
        "seeds": [1, 2, 3, 4, 5],
        "baseline": "ce",
        "methods": ["reweighted"],
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigurationError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def parse_config_text(text: str, overrides: list[str] | None = None) -> dict:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config parse error: {exc}") from exc
    cfg = _merge(_DEFAULTS, raw)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            parsed = tomllib.loads(f"v = {value}")["v"]
        except tomllib.TOMLDecodeError:
            parsed = value
        node = cfg
        parts = key.strip().split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigurationError(f"unknown config key {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigurationError(f"unknown config key {key!r}")
        node[parts[-1]] = parsed
    return cfg


def load_config(path: str | Path, overrides: list[str] | None = None) -> dict:
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    return parse_config_text(text, overrides)


def config_digest(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def build_mixture_spec(cfg: dict) -> MixtureSpec:
    mix = cfg["mixture"]
    c, d = int(mix["c"]), int(mix["d"])
    if mix["means"]:
        means = np.asarray(mix["means"], dtype=np.float64)
    else:
        open_sep = mix["open_separation"] or 2.0 * mix["separation"]
        means = synthdata.default_means(
            c, d, separation=mix["separation"], sigma=mix["sigma"],
            open_populations=int(mix["open_populations"]), open_separation=open_sep,
        )
    priors = np.asarray(mix["class_priors"], dtype=np.float64) if mix["class_priors"] else None
    return MixtureSpec(
        c=c, d=d, means=means, covariance_scale=mix["sigma"],
        class_priors=priors, open_fraction_reservoir=mix["open_fraction_reservoir"],
    )


def build_noise_spec(cfg: dict, seed: int, tau: float | None = None, rho: float | None = None) -> NoiseSpec:
    noi = cfg["noise"]
    regions = None
    if noi["structure"] == "region_dependent":
        regions = tuple(
            RegionSpec(
                centroid=np.asarray(r["centroid"], dtype=np.float64),
                flip=np.asarray(r["flip"], dtype=np.float64),
                rho=float(r.get("rho", 0.0)),
            )
            for r in noi["regions"]
        )
    return NoiseSpec(
        tau=float(noi["tau"] if tau is None else tau),
        rho=float(noi["rho"] if rho is None else rho),
        structure=noi["structure"],
        regions=regions,
        seed=seed,
        uniform_label_replacement=bool(noi["uniform_label_replacement"]),
    )


def build_train_config(section: dict, seed: int) -> TrainConfig:
    schedule = tuple((int(e), float(v)) for e, v in section["lr_schedule"]) or None
    return TrainConfig(
        learning_rate=float(section["learning_rate"]),
        lr_schedule=schedule,
        epochs=int(section["epochs"]),
        batch_size=int(section["batch_size"]),
        weight_decay=float(section["weight_decay"]),
        momentum=float(section["momentum"]),
        seed=seed,
        hidden=tuple(int(h) for h in section["hidden"]),
        activation=section["activation"],
        optimizer=section["optimizer"],
    )


def build_anchor_config(cfg: dict, seed: int) -> AnchorConfig:
    a = cfg["anchors"]
    return AnchorConfig(
        m=int(a["m"]),
        percentile=float(a["percentile"]),
        seed=seed,
        restarts=int(a["restarts"]),
        max_iters=int(a["max_iters"]),
        fine_space=a["fine_space"],
        coarse_space=a["coarse_space"],
        assign_method=a["assign_method"],
    )


# ---------------------------------------------------------------------------
# provenance
# ---------------------------------------------------------------------------


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except Exception:
        return "unknown"


def append_manifest(outdir: Path, stage: str, cfg: dict, seed: int, wall: float, written: list[str]) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    record = {
        "stage": stage,
        "config_digest": config_digest(cfg),
        "seed": seed,
        "git": _git_describe(),
        "wall_time_s": round(wall, 6),
        "written": written,
        "time": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    with open(outdir / "manifest.jsonl", "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def _require(path: Path) -> Path:
    if not path.exists():
        raise DependencyError(f"missing upstream artifact: {path}")
    return path


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def stage_synth(cfg: dict, outdir: Path, seed: int) -> list[str]:
    spec = build_mixture_spec(cfg)
    data_cfg = cfg["data"]
    n = int(data_cfg["n"])
    data = synthdata.generate_mixture(
        spec, n, seed,
        test_fraction=float(data_cfg["test_fraction"]),
        val_fraction=float(data_cfg["val_fraction"]),
    )
    reservoir = synthdata.generate_reservoir(
        spec, int(np.ceil(spec.open_fraction_reservoir * n)), seed + 1
    )
    outdir.mkdir(parents=True, exist_ok=True)
    synthdata.save_dataset(data, outdir / "dataset", spec_echo={"kind": "mixture", "c": spec.c, "d": spec.d, "n": n, "seed": seed})
    synthdata.save_reservoir(reservoir, outdir / "reservoir.csv")
    return ["dataset/features.csv", "dataset/labels.csv", "dataset/meta.json", "reservoir.csv"]


def stage_corrupt(cfg: dict, outdir: Path, seed: int, tau: float | None = None, rho: float | None = None) -> list[str]:
    data = synthdata.load_dataset(_require(outdir / "dataset"))
    _require(outdir / "dataset" / "meta.json")
    spec = build_noise_spec(cfg, seed, tau, rho)
    written = ["noisy/features.csv", "noisy/labels.csv", "noisy/meta.json", "true_transition.json"]
    if spec.structure == "class_dependent":
        reservoir = synthdata.load_reservoir(_require(outdir / "reservoir.csv"))
        noisy = synthdata.inject_mixed_noise(data, spec, reservoir)
        truth = synthdata.true_extended_matrix(spec, data.c)
        truths = [truth]
    else:
        reservoir = None
        if any(r.rho > 0 for r in spec.regions):
            reservoir = synthdata.load_reservoir(_require(outdir / "reservoir.csv"))
        noisy = synthdata.inject_region_noise(data, spec, reservoir)
        truths = synthdata.true_region_matrices(spec, data.c)
    synthdata.save_dataset(noisy, outdir / "noisy", spec_echo={"kind": "noisy", "tau": spec.tau, "rho": spec.rho, "structure": spec.structure, "seed": seed})
    payload = {
        "structure": spec.structure,
        "matrices": [{"entries": t.entries.tolist(), "cluster_id": t.cluster_id} for t in truths],
    }
    with open(outdir / "true_transition.json", "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")
    return written


def stage_warmup(cfg: dict, outdir: Path, seed: int) -> list[str]:
    data = synthdata.load_dataset(_require(outdir / "noisy"))
    _require(outdir / "noisy" / "meta.json")
    tcfg = build_train_config(cfg["warmup"], seed)
    params = netcore.train_warmup(data, tcfg)
    netcore.save_params(params, outdir / "model.json")
    return ["model.json"]


def stage_estimate(cfg: dict, outdir: Path, seed: int, k: int | None = None) -> list[str]:
    warmup = netcore.load_params(_require(outdir / "model.json"))
    data = synthdata.load_dataset(_require(outdir / "noisy"))
    acfg = build_anchor_config(cfg, seed)
    k = int(cfg["robust"]["k"]) if k is None else int(k)
    fine, _ = transition.fine_clustering(warmup, data, acfg)
    bundle = transition.estimate_cluster_dependent(warmup, data, k, acfg, fine=fine)
    from .clusterkit import save_clusters

    save_clusters(fine, outdir / "clusters.json")
    transition.save_bundle(bundle, outdir / "transition.json")
    return ["clusters.json", "transition.json"]


def stage_train(cfg: dict, outdir: Path, seed: int, objective: str | None = None) -> list[str]:
    data = synthdata.load_dataset(_require(outdir / "noisy"))
    rob = cfg["robust"]
    objective = objective or rob["objective"]
    bundle = None
    warmup = None
    if objective != "ce":
        bundle = transition.load_bundle(_require(outdir / "transition.json"))
        warmup = netcore.load_params(_require(outdir / "model.json"))
    rcfg = RobustConfig(
        objective=objective,
        bundle=bundle,
        train=build_train_config(rob["train"], seed),
        epsilon=float(rob["epsilon"]),
        revise=bool(rob["revise"]),
        revise_lr=float(rob["revise_lr"]),
        revise_clf_lr=float(rob["revise_clf_lr"]),
        revise_epochs=int(rob["revise_epochs"]),
        weight_mode=rob["weight_mode"],
        warm_start=bool(rob["warm_start"]),
    )
    params, history = robusttrain.train_robust(data, rcfg, warmup=warmup)
    netcore.save_params(params, outdir / "robust_model.json")
    robusttrain.save_history(history, outdir / "history.csv")
    written = ["robust_model.json", "history.csv"]
    if history.revised_bundle is not None:
        transition.save_bundle(history.revised_bundle, outdir / "transition.json")
        written.append("transition.json")
    return written


def stage_eval(cfg: dict, outdir: Path, seed: int) -> list[str]:
    data = synthdata.load_dataset(_require(outdir / "noisy"))
    params = netcore.load_params(_require(outdir / "robust_model.json"))
    test_idx = data.indices("test")
    pred = robusttrain.predict_batch(params, data.features[test_idx])
    truth = data.clean_labels[test_idx]
    robusttrain.save_predictions(pred, truth, test_idx, outdir / "predictions.csv")
    acc = evalstats.accuracy(pred, truth)
    report = {"seed": seed, "config_digest": config_digest(cfg), "test_accuracy": acc}
    truth_path = outdir / "true_transition.json"
    trans_path = outdir / "transition.json"
    if truth_path.exists() and trans_path.exists():
        with open(truth_path) as fh:
            payload = json.load(fh)
        if payload["structure"] == "class_dependent":
            true_entries = np.array(payload["matrices"][0]["entries"])
            bundle = transition.load_bundle(trans_path)
            errs = [float(np.abs(m.entries - true_entries).sum()) for m in bundle.matrices]
            sizes = np.bincount(bundle.cluster_model.assignment, minlength=bundle.k).astype(float)
            weights = sizes / sizes.sum()
            report["l1_error_global"] = float(np.dot(weights, errs))
            report["l1_errors_per_cluster"] = errs
            c = bundle.matrices[0].c
            report["l1_error_top_block"] = float(
                np.dot(weights, [np.abs(m.entries[:c] - true_entries[:c]).sum() for m in bundle.matrices])
            )
            report["l1_error_meta_row"] = float(
                np.dot(weights, [np.abs(m.entries[c] - true_entries[c]).sum() for m in bundle.matrices])
            )
    with open(outdir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ["predictions.csv", "report.json"]


def stage_ttest(a: list[float], b: list[float], outdir: Path, label_a: str = "method", label_b: str = "baseline") -> list[str]:
    result = evalstats.ttest_independent(a, b)
    rows = [{
        "baseline": label_b, "method": label_a,
        "tau": "", "rho": "", "k": "",
        "t": f"{result.t:.6f}", "df": f"{result.df:g}", "p": evalstats.format_pvalue(result.p),
    }]
    evalstats.write_ttest_csv(rows, outdir / "ttest.csv")
    return ["ttest.csv"]


# ---------------------------------------------------------------------------
# experiment sweep
# ---------------------------------------------------------------------------


def _trial_dir(root: Path, tau: float, rho: float, seed: int) -> Path:
    return root / "trials" / f"tau{tau:g}_rho{rho:g}" / f"seed{seed}"


def run_trial(cfg: dict, root: Path, tau: float, rho: float, seed: int, k_list: list[int], methods: list[str], baseline: str):
    """One (tau, rho, seed) trial: shared synth/corrupt/warmup/baseline, then
    estimate/train/eval per k.  Returns a nested result dict."""
    t0 = time.time()
    tdir = _trial_dir(root, tau, rho, seed)
    tdir.mkdir(parents=True, exist_ok=True)
    stage_synth(cfg, tdir, seed)
    stage_corrupt(cfg, tdir, seed, tau, rho)
    stage_warmup(cfg, tdir, seed)

    results: dict = {"tau": tau, "rho": rho, "seed": seed, "methods": {}}
    data = synthdata.load_dataset(tdir / "noisy")
    test_idx = data.indices("test")
    truth = data.clean_labels[test_idx]

    # k-independent baseline (plain CE on the noisy labels, c+1 outputs),
    # under the same initialization policy as the methods
    warm_start = bool(cfg["robust"]["warm_start"])
    warmup_params = netcore.load_params(tdir / "model.json") if warm_start else None
    base_cfg = RobustConfig(
        objective=baseline, bundle=None,
        train=build_train_config(cfg["robust"]["train"], seed),
        epsilon=float(cfg["robust"]["epsilon"]), warm_start=warm_start,
    )
    base_params, _ = robusttrain.train_robust(data, base_cfg, warmup=warmup_params)
    base_acc = evalstats.accuracy(robusttrain.predict_batch(base_params, data.features[test_idx]), truth)
    results["baseline_accuracy"] = base_acc

    for k in k_list:
        kdir = tdir / f"k{k}"
        kdir.mkdir(parents=True, exist_ok=True)
        for name in ("dataset", "noisy"):
            if not (kdir / name).exists():
                (kdir / name).symlink_to(tdir / name)
        for name in ("reservoir.csv", "model.json", "true_transition.json"):
            if not (kdir / name).exists():
                (kdir / name).symlink_to(tdir / name)
        stage_estimate(cfg, kdir, seed, k=k)
        per_k: dict = {"k": k}
        with open(kdir / "transition.json") as fh:
            per_k["transition"] = json.load(fh)
        for method in methods:
            stage_train(cfg, kdir, seed, objective=method)
            stage_eval(cfg, kdir, seed)
            with open(kdir / "report.json") as fh:
                per_k[method] = json.load(fh)
        results["methods"][k] = per_k
    results["runtime_seconds"] = time.time() - t0
    return results


def cmd_experiment(cfg: dict, outdir: Path) -> int:
    exp = cfg["experiment"]
    taus = [float(t) for t in exp["taus"]]
    rhos = [float(r) for r in exp["rhos"]]
    k_list = [int(k) for k in exp["k_list"]]
    seeds = [int(s) for s in exp["seeds"]]
    methods = list(exp["methods"])
    baseline = exp["baseline"]
    if not seeds:
        raise ConfigurationError("experiment needs a nonempty seed list")
    if not taus or not rhos or not k_list or not methods:
        raise ConfigurationError("experiment grids must be nonempty")

    cells = [(tau, rho, seed) for tau in taus for rho in rhos for seed in seeds]
    workers = max(1, int(os.environ.get("MIXNOISE_THREADS", "1")))
    failures: list[str] = []
    outcomes: dict = {}

    def run(cell):
        tau, rho, seed = cell
        return cell, run_trial(cfg, outdir, tau, rho, seed, k_list, methods, baseline)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for cell, res in pool.map(lambda c: _safe_run(run, c), cells):
                outcomes[cell] = res
    else:
        for cell in cells:
            cell, res = _safe_run(run, cell)
            outcomes[cell] = res

    summary_rows, error_rows, ttest_rows, reports = [], [], [], []
    for tau in taus:
        for rho in rhos:
            per_seed = [outcomes[(tau, rho, seed)] for seed in seeds]
            failed = [r for r in per_seed if isinstance(r, str)]
            ok = [r for r in per_seed if not isinstance(r, str)]
            failures.extend(failed)
            base_accs = [r["baseline_accuracy"] for r in ok]
            if base_accs:
                m, s = evalstats.mean_std(base_accs)
                summary_rows.append({
                    "tau": tau, "rho": rho, "k": "", "method": baseline,
                    "n_seeds": len(base_accs), "mean_accuracy": f"{m:.17g}",
                    "std_accuracy": f"{s:.17g}",
                    "formatted": evalstats.format_mean_std_pct(m, s),
                    "status": "ok" if not failed else "incomplete",
                })
            for k in k_list:
                for method in methods:
                    accs = [r["methods"][k][method]["test_accuracy"] for r in ok]
                    if not accs:
                        summary_rows.append({"tau": tau, "rho": rho, "k": k, "method": method, "n_seeds": 0, "status": "incomplete"})
                        continue
                    m, s = evalstats.mean_std(accs)
                    summary_rows.append({
                        "tau": tau, "rho": rho, "k": k, "method": method,
                        "n_seeds": len(accs), "mean_accuracy": f"{m:.17g}",
                        "std_accuracy": f"{s:.17g}",
                        "formatted": evalstats.format_mean_std_pct(m, s),
                        "status": "ok" if not failed else "incomplete",
                    })
                    if len(accs) >= 2 and len(base_accs) >= 2:
                        tt = evalstats.ttest_independent(base_accs, accs)
                        ttest_rows.append({
                            "baseline": baseline, "method": f"{method}_k{k}",
                            "tau": tau, "rho": rho, "k": k,
                            "t": f"{tt.t:.6f}", "df": f"{tt.df:g}",
                            "p": evalstats.format_pvalue(tt.p),
                        })
                for r in ok:
                    rep = r["methods"][k].get(methods[0], {})
                    if "l1_error_global" in rep:
                        error_rows.append({
                            "tau": tau, "rho": rho, "k": k, "seed": r["seed"],
                            "err_T": rep["l1_error_top_block"],
                            "err_Tmeta": rep["l1_error_meta_row"],
                            "err_Tstar": rep["l1_error_global"],
                        })
                    reports.append(evalstats.TrialReport(
                        seed=r["seed"], config_digest=config_digest(cfg),
                        test_accuracy=rep.get("test_accuracy", float("nan")),
                        l1_error_global=rep.get("l1_error_global", float("nan")),
                        l1_errors_per_cluster=tuple(rep.get("l1_errors_per_cluster", ())),
                        runtime_seconds=r["runtime_seconds"],
                    ))

    evalstats.write_summary_csv(summary_rows, outdir / "summary.csv")
    evalstats.write_ttest_csv(ttest_rows, outdir / "ttest.csv")
    with open(outdir / "estimation_error.csv", "w") as fh:
        fh.write("tau,rho,k,seed,err_T,err_Tmeta,err_Tstar\n")
        for row in error_rows:
            fh.write(
                f"{row['tau']:g},{row['rho']:g},{row['k']},{row['seed']},"
                f"{row['err_T']:.17g},{row['err_Tmeta']:.17g},{row['err_Tstar']:.17g}\n"
            )
    if reports:
        evalstats.save_summary_json(evalstats.aggregate(reports), outdir / "summary.json")
    for msg in failures:
        print(f"trial failure: {msg}", file=sys.stderr)
    return EXIT_TRIAL if failures else EXIT_OK


def _safe_run(fn, cell):
    try:
        return fn(cell)
    except Exception as exc:  # record the failure, keep the sweep going
        return cell, f"{cell}: {type(exc).__name__}: {exc}"


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_STAGES = ("synth", "corrupt", "warmup", "estimate", "train", "eval", "ttest", "experiment")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixnoise", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _STAGES:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", required=name != "ttest", help="experiment TOML config")
        p.add_argument("-o", "--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the stage seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scalar config key")
        if name == "estimate":
            p.add_argument("--k", type=int, default=None, help="number of coarse clusters")
        if name == "train":
            p.add_argument("--objective", default=None, choices=robusttrain.OBJECTIVES)
        if name == "ttest":
            p.add_argument("--a", default=None, help="comma-separated sample a")
            p.add_argument("--b", default=None, help="comma-separated sample b")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    outdir = Path(args.out)
    try:
        if args.command == "ttest":
            if args.a is None or args.b is None:
                raise ConfigurationError("ttest needs --a and --b sample lists")
            a = [float(x) for x in args.a.split(",")]
            b = [float(x) for x in args.b.split(",")]
            outdir.mkdir(parents=True, exist_ok=True)
            t0 = time.time()
            written = stage_ttest(a, b, outdir)
            append_manifest(outdir, "ttest", {"a": a, "b": b}, 0, time.time() - t0, written)
            return EXIT_OK

        cfg = load_config(args.config, args.set)
        seeds = cfg["experiment"]["seeds"]
        seed = args.seed if args.seed is not None else (int(seeds[0]) if seeds else 0)
        t0 = time.time()
        if args.command == "experiment":
            outdir.mkdir(parents=True, exist_ok=True)
            code = cmd_experiment(cfg, outdir)
            append_manifest(outdir, "experiment", cfg, seed, time.time() - t0, ["summary.csv", "ttest.csv", "estimation_error.csv"])
            return code
        if args.command == "synth":
            written = stage_synth(cfg, outdir, seed)
        elif args.command == "corrupt":
            written = stage_corrupt(cfg, outdir, seed)
        elif args.command == "warmup":
            written = stage_warmup(cfg, outdir, seed)
        elif args.command == "estimate":
            written = stage_estimate(cfg, outdir, seed, k=args.k)
        elif args.command == "train":
            written = stage_train(cfg, outdir, seed, objective=args.objective)
        elif args.command == "eval":
            written = stage_eval(cfg, outdir, seed)
        else:
            raise ConfigurationError(f"unhandled command {args.command!r}")
        append_manifest(outdir, args.command, cfg, seed, time.time() - t0, written)
        return EXIT_OK
    except DependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MixnoiseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRIAL


if __name__ == "__main__":
    raise SystemExit(main())
