"""Command line entry point: ``generate | train | evaluate | analyze | scenario``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 unexpected
divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys

import numpy as np

from .. import __version__
from .._csv import write_csv
from .._rng import substream
from ..estimator import FEATURE_NAMES, ablate_stretch, evaluate, fit_forest, load_forest, read_dataset
from ..lti import FrequencyResponse
from ..plant import ExoModel, HumanModel, exo_compliance
from ..protocol.experiments import build_dataset, default_runs, run_experiment
from ..protocol.scenarios import bandwidth_scenario, instability_scenario, stability_scenario
from ..protocol.subject import VirtualSubject
from ..shaper import SynthesisError, robust_shape, synthesize
from ..stability import human_side_compliance, phase_margin, write_margin_csv
from .config import ConfigError, RunConfig, load_config

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_CONFIG", "EXIT_DATA", "EXIT_DIVERGED"]

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
SCENARIO_USAGE = (
    "stability {adaptive|robust} {low|high}",
    "bandwidth {adaptive|robust} [low|high]",
    "instability [dummy_k]",
)

log = logging.getLogger("exoshape")


class DataError(RuntimeError):
    pass


class UsageError(ValueError):
    pass


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: str, command: str, cfg: RunConfig, args: dict, files: list[str]) -> str:
    """Record what produced ``files`` so the command can be replayed."""
    rel = sorted(os.path.relpath(f, out) for f in files)
    doc = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "streams": ["subject-noise", "split", "bootstrap", "scenario-noise"],
        "args": args,
        "config": cfg.to_dict(),
        "files": {r: _sha256(os.path.join(out, r)) for r in rel},
    }
    path = os.path.join(out, f"manifest_{command}.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _rel(path: str, out: str) -> str:
    # paths in manifests are relative to the output directory
    return os.path.relpath(path, out).replace(os.sep, "/")


def _write_config(out: str, cfg: RunConfig) -> str:
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "config.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.dumps())
    return path


def _walk(d: str) -> list[str]:
    out = []
    for root, _, names in os.walk(d):
        out.extend(os.path.join(root, n) for n in names)
    return out


def forest_seed(seed: int) -> int:
    return int(substream(seed, "bootstrap").integers(0, 2**31 - 1))


def cmd_generate(cfg: RunConfig, out: str, skip_runlogs: bool = False) -> int:
    subject = VirtualSubject(cfg.subject_params())
    exo = ExoModel(m_e=cfg.plant.m_e, m_he=cfg.plant.m_e + cfg.plant.m_h)
    specs = default_runs(cfg.seed, cfg.protocol.grips_lb, cfg.protocol.voluntary_rad, cfg.protocol.tau_noise)
    if len(specs) < 2:
        raise ConfigError("protocol.grips_lb: need enough grip loads for two runs")
    files = [_write_config(out, cfg)]
    logs = []
    for spec in specs:
        rl = run_experiment(spec, subject, exo)
        logs.append(rl)
        if not skip_runlogs:
            d = os.path.join(out, "runs", f"{spec.run_index:02d}_{spec.protocol}_g{spec.grip:.3f}")
            rl.save(d)
            files.extend(_walk(d))
        log.info("run %d protocol %s grip %.3f done", spec.run_index, spec.protocol, spec.grip)
    ds = build_dataset(logs, cfg.seed, cfg.protocol.dataset_stride)
    dd = os.path.join(out, "dataset")
    ds.save(dd)
    summary = os.path.join(dd, "summary.csv")
    write_csv(summary, ["runs", "train", "validation"], [(len(logs), ds.y_train.size, ds.y_val.size)])
    files.extend([os.path.join(dd, "train.csv"), os.path.join(dd, "validation.csv"), summary])
    write_manifest(out, "generate", cfg, {"skip_runlogs": skip_runlogs}, files)
    print(f"generated {len(logs)} runs: {ds.y_train.size} training and {ds.y_val.size} validation samples -> {dd}")
    return EXIT_OK


def _load_split(dataset: str):
    try:
        tr = read_dataset(os.path.join(dataset, "train.csv"))
        va = read_dataset(os.path.join(dataset, "validation.csv"))
    except (OSError, ValueError, StopIteration) as exc:
        raise DataError(f"cannot load dataset from {dataset}: {exc}") from None
    if tr[2].size < 50 or va[2].size < 1:
        raise DataError(f"dataset in {dataset} is too small")
    return tr, va


def _report_rows(name, rep):
    return (name, rep.r, rep.max_error, rep.error_variance, rep.n)


REPORT_HEADER = ["set", "R", "max_error", "error_variance", "n"]


def cmd_train(cfg: RunConfig, out: str, dataset: str, trees: int, depth: int, min_leaf: int, ablate: bool) -> int:
    (_, Xt, yt), (_, Xv, yv) = _load_split(dataset)
    seed = forest_seed(cfg.seed)
    try:
        model = fit_forest(Xt, yt, trees, depth, min_leaf, seed)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    md = os.path.join(out, "model")
    os.makedirs(md, exist_ok=True)
    mpath = os.path.join(md, "model.txt")
    model.save(mpath)
    rep = evaluate(model, Xv, yv)
    rpath = os.path.join(md, "report.csv")
    write_csv(rpath, REPORT_HEADER, [_report_rows("validation", rep)])
    files = [_write_config(out, cfg), mpath, rpath]
    print(f"validation {rep.line()}")
    if ablate:
        full, red = ablate_stretch((Xt, yt), (Xv, yv), trees=trees, depth=depth, min_leaf=min_leaf, seed=seed,
                                   full_model=model)
        apath = os.path.join(md, "ablation.csv")
        write_csv(apath, REPORT_HEADER, [_report_rows("all_features", full), _report_rows("no_stretch", red)])
        files.append(apath)
        print(f"no_stretch {red.line()}")
    args = {"dataset": _rel(dataset, out), "trees": trees, "depth": depth, "min_leaf": min_leaf, "ablate_stretch": ablate}
    write_manifest(out, "train", cfg, args, files)
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, out: str, dataset: str, model_path: str) -> int:
    try:
        model = load_forest(model_path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot load model: {exc}") from None
    _, (_, Xv, yv) = _load_split(dataset)
    if Xv.shape[1] != model.n_features:
        raise DataError("dataset feature count does not match the model")
    rep = evaluate(model, Xv, yv)
    path = os.path.join(out, "evaluation.csv")
    write_csv(path, REPORT_HEADER, [_report_rows("validation", rep)])
    write_manifest(out, "evaluate", cfg, {"dataset": _rel(dataset, out), "model": _rel(model_path, out)}, [path])
    print(f"validation {rep.line()}")
    return EXIT_OK


def _margin_row(k, l1, l2, shape_fn, human, m_e):
    try:
        shape = shape_fn()
    except SynthesisError as exc:
        log.warning("k=%g lambda=(%g, %g): %s", k, l1, l2, exc)
        return (k, l1, l2, math.nan, math.nan, "error")
    rep = phase_margin(shape, human, m_e)
    if rep.indeterminate:
        return (k, l1, l2, math.nan, math.nan, "indeterminate")
    return (k, l1, l2, rep.critical_crossover, rep.min_margin, rep.stable)


def cmd_analyze(cfg: RunConfig, out: str) -> int:
    from dataclasses import replace

    ad = os.path.join(out, "analysis")
    os.makedirs(ad, exist_ok=True)
    base = cfg.shaper_config()
    m_e = cfg.plant.m_e
    a = cfg.analyze
    adaptive, robust = [], []
    for l1, l2 in a.lambda_grid:
        sc = replace(base, lambda1=l1, lambda2=l2)
        for k in a.k_grid:
            human = HumanModel(k_h=k, zeta_h=cfg.plant.zeta_h, m_h=cfg.plant.m_h)
            adaptive.append(_margin_row(k, l1, l2, lambda: synthesize(sc, k), human, m_e))
            robust.append(_margin_row(k, l1, l2, lambda: robust_shape(sc, *a.robust_range), human, m_e))
    files = [_write_config(out, cfg)]
    for name, rows in (("margins.csv", adaptive), ("margins_robust.csv", robust)):
        p = os.path.join(ad, name)
        write_margin_csv(p, rows)
        files.append(p)
    grid = np.logspace(-1, 3, 4 * 400 + 1)
    curves = {"bode_Ce.csv": exo_compliance(ExoModel(m_e=m_e, m_he=m_e + cfg.plant.m_h), grid)}
    if a.k_grid:
        for tag, k in (("low", min(a.k_grid)), ("high", max(a.k_grid))):
            try:
                curves[f"bode_Cea_{tag}.csv"] = human_side_compliance(synthesize(base, k), m_e, grid)
            except SynthesisError as exc:
                log.warning("no Bode curve for k=%g: %s", k, exc)
    try:
        curves["bode_Cea_robust.csv"] = human_side_compliance(robust_shape(base, *a.robust_range), m_e, grid)
    except SynthesisError as exc:
        log.warning("no robust Bode curve: %s", exc)
    for name, resp in curves.items():
        p = os.path.join(ad, name)
        FrequencyResponse(grid, resp).to_csv(p)
        files.append(p)
    write_manifest(out, "analyze", cfg, {}, files)
    n_unstable = sum(1 for r in adaptive if r[5] is False)
    print(f"analyzed {len(adaptive)} adaptive and {len(robust)} robust cells; {n_unstable} adaptive cells unstable -> {ad}")
    return EXIT_OK


def _parse_scenario(words: list[str]):
    if not words:
        raise UsageError("missing scenario name")
    name, rest = words[0], words[1:]
    if name == "stability":
        if len(rest) != 2 or rest[0] not in ("adaptive", "robust") or rest[1] not in ("low", "high"):
            raise UsageError("usage: stability {adaptive|robust} {low|high}")
        return name, {"controller": rest[0], "grip": rest[1]}
    if name == "bandwidth":
        if not 1 <= len(rest) <= 2 or rest[0] not in ("adaptive", "robust") or (len(rest) == 2 and rest[1] not in ("low", "high")):
            raise UsageError("usage: bandwidth {adaptive|robust} [low|high]")
        return name, {"controller": rest[0], "grip": rest[1] if len(rest) == 2 else "low"}
    if name == "instability":
        if len(rest) > 1:
            raise UsageError("usage: instability [dummy_k]")
        try:
            dk = float(rest[0]) if rest else None
        except ValueError:
            raise UsageError(f"dummy_k must be a number, got {rest[0]!r}") from None
        return name, {"dummy_k": dk}
    raise UsageError(f"unknown scenario {name!r}")


def cmd_scenario(cfg: RunConfig, out: str, words: list[str], model_path: str, oracle: bool) -> int:
    name, kw = _parse_scenario(words)
    subject = VirtualSubject(cfg.subject_params())
    scfg = cfg.shaper_config()
    m_e = cfg.plant.m_e
    model = None
    if kw.get("controller") == "adaptive" and not oracle:
        try:
            model = load_forest(model_path)
        except (OSError, ValueError) as exc:
            raise DataError(f"adaptive scenarios need a trained model ({exc}); run 'train' or pass --oracle") from None
    sc = cfg.scenario
    if name == "stability":
        res = stability_scenario(kw["controller"], kw["grip"], model, subject=subject, cfg=scfg, m_e=m_e,
                                 preload_nm=sc.preload_nm, seed=cfg.seed)
        expected = res.verdict == "bounded"
    elif name == "bandwidth":
        res = bandwidth_scenario(kw["controller"], kw["grip"], model, subject=subject, cfg=scfg, m_e=m_e, seed=cfg.seed)
        expected = res.verdict == "reached"
    else:
        dk = kw["dummy_k"] if kw["dummy_k"] is not None else sc.dummy_k
        res = instability_scenario(dk, relaxed_k=sc.relaxed_k, tensed_k=sc.tensed_k, clamp=sc.clamp,
                                   subject=subject, cfg=scfg, m_e=m_e)
        expected = res.verdict.endswith("-then-stable")
    slug = "_".join(res.name.replace("=", "").split())
    d = os.path.join(out, "scenarios", slug)
    res.log.meta.update({"verdict": res.verdict, **{f"metric.{k}": v for k, v in res.metrics.items()}})
    res.log.save(d)
    vpath = os.path.join(d, "verdict.txt")
    with open(vpath, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(res.line() + "\n")
    files = [_write_config(out, cfg), *_walk(d)]
    write_manifest(out, "scenario", cfg, {"scenario": words, "oracle": oracle,
                                          "model": _rel(model_path, out) if model else None}, files)
    print(res.line())
    return EXIT_OK if expected else EXIT_DIVERGED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults when omitted)")
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--out", default="out", help="output directory (created if missing)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="exoshape", description="Adaptive compliance-shaping amplification toolkit")
    p.add_argument("--version", action="version", version=f"exoshape {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="simulate the training protocols and write the dataset")
    g.add_argument("--skip-runlogs", action="store_true", help="write only the dataset files")

    t = sub.add_parser("train", parents=[common], help="fit the stiffness forest")
    t.add_argument("--dataset", help="dataset directory (default OUT/dataset)")
    t.add_argument("--trees", type=int)
    t.add_argument("--depth", type=int)
    t.add_argument("--min-leaf", type=int)
    t.add_argument("--ablate-stretch", action="store_true", help="also fit without stretch channels")

    e = sub.add_parser("evaluate", parents=[common], help="score a saved model on the validation split")
    e.add_argument("--dataset")
    e.add_argument("--model", help="model file (default OUT/model/model.txt)")

    sub.add_parser("analyze", parents=[common], help="phase-margin sweep and Bode data")

    s = sub.add_parser("scenario", parents=[common], help="run a validation scenario",
                       epilog="scenarios: " + "; ".join(SCENARIO_USAGE))
    s.add_argument("name", nargs="+", help="scenario name and arguments")
    s.add_argument("--model", help="model file for adaptive runs (default OUT/model/model.txt)")
    s.add_argument("--oracle", action="store_true", help="adaptive runs use the true stiffness instead of a model")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config).with_seed(args.seed)
        out = args.out
        os.makedirs(out, exist_ok=True)
        if args.command == "generate":
            return cmd_generate(cfg, out, args.skip_runlogs)
        dataset = getattr(args, "dataset", None) or os.path.join(out, "dataset")
        model = getattr(args, "model", None) or os.path.join(out, "model", "model.txt")
        if args.command == "train":
            f = cfg.forest
            return cmd_train(
                cfg, out, dataset,
                args.trees if args.trees is not None else f.trees,
                args.depth if args.depth is not None else f.depth,
                args.min_leaf if args.min_leaf is not None else f.min_leaf,
                args.ablate_stretch,
            )
        if args.command == "evaluate":
            return cmd_evaluate(cfg, out, dataset, model)
        if args.command == "analyze":
            return cmd_analyze(cfg, out)
        return cmd_scenario(cfg, out, args.name, model, args.oracle)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(f"error: {exc}\nvalid scenarios: " + "; ".join(SCENARIO_USAGE), file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
