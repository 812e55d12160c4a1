"""Command-line front end.

Subcommands: simulate, posteriors, fit, logrank, compare-baselines, validate,
and rerun (repeat a command from its manifest). Exit status is 0 on
success, 1 on numerical or convergence failure and 2 on usage or
validation errors. ``PEDSURV_LOG`` sets the log level (default WARNING).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .em import EMConfig, EMResult, NotConvergedWarning, make_design, posterior_tables, run_em
from .genetics import ContradictoryEvidence, GeneticModel
from .inference import InconsistentEvidence
from .io import atomic_write_text, sha256_file
from .pedigree import PedigreeError, add_sex_indicator, format_dataset, parse_dataset, validate
from .plotting import svg_curves
from .simulate import NoFamiliesAscertained, config_from_dict, simulate
from .survival import SurvivalCurve, SurvivalFitError, model_from_dict, model_to_dict
from .workflows import UnknownColumn, UnknownGroupVariation, compare_baselines, logrank_by_group

log = logging.getLogger("pedsurv")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


# -- helpers -----------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _csv_text(header, rows, delimiter=",") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return repr(float(x))


def _load(path, sex_indicator=False):
    ds = parse_dataset(path)
    return add_sex_indicator(ds) if sex_indicator else ds


def _genetic_model(q: float) -> GeneticModel:
    try:
        return GeneticModel(q)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _names(text: str | None) -> tuple[str, ...]:
    return tuple(n for n in (text or "").split(",") if n)


def _em_config(args, **over) -> EMConfig:
    kw = dict(
        m_step=getattr(args, "mstep", "cox"),
        covariates=_names(args.covariates),
        strata=getattr(args, "strata", None),
        tolerance=args.tol,
        max_iterations=args.max_iter,
        seed=args.seed,
        exclude_proband_phenotype=not args.no_proband_exclusion,
        retain_proband_carrier_constraint=args.keep_proband_carrier,
    )
    kw.update(over)
    return EMConfig(**kw)


def _check_columns(ds, cfg: EMConfig) -> None:
    for name in cfg.covariates:
        if name not in ds.covariate_names:
            raise UnknownColumn(name)
    if cfg.strata not in (None, "sex") and cfg.strata not in ds.covariate_names:
        raise UnknownColumn(cfg.strata)


def _run_em(ds, gm, cfg, allow_nonconverged: bool) -> EMResult:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConvergedWarning)
        res = run_em(ds, gm, cfg)
    if not res.converged:
        msg = f"EM did not converge in {cfg.max_iterations} iterations"
        if not allow_nonconverged:
            raise NumericalFailure(msg + " (pass --allow-nonconverged to accept)")
        log.warning(msg)
    return res


def _curve_rows(curves: dict[str, SurvivalCurve], prefix=()):
    for label, c in curves.items():
        for t, e, lo, hi in zip(c.times, c.estimate, c.lower, c.upper):
            yield (*prefix, _num(t), _num(e), _num(lo), _num(hi), label)


CURVE_HEADER = ("time", "estimate", "lower", "upper", "stratum")


def _trace_text(trace) -> str:
    return "".join(json.dumps(e, sort_keys=True) + "\n" for e in trace)


def _weights_text(ds, res: EMResult) -> str:
    d = res.design
    rows = []
    for k, r in enumerate(ds.individuals()):
        rows.append((r.family_id, r.individual_id, _num(res.weights[k]),
                     int(not np.isnan(d.fixed_weight[k])), int(d.excluded[k])))
    return _csv_text(("family_id", "individual_id", "weight", "fixed", "excluded"), rows)


def _model_json(res: EMResult, cfg: EMConfig, q: float) -> dict:
    out = model_to_dict(res.model, cfg.covariates, res.design.strata_labels)
    out["strata_by"] = cfg.strata
    out["q"] = q
    out["em"] = {"iterations": res.state.iteration, "converged": res.converged,
                 "checkpoint_ages": list(cfg.checkpoint_ages),
                 "checkpoints": np.asarray(res.state.checkpoints).tolist()}
    return out


# -- commands ----------------------------------------------------------------


def cmd_simulate(args) -> dict:
    try:
        conf = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"{args.config}: {e}") from None
    if args.seed is not None:
        conf["seed"] = args.seed
    cfg = config_from_dict(conf)
    sim = simulate(cfg)
    out = Path(args.out)
    truth = Path(args.truth) if args.truth else out.with_suffix(".truth.tsv")
    atomic_write_text(out, format_dataset(sim.dataset))
    atomic_write_text(truth, sim.truth_tsv())
    print(f"{len(sim.dataset)} families, {sim.dataset.n_individuals} individuals -> {out}")
    inputs = [args.config] + ([conf["template"]] if conf.get("template", "builtin") != "builtin" else [])
    return {"inputs": inputs, "outputs": [str(out), str(truth)], "seed": cfg.seed}


def cmd_posteriors(args) -> dict:
    ds = _load(args.data, args.sex_indicator)
    gm = _genetic_model(args.q)
    model, cov, strata = None, (), None
    if args.model:
        d = json.loads(Path(args.model).read_text())
        model, cov, strata = model_from_dict(d), tuple(d.get("covariates", ())), d.get("strata_by")
    cfg = EMConfig(covariates=cov, strata=strata, exclude_proband_phenotype=args.exclude_probands,
                   retain_proband_carrier_constraint=args.keep_proband_carrier)
    _check_columns(ds, cfg)
    rows = []
    for table in posterior_tables(ds, model, gm, cfg, make_design(ds, cfg)):
        for iid, p, c in zip(table.individual_ids, table.marginals, table.carrier_prob):
            rows.append((table.family_id, iid, *(f"{v:.6f}" for v in p), f"{c:.6f}"))
    text = _csv_text(("family_id", "individual_id", "P00", "P10", "P01", "P11", "carrier"), rows, "\t")
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return {"inputs": [args.data] + ([args.model] if args.model else []),
            "outputs": [args.out] if args.out else []}


def cmd_fit(args) -> dict:
    ds = _load(args.data, args.sex_indicator)
    gm = _genetic_model(args.q)
    cfg = _em_config(args)
    _check_columns(ds, cfg)
    res = _run_em(ds, gm, cfg, True)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = {
        "model.json": _dump(_model_json(res, cfg, args.q)),
        "weights.csv": _weights_text(ds, res),
        "curves.csv": _csv_text(CURVE_HEADER, _curve_rows(res.curves)),
        "curves.svg": svg_curves(list(res.curves.values()), title="Carrier survival",
                                 step=[cfg.m_step == "cox"] * len(res.curves)),
        "trace.jsonl": _trace_text(res.trace),
    }
    for name, text in files.items():
        atomic_write_text(outdir / name, text)
    for label, c in res.curves.items():
        vals = " ".join(f"S({a:g})={c.at(a):.4f}" for a in cfg.checkpoint_ages)
        print(f"{label}: {vals}")
    if res.model.beta.size:
        for n, b, se in zip(cfg.covariates, res.model.beta, res.model.se):
            print(f"beta[{n}] = {b:.4f} (se {se:.4f})")
    print(f"iterations: {res.state.iteration}, converged: {res.converged}")
    info = {"inputs": [args.data], "outputs": [str(outdir / n) for n in files], "seed": cfg.seed}
    if not res.converged and not args.allow_nonconverged:
        info["failure"] = (f"EM did not converge in {cfg.max_iterations} iterations "
                           "(outputs written; pass --allow-nonconverged to accept)")
    return info


def cmd_logrank(args) -> dict:
    ds = _load(args.data, args.sex_indicator)
    gm = _genetic_model(args.q)
    cfg = _em_config(args)
    _check_columns(ds, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConvergedWarning)
        res = logrank_by_group(ds, gm, cfg, args.group)
    if not res.em.converged and not args.allow_nonconverged:
        raise NumericalFailure("EM did not converge (pass --allow-nonconverged to accept)")
    report = res.to_dict()
    report["group"] = args.group
    text = _dump(report)
    if args.out:
        atomic_write_text(args.out, text)
    print(f"log-rank on {args.group}: statistic {report['statistic']:.4f}, "
          f"df {report['df']}, p {report['p']:.4g}")
    return {"inputs": [args.data], "outputs": [args.out] if args.out else [], "seed": cfg.seed}


def cmd_compare_baselines(args) -> dict:
    ds = _load(args.data, args.sex_indicator)
    gm = _genetic_model(args.q)
    cfg = _em_config(args)
    _check_columns(ds, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConvergedWarning)
        cmp = compare_baselines(ds, gm, cfg)
    for fit in (cmp.cox, cmp.weibull):
        if not fit.converged and not args.allow_nonconverged:
            raise NumericalFailure("EM did not converge (pass --allow-nonconverged to accept)")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    curves, step, dashed = [], [], []
    for method, fit in (("semiparametric", cmp.cox), ("weibull", cmp.weibull)):
        for label, c in fit.curves.items():
            curves.append(SurvivalCurve(c.times, c.estimate, c.variance, c.lower, c.upper, c.stratum,
                                        f"{method} ({label})" if len(fit.curves) > 1 else method))
            step.append(method == "semiparametric")
            dashed.append(method == "weibull")
    rows = list(_curve_rows(cmp.cox.curves, ("semiparametric",))) + \
        list(_curve_rows(cmp.weibull.curves, ("weibull",)))
    files = {
        "overlay.csv": _csv_text(("method",) + CURVE_HEADER, rows),
        "overlay.svg": svg_curves(curves, title="Semi-parametric vs Weibull", step=step, dashed=dashed),
        "comparison.json": _dump(cmp.to_dict()),
    }
    for name, text in files.items():
        atomic_write_text(outdir / name, text)
    print(f"max |S_semiparametric - S_weibull| at ages {list(cmp.ages)}: {cmp.discrepancy:.4f}")
    return {"inputs": [args.data], "outputs": [str(outdir / n) for n in files], "seed": cfg.seed}


def cmd_validate(args) -> dict:
    ds = parse_dataset(args.data, strict=False)
    diags = validate(ds, args.require_probands)
    for d in diags:
        print(f"{d.kind}\t{d.family_id}\t{d.individual_id or ''}\t{d.message}")
    if not diags:
        print(f"ok: {len(ds)} families, {ds.n_individuals} individuals")
    if diags:
        raise UsageError(f"{len(diags)} problem(s) found")
    return {"inputs": [args.data], "outputs": []}


def cmd_rerun(args):
    manifest = json.loads(Path(args.manifest).read_text())
    argv = manifest.get("argv")
    if not isinstance(argv, list):
        raise UsageError("manifest has no argv")
    return main(argv)


# -- parser ------------------------------------------------------------------


def _em_flags(p, strata=True, mstep=True):
    p.add_argument("data", help="pedigree TSV")
    p.add_argument("--q", type=float, required=True, help="mutant allele frequency")
    if mstep:
        p.add_argument("--mstep", choices=("cox", "weibull"), default="cox")
    p.add_argument("--covariates", default="", help="comma-separated covariate names")
    if strata:
        p.add_argument("--strata", default=None, help="'sex' or a covariate name")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--no-proband-exclusion", action="store_true")
    p.add_argument("--keep-proband-carrier", action="store_true",
                   help="keep the affected-implies-carrier constraint for excluded probands")
    p.add_argument("--sex-indicator", action="store_true", help="add a 0/1 'female' covariate")
    p.add_argument("--allow-nonconverged", action="store_true")
    p.add_argument("--manifest", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pedsurv", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate pedigrees from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output pedigree TSV")
    p.add_argument("--truth", default=None, help="ground-truth TSV (default: <out>.truth.tsv)")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("posteriors", help="genotype posteriors per individual")
    p.add_argument("data")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--model", default=None, help="model JSON from 'fit'; adds censored-carrier evidence")
    p.add_argument("--exclude-probands", action="store_true", help="drop proband phenotypes")
    p.add_argument("--keep-proband-carrier", action="store_true")
    p.add_argument("--sex-indicator", action="store_true")
    p.add_argument("--out", default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_posteriors)

    p = sub.add_parser("fit", help="EM estimate of carrier survival")
    _em_flags(p)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("logrank", help="EM then weighted log-rank across groups")
    _em_flags(p, strata=False)
    p.add_argument("--group", required=True, help="'sex' or a covariate name")
    p.add_argument("--out", default=None, help="JSON report")
    p.set_defaults(func=cmd_logrank)

    p = sub.add_parser("compare-baselines", help="overlay semi-parametric and Weibull fits")
    _em_flags(p, mstep=False)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_compare_baselines)

    p = sub.add_parser("validate", help="check a pedigree file")
    p.add_argument("data")
    p.add_argument("--require-probands", action="store_true")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("rerun", help="repeat the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)
    return ap


def _manifest_path(args, info) -> Path | None:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    outdir = getattr(args, "outdir", None)
    if outdir:
        return Path(outdir) / "manifest.json"
    outs = info.get("outputs") or []
    if outs:
        return Path(outs[0]).with_suffix(".manifest.json")
    return None


def _write_manifest(args, argv, info, elapsed) -> None:
    path = _manifest_path(args, info)
    if path is None:
        return
    config = {k: v for k, v in vars(args).items() if k not in ("func", "manifest")}
    inputs = {str(p): sha256_file(p) for p in info.get("inputs", []) if p and os.path.exists(p)}
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "config": config,
        "inputs": inputs,
        "outputs": info.get("outputs", []),
        "seed": info.get("seed"),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "elapsed_seconds": round(elapsed, 3),
    }
    atomic_write_text(path, _dump(manifest))


def _setup_logging() -> None:
    level = os.environ.get("PEDSURV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    start = time.perf_counter()
    try:
        info = args.func(args)
        if args.command == "rerun":
            return info
        _write_manifest(args, argv, info, time.perf_counter() - start)
        if info.get("failure"):
            raise NumericalFailure(info["failure"])
        return EXIT_OK
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head)
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except (NumericalFailure, SurvivalFitError, NoFamiliesAscertained, np.linalg.LinAlgError) as e:
        print(f"pedsurv: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, PedigreeError, InconsistentEvidence, ContradictoryEvidence, UnknownColumn,
            UnknownGroupVariation, KeyError, ValueError, OSError) as e:
        print(f"pedsurv: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
