"""Command-line entry point for the mixing laboratory.

Every experiment command resolves its config (file + flag overrides),
derives a content hash, and writes into `<out>/<command>/<hash>/`:

    config.resolved   canonical JSON of the resolved config
    results.csv       deterministic per-run rows (byte-stable across reruns)
    results.jsonl     full-fidelity mirror with wall times and artifact paths
    summary.csv       aggregated view (where the protocol defines one)
    *.png             figures, unless --no-plots is given

Exit codes: 0 success, 2 configuration/input error, 3 runtime abort.
Accuracies and F1 are reported as percentages in CSV output; MAE and
correlation keep their natural scale. Setting MIXLAB_DETERMINISTIC=1
forces sequential execution (jobs=1) for bit-exact reruns.
"""

import argparse
import os
import sys
from dataclasses import replace

from .config import build_experiment, experiment_hash, load_config, resolved_text
from .errors import ConfigError, DataFormatError, NumericError, ParameterError, TrainingAbort
from .evaluation import curve_by_p, limited_data_sweep, probe_checkpoint, robustness_curve
from .metrics import METRIC_FIELDS
from .mixing import MixConfig
from .model import save_checkpoint
from .reporting import (
    ExperimentRecord,
    render_ablation,
    render_limited,
    render_noise_curves,
    render_nsweep,
    render_probe_bars,
    render_train_curves,
    write_csv,
    write_jsonl,
)
from .rng import RngStream
from .synthdata import generate, load_csv, save_csv
from .training import config_hash, run_seeds, run_single
from .util import atomic_write_text

PERCENT_METRICS = ("acc2", "f1", "acc5", "acc7")

# Table-4 component grid: toggle names map onto MixConfig fields.
ABLATION_VARIANTS = (
    ("full", {}),
    ("no_aniso", {"anisotropic": False}),
    ("no_reweight", {"reweight": False}),
    ("no_mask_share", {"mask_share": False}),
    ("no_dynamic", {"dynamic_mix": False}),
)


def _metric_cells(report) -> list:
    """CSV cells for one MetricReport, accuracies scaled to percent."""
    row = [report.mae, report.corr, report.corr_defined]
    row += [100.0 * getattr(report, name) for name in PERCENT_METRICS]
    row += [report.n_binary_included, report.n_binary_excluded]
    return row


METRIC_HEADER = ["mae", "corr", "corr_defined", "acc2", "f1", "acc5", "acc7",
                 "n_binary_included", "n_binary_excluded"]


def _scaled(name: str, value: float) -> float:
    return 100.0 * value if name in PERCENT_METRICS else value


def _parse_list(text, conv, flag):
    try:
        values = [conv(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise ConfigError(f"bad value for {flag}: {exc}") from exc
    if not values:
        raise ConfigError(f"{flag} must list at least one value")
    return values


def _parse_ranges(text):
    ranges = []
    for part in text.split(","):
        lo, sep, hi = part.partition(":")
        if not sep:
            raise ConfigError(f"--p-ranges entries look like lo:hi, got {part!r}")
        try:
            ranges.append((float(lo), float(hi)))
        except ValueError as exc:
            raise ConfigError(f"bad --p-ranges entry {part!r}: {exc}") from exc
    return ranges


def resolve_jobs(flag_value) -> int:
    if os.environ.get("MIXLAB_DETERMINISTIC") == "1":
        return 1
    if flag_value is not None:
        if flag_value < 1:
            raise ConfigError(f"--jobs must be >= 1, got {flag_value}")
        return flag_value
    import psutil

    return psutil.cpu_count(logical=False) or 1


def _load_dataset(args, exp):
    if getattr(args, "data", None):
        return load_csv(args.data)
    return generate(exp.data)


def _prepare_dir(exp, command):
    outdir = os.path.join(exp.out, command, exp.hash)
    os.makedirs(outdir, exist_ok=True)
    atomic_write_text(os.path.join(outdir, "config.resolved"),
                      resolved_text(exp.resolved))
    return outdir


def _apply_overrides(resolved, args, command):
    if getattr(args, "out", None):
        resolved["out"] = args.out
    if getattr(args, "seeds", None):
        resolved["seeds"] = _parse_list(args.seeds, int, "--seeds")
    if getattr(args, "algorithm", None):
        resolved["train"]["algorithm"] = args.algorithm
    if getattr(args, "p_grid", None):
        resolved["protocol"][command]["p_grid"] = _parse_list(args.p_grid, float, "--p-grid")
    if getattr(args, "runs", None):
        resolved["protocol"][command]["n_runs"] = args.runs
    if getattr(args, "fractions", None):
        resolved["protocol"]["limited"]["fractions"] = _parse_list(
            args.fractions, float, "--fractions")
    if getattr(args, "n_grid", None):
        resolved["protocol"]["nsweep"]["n_grid"] = _parse_list(args.n_grid, int, "--n-grid")
    if getattr(args, "p_ranges", None):
        resolved["protocol"]["ablate"]["p_ranges"] = [
            list(r) for r in _parse_ranges(args.p_ranges)]
    return resolved


# ---------------------------------------------------------------------------
# Commands


def cmd_gen_data(args) -> int:
    resolved = load_config(args.config)
    exp = build_experiment(resolved)
    dataset = generate(exp.data)
    out = args.out or "dataset.csv"
    parent = os.path.dirname(os.path.abspath(out))
    if not os.path.isdir(parent):
        if args.make_dirs:
            os.makedirs(parent, exist_ok=True)
        else:
            raise ConfigError(f"output directory {parent} does not exist "
                              f"(pass --make-dirs to create it)")
    save_csv(dataset, out)
    splits = [len(dataset.indices(s)) for s in ("train", "val", "test")]
    print(f"gen-data: N={dataset.n_examples} dims={';'.join(str(d) for d in dataset.dims)} "
          f"split={splits[0]}/{splits[1]}/{splits[2]} -> {out}")
    return 0


def cmd_train(args) -> int:
    resolved = _apply_overrides(load_config(args.config), args, "train")
    exp = build_experiment(resolved)
    dataset = _load_dataset(args, exp)
    jobs = resolve_jobs(args.jobs)
    outdir = _prepare_dir(exp, "train")

    res = run_seeds(dataset, exp.train, exp.seeds, jobs)

    rows, log_rows, records = [], [], []
    for run in sorted(res.runs, key=lambda r: r.seed):
        ckpt = os.path.join(outdir, f"checkpoint.seed{run.seed}.npz")
        save_checkpoint(run.result.params, ckpt)
        rows.append([exp.hash, "train", exp.train.algorithm, run.seed]
                    + _metric_cells(run.test)
                    + [run.result.best_epoch, run.result.total_steps])
        records.append(ExperimentRecord(
            exp.hash, "train", run.seed, run.test.as_dict(),
            run.result.wall_time_s, [ckpt],
            {"best_epoch": run.result.best_epoch,
             "best_val_mae": run.result.best_val_mae,
             "total_steps": run.result.total_steps}))
        for rec in run.result.records:
            log_rows.append({"seed": run.seed, "epoch": rec.epoch,
                             "train_loss": rec.train_loss,
                             "val": rec.val.as_dict(),
                             "mixing_steps": rec.mixing_steps,
                             "config_hash": exp.hash})
    for stat_idx, stat in enumerate(("mean", "std")):
        cells = [exp.hash, "train", exp.train.algorithm, stat]
        stats = {name: res.aggregate[name][stat_idx] for name in METRIC_FIELDS}
        cells += [stats["mae"], stats["corr"], ""]
        cells += [_scaled(n, stats[n]) for n in PERCENT_METRICS]
        cells += ["", "", "", ""]
        rows.append(cells)
    records.append({"config_hash": exp.hash, "command": "train", "kind": "aggregate",
                    "metrics": {n: {"mean": res.aggregate[n][0],
                                    "std": res.aggregate[n][1]}
                                for n in METRIC_FIELDS}})

    header = ["config_hash", "command", "algorithm", "seed"] + METRIC_HEADER \
        + ["best_epoch", "total_steps"]
    write_csv(os.path.join(outdir, "results.csv"), header, rows)
    write_jsonl(os.path.join(outdir, "results.jsonl"), records)
    write_jsonl(os.path.join(outdir, "train_log.jsonl"), log_rows)
    if not args.no_plots:
        render_train_curves({r.seed: r.result.records for r in res.runs},
                            os.path.join(outdir, "train.png"))
    mean, std = res.aggregate["mae"]
    print(f"train[{exp.train.algorithm}]: {len(exp.seeds)} seeds, "
          f"test MAE {mean:.4f} +/- {std:.4f} -> {outdir}")
    return 0


def _ablation_grid(exp):
    grid = [(name, dict(kw)) for name, kw in ABLATION_VARIANTS]
    for lo, hi in exp.protocol["ablate"]["p_ranges"]:
        grid.append((f"p_{lo:g}:{hi:g}", {"subset_lo": float(lo), "subset_hi": float(hi)}))
    return grid


def _toggle_bits(mix: MixConfig) -> str:
    return "".join(str(int(getattr(mix, f)))
                   for f in ("anisotropic", "reweight", "mask_share", "dynamic_mix"))


def cmd_ablate(args) -> int:
    resolved = _apply_overrides(load_config(args.config), args, "ablate")
    exp = build_experiment(resolved)
    dataset = _load_dataset(args, exp)
    jobs = resolve_jobs(args.jobs)
    outdir = _prepare_dir(exp, "ablate")

    rows, summary, records, variants, maes = [], [], [], [], []
    for name, kw in _ablation_grid(exp):
        cfg = replace(exp.train, algorithm="powmix", mix=replace(exp.train.mix, **kw))
        vhash = config_hash(cfg)
        res = run_seeds(dataset, cfg, exp.seeds, jobs)
        for run in sorted(res.runs, key=lambda r: r.seed):
            rows.append([vhash, "ablate", name, _toggle_bits(cfg.mix), run.seed]
                        + _metric_cells(run.test))
            records.append(ExperimentRecord(
                vhash, "ablate", run.seed, run.test.as_dict(),
                run.result.wall_time_s, [],
                {"variant": name, "toggles": _toggle_bits(cfg.mix)}))
        summary.append([name, vhash,
                        _scaled("acc2", res.aggregate["acc2"][0]),
                        _scaled("acc5", res.aggregate["acc5"][0]),
                        res.aggregate["mae"][0]])
        variants.append(name)
        maes.append(res.aggregate["mae"][0])

    header = ["config_hash", "command", "variant", "toggles", "seed"] + METRIC_HEADER
    write_csv(os.path.join(outdir, "results.csv"), header, rows)
    write_csv(os.path.join(outdir, "summary.csv"),
              ["variant", "config_hash", "acc2", "acc5", "mae"], summary)
    write_jsonl(os.path.join(outdir, "results.jsonl"), records)
    if not args.no_plots:
        render_ablation(variants, maes, os.path.join(outdir, "ablation.png"))
    print(f"ablate: {len(variants)} variants x {len(exp.seeds)} seeds -> {outdir}")
    return 0


def _noise_command(args, command) -> int:
    """Shared body of cmd_robustness and cmd_dominance."""
    resolved = _apply_overrides(load_config(args.config), args, command)
    exp = build_experiment(resolved)
    dataset = _load_dataset(args, exp)
    outdir = _prepare_dir(exp, command)
    proto = exp.protocol[command]
    seed0 = exp.seeds[0]

    algorithms = ["none"]
    if exp.train.algorithm != "none":
        algorithms.append(exp.train.algorithm)

    rows, records, summary, curves = [], [], [], {}
    probe_rows, probe_csv = [], []
    for algorithm in algorithms:
        cfg = replace(exp.train, algorithm=algorithm, seed=seed0)
        run = run_single(dataset, cfg)
        ckpt = os.path.join(outdir, f"checkpoint.{algorithm}.seed{seed0}.npz")
        save_checkpoint(run.result.params, ckpt)
        # same noise stream for every algorithm: corruption draws are paired
        noise_rng = RngStream(seed0).split("noise")
        cells = robustness_curve(run.result.params, dataset, proto["kinds"],
                                 proto["p_grid"], proto["n_runs"], noise_rng)
        for cell in cells:
            rows.append([exp.hash, command, algorithm, cell.kind, cell.p, cell.run]
                        + _metric_cells(cell.report))
            records.append(ExperimentRecord(
                exp.hash, command, seed0, cell.report.as_dict(),
                run.result.wall_time_s, [ckpt],
                {"algorithm": algorithm, "kind": cell.kind, "p": cell.p,
                 "run": cell.run}))
        by_p = curve_by_p(cells)
        curves[algorithm] = by_p
        for p in sorted(by_p):
            rep = by_p[p]
            summary.append([algorithm, p, rep.mae, rep.corr]
                           + [_scaled(n, getattr(rep, n)) for n in PERCENT_METRICS])

        if command == "dominance":
            for seed in exp.seeds[:proto["probe_runs"]]:
                pr = run if seed == seed0 else run_single(dataset, replace(cfg, seed=seed))
                probe = probe_checkpoint(pr.result.params, dataset)
                for m, rep in enumerate(probe["modalities"]):
                    probe_csv.append([exp.hash, algorithm, seed, f"m{m}"]
                                     + _metric_cells(rep))
                probe_csv.append([exp.hash, algorithm, seed, "fusion"]
                                 + _metric_cells(probe["fusion"]))
            if algorithm == algorithms[-1]:
                last = [r for r in probe_csv if r[1] == algorithm]
                labels = sorted({r[3] for r in last})
                for label in labels:
                    vals = [r[4] for r in last if r[3] == label]
                    probe_rows.append((label, sum(vals) / len(vals)))

    header = ["config_hash", "command", "algorithm", "kind", "p", "run"] + METRIC_HEADER
    write_csv(os.path.join(outdir, "results.csv"), header, rows)
    write_csv(os.path.join(outdir, "summary.csv"),
              ["algorithm", "p", "mae", "corr", "acc2", "f1", "acc5", "acc7"], summary)
    write_jsonl(os.path.join(outdir, "results.jsonl"), records)
    if probe_csv:
        write_csv(os.path.join(outdir, "probes.csv"),
                  ["config_hash", "algorithm", "seed", "modality"] + METRIC_HEADER,
                  probe_csv)
    if not args.no_plots:
        render_noise_curves(curves, "f1", "F1 (positive class)",
                            os.path.join(outdir, f"{command}.png"))
        render_noise_curves(curves, "mae", "MAE",
                            os.path.join(outdir, f"{command}_mae.png"))
        if probe_rows:
            render_probe_bars(probe_rows, os.path.join(outdir, "probes.png"))
    print(f"{command}: {len(algorithms)} checkpoints, kinds={','.join(proto['kinds'])}, "
          f"{len(proto['p_grid'])} p-points x {proto['n_runs']} runs -> {outdir}")
    return 0


def cmd_robustness(args) -> int:
    return _noise_command(args, "robustness")


def cmd_dominance(args) -> int:
    return _noise_command(args, "dominance")


def cmd_limited(args) -> int:
    resolved = _apply_overrides(load_config(args.config), args, "limited")
    exp = build_experiment(resolved)
    dataset = _load_dataset(args, exp)
    jobs = resolve_jobs(args.jobs)
    outdir = _prepare_dir(exp, "limited")
    proto = exp.protocol["limited"]
    fractions = [float(f) for f in proto["fractions"]]

    cells, gaps = limited_data_sweep(dataset, exp.train, fractions, exp.seeds,
                                     jobs, proto["baseline"])
    rows, records = [], []
    for cell in cells:
        rows.append([exp.hash, "limited", cell.fraction, cell.algorithm, cell.seed]
                    + _metric_cells(cell.report))
        records.append(ExperimentRecord(
            exp.hash, "limited", cell.seed, cell.report.as_dict(), 0.0, [],
            {"fraction": cell.fraction, "algorithm": cell.algorithm}))
    summary = []
    for f in fractions:
        for name in METRIC_FIELDS:
            mean, std = gaps[f][name]
            summary.append([f, name, _scaled(name, mean), _scaled(name, std)])

    header = ["config_hash", "command", "fraction", "algorithm", "seed"] + METRIC_HEADER
    write_csv(os.path.join(outdir, "results.csv"), header, rows)
    write_csv(os.path.join(outdir, "summary.csv"),
              ["fraction", "metric", "gap_mean", "gap_std"], summary)
    write_jsonl(os.path.join(outdir, "results.jsonl"), records)
    if not args.no_plots:
        by_algorithm = {}
        for cell in cells:
            by_algorithm.setdefault(cell.algorithm, {}).setdefault(
                cell.fraction, []).append(cell.report.mae)
        curves = {}
        for algorithm, per_f in by_algorithm.items():
            curves[algorithm] = {
                f: (sum(v) / len(v),
                    (sum((x - sum(v) / len(v)) ** 2 for x in v) / len(v)) ** 0.5)
                for f, v in per_f.items()}
        render_limited(fractions, curves, os.path.join(outdir, "limited.png"))
    worst = min(fractions)
    print(f"limited: fractions {fractions}, MAE gap at {worst:g}: "
          f"{gaps[worst]['mae'][0]:+.4f} -> {outdir}")
    return 0


def cmd_nsweep(args) -> int:
    resolved = _apply_overrides(load_config(args.config), args, "nsweep")
    exp = build_experiment(resolved)
    dataset = _load_dataset(args, exp)
    jobs = resolve_jobs(args.jobs)
    outdir = _prepare_dir(exp, "n-sweep")
    n_grid = [int(n) for n in exp.protocol["nsweep"]["n_grid"]]

    rows, records, summary = [], [], []
    base = run_seeds(dataset, replace(exp.train, algorithm="none"), exp.seeds, jobs)
    sweeps = [("none", None, base)]
    for n in n_grid:
        cfg = replace(exp.train, algorithm="powmix",
                      mix=replace(exp.train.mix, n_mixed=n))
        sweeps.append(("powmix", n, run_seeds(dataset, cfg, exp.seeds, jobs)))
    for algorithm, n, res in sweeps:
        label = "none" if n is None else n
        for run in sorted(res.runs, key=lambda r: r.seed):
            rows.append([exp.hash, "n-sweep", algorithm, label, run.seed]
                        + _metric_cells(run.test))
            records.append(ExperimentRecord(
                exp.hash, "n-sweep", run.seed, run.test.as_dict(),
                run.result.wall_time_s, [],
                {"algorithm": algorithm, "n_mixed": n}))
        cells = [label]
        for name in METRIC_FIELDS:
            cells += [_scaled(name, res.aggregate[name][0]),
                      _scaled(name, res.aggregate[name][1])]
        summary.append(cells)

    header = ["config_hash", "command", "algorithm", "n_mixed", "seed"] + METRIC_HEADER
    write_csv(os.path.join(outdir, "results.csv"), header, rows)
    sum_header = ["n_mixed"]
    for name in METRIC_FIELDS:
        sum_header += [f"{name}_mean", f"{name}_std"]
    write_csv(os.path.join(outdir, "summary.csv"), sum_header, summary)
    write_jsonl(os.path.join(outdir, "results.jsonl"), records)
    if not args.no_plots:
        means = [s.aggregate["mae"][0] for _, n, s in sweeps if n is not None]
        stds = [s.aggregate["mae"][1] for _, n, s in sweeps if n is not None]
        render_nsweep(n_grid, means, stds, base.aggregate["mae"][0],
                      os.path.join(outdir, "n_sweep.png"))
    print(f"n-sweep: {len(n_grid)} grid points + baseline x {len(exp.seeds)} seeds "
          f"-> {outdir}")
    return 0


# ---------------------------------------------------------------------------
# Parser and dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixlab",
        description="Multimodal latent-space mixing laboratory on synthetic data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data_flag=True):
        p.add_argument("--config", help="JSON config file (defaults used if omitted)")
        p.add_argument("--out", help="output directory root (default: runs)")
        p.add_argument("--seeds", help="comma-separated run seeds, e.g. 1,2,3")
        p.add_argument("--jobs", type=int, help="worker processes "
                       "(default: physical cores; MIXLAB_DETERMINISTIC=1 forces 1)")
        p.add_argument("--no-plots", action="store_true",
                       help="skip figure rendering, keep delimited output only")
        if data_flag:
            p.add_argument("--data", help="dataset CSV to reuse instead of generating")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="dataset CSV path (default: dataset.csv)")
    p.add_argument("--make-dirs", action="store_true",
                   help="create missing parent directories")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train with a selectable mixing algorithm")
    common(p)
    p.add_argument("--algorithm", choices=["none", "powmix", "multimix", "manifold"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="run the five-component toggle grid")
    common(p)
    p.add_argument("--p-ranges", dest="p_ranges",
                   help="extra subset-size rows, e.g. 2:4,4:6,6:8,2:8,2:16")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("robustness", help="feature-drop noise curves")
    common(p)
    p.add_argument("--algorithm", choices=["none", "powmix", "multimix", "manifold"])
    p.add_argument("--p-grid", dest="p_grid", help="comma-separated probabilities")
    p.add_argument("--runs", type=int, help="noise resamples per grid cell")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("dominance", help="dominant-modality drop and probe analysis")
    common(p)
    p.add_argument("--algorithm", choices=["none", "powmix", "multimix", "manifold"])
    p.add_argument("--p-grid", dest="p_grid", help="comma-separated probabilities")
    p.add_argument("--runs", type=int, help="noise resamples per grid cell")
    p.set_defaults(func=cmd_dominance)

    p = sub.add_parser("limited", help="paired limited-data sweep")
    common(p)
    p.add_argument("--algorithm", choices=["none", "powmix", "multimix", "manifold"])
    p.add_argument("--fractions", help="comma-separated train fractions in (0,1]")
    p.set_defaults(func=cmd_limited)

    p = sub.add_parser("n-sweep", help="sweep the number of mixed examples")
    common(p)
    p.add_argument("--n-grid", dest="n_grid", help="comma-separated n_mixed values")
    p.set_defaults(func=cmd_nsweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterError, DataFormatError) as exc:
        print(f"mixlab: config error: {exc}", file=sys.stderr)
        return 2
    except (TrainingAbort, NumericError) as exc:
        print(f"mixlab: runtime abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
