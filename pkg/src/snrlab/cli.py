"""Command-line experiments wiring the library into seeded, reproducible runs.

Each subcommand writes CSV/JSONL reports plus rendered figures into the
output directory, together with the echoed configuration and the package
version, so a run is fully described by its artifacts.  Identical
(config, seed) pairs produce byte-identical outputs.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import cyclic_dataset, load_corpus, make_circle_embeddings, make_sphere_embeddings
from .converter import (
    init_params,
    mean_kl_to_bayes,
    sample_single_token_pairs,
    save_params,
    train_converter,
)
from .corruption import CorruptionConfig, sample_gamma_vector
from .diagnostics import (
    calibration_report,
    over_refinement_flags,
    rewrite_counts,
    teacher_forcing_scores,
    trace_diagnostics,
)
from .dynamics import diagonal_path, sample_batch
from .errors import SnrLabError, UsageError
from .likelihood import error_field, exact_nll, geometric_grid, nll_ar_contour, nll_diagonal
from .refine import (
    DEFAULT_GAMMA_VIS,
    DEFAULT_TOP_P,
    RemaskSchedule,
    RefinementTrace,
    fig5_toy_draft,
    run_refinement,
    write_trace_jsonl,
)

FLOAT_FMT = "%.12g"


def _fmt(v) -> str:
    if isinstance(v, float) or isinstance(v, np.floating):
        return FLOAT_FMT % v
    return str(v)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _echo_config(outdir: Path, args: argparse.Namespace) -> None:
    lines = [f"version {__version__}"]
    for key in sorted(vars(args)):
        if key == "func":
            continue
        lines.append(f"{key} {_fmt(getattr(args, key))}")
    (outdir / "config.txt").write_text("\n".join(lines) + "\n")


def _load_dataset(args):
    if args.corpus is not None:
        data = load_corpus(args.corpus, args.vocab_size)
        K = data.vocab.size
    else:
        data = cyclic_dataset(args.K)
        K = args.K
    if args.embedding == "circle":
        emb = make_circle_embeddings(K)
    else:
        emb = make_sphere_embeddings(K, args.dim, args.seed)
    return data, emb


def _seq_label(seq) -> str:
    return " ".join(str(int(v)) for v in seq)


# ---------------------------------------------------------------- subcommands


def cmd_generate(args, outdir: Path) -> None:
    if args.n_chains <= 0:
        raise UsageError("need a positive number of chains")
    data, emb = _load_dataset(args)
    path = diagonal_path(data.length, args.gamma_end, args.n_steps)
    counts = sample_batch(args.n_chains, path, data, emb, args.seed)

    support = {tuple(int(v) for v in s): float(w) for s, w in zip(data.sequences, data.weights)}
    keys = sorted(set(counts.counts) | set(support))
    rows = []
    for key in keys:
        n = counts.counts.get(key, 0)
        rows.append((_seq_label(key), n, n / args.n_chains, support.get(key, 0.0)))
    _write_csv(outdir / "samples.csv", ["sequence", "count", "observed", "exact"], rows)
    tv = counts.tv_to(data)
    valid = counts.valid_fraction(data)
    _write_csv(
        outdir / "summary.csv",
        ["n_chains", "tv_to_exact", "valid_fraction"],
        [(args.n_chains, tv, valid)],
    )
    if not args.no_figures:
        from . import plots

        obs = [counts.counts.get(k, 0) / args.n_chains for k in keys]
        exact = [support.get(k, 0.0) for k in keys]
        plots.save_sample_histogram([_seq_label(k) for k in keys], obs, exact,
                                    outdir / "samples.png")


def cmd_nll(args, outdir: Path) -> None:
    if args.contour not in ("diagonal", "ar", "both"):
        raise UsageError(f"unknown contour {args.contour!r}")
    data, emb = _load_dataset(args)
    x = data.sequences[args.sequence_index % data.n_sequences]
    grid = geometric_grid(args.gamma_max, args.n_grid)
    exact = exact_nll(x, data)

    field_rows = []
    E_matrix = []
    for j, g in enumerate(grid):
        fs = error_field(x, np.full(data.length, g), args.n_mc, args.seed * 1000 + j, data, emb)
        E_matrix.append(fs.E)
        for i in range(data.length):
            field_rows.append((g, i, fs.E[i], fs.stderr[i]))
    _write_csv(outdir / "error_field.csv", ["gamma", "token", "E", "stderr"], field_rows)

    estimates = {}
    summary_rows = []
    if args.contour in ("diagonal", "both"):
        est = nll_diagonal(x, args.gamma_max, grid, args.n_mc, args.seed, data, emb)
        estimates["diagonal"] = est
        summary_rows.append(("diagonal", est.estimate, est.stderr, exact))
    if args.contour in ("ar", "both"):
        est = nll_ar_contour(x, args.gamma_max, grid, args.n_mc, args.seed, data, emb)
        estimates["ar"] = est
        summary_rows.append(("ar", est.estimate, est.stderr, exact))
        _write_csv(
            outdir / "per_token.csv",
            ["token", "nll", "stderr"],
            [(i, v, s) for i, (v, s) in enumerate(zip(est.per_token, est.per_token_stderr))],
        )
    _write_csv(outdir / "summary.csv", ["contour", "estimate", "stderr", "exact"], summary_rows)
    if len(estimates) == 2:
        a, b = estimates["diagonal"], estimates["ar"]
        gap = abs(a.estimate - b.estimate)
        sigma = float(np.hypot(a.stderr, b.stderr))
        _write_csv(
            outdir / "agreement.csv",
            ["abs_gap", "combined_stderr", "within_2_sigma"],
            [(gap, sigma, gap <= 2 * sigma)],
        )
    if not args.no_figures:
        from . import plots

        plots.save_error_field(grid, np.array(E_matrix), outdir / "error_field.png")


def _refine_setup(args):
    if args.preset == "fig5":
        draft, truth = fig5_toy_draft()
        K = 7
        schedule = RemaskSchedule(strategy="confidence")
        T = 10
    elif args.preset is not None:
        raise UsageError(f"unknown preset {args.preset!r}")
    else:
        K = args.K
        draft = np.full(K, K)
        truth = None
        schedule = RemaskSchedule(strategy=args.strategy, eta_cap=args.eta_cap)
        T = args.T
    data = cyclic_dataset(K)
    emb = make_circle_embeddings(K)
    return draft, truth, schedule, T, data, emb


def _run_refine(args) -> tuple[RefinementTrace, np.ndarray | None]:
    draft, truth, schedule, T, data, emb = _refine_setup(args)
    trace = run_refinement(draft, T, schedule, args.gamma_vis, args.top_p, args.seed, data, emb)
    return trace, truth


def _write_diag_csv(trace: RefinementTrace, path: Path, top_p: float) -> None:
    diags = trace_diagnostics(trace, top_p)
    _write_csv(
        path,
        ["step", "t", "u", "H", "k", "r", "delta"],
        [(s.step, d.t, d.u, d.H, d.k, d.r, d.delta) for s, d in zip(trace.steps, diags)],
    )


def cmd_refine(args, outdir: Path) -> None:
    trace, truth = _run_refine(args)
    write_trace_jsonl(trace, outdir / "trace.jsonl")
    _write_diag_csv(trace, outdir / "diagnostics.csv", args.top_p)

    success = bool(truth is not None and np.array_equal(trace.final_draft, truth))
    summary = [("final_draft", _seq_label(trace.final_draft)),
               ("last_t", _fmt(trace.steps[-1].t)),
               ("success", str(success) if truth is not None else "n/a")]
    if args.sweep > 0:
        draft, truth_s, schedule, T, data, emb = _refine_setup(args)
        wins = 0
        for s in range(args.sweep):
            tr = run_refinement(draft, T, schedule, args.gamma_vis, args.top_p, s, data, emb)
            if truth_s is not None and np.array_equal(tr.final_draft, truth_s):
                wins += 1
        summary.append(("sweep_success_rate", _fmt(wins / args.sweep)))
    _write_csv(outdir / "summary.csv", ["key", "value"], summary)
    if not args.no_figures:
        from . import plots

        plots.save_refine_heatmap(trace.drafts(), trace.steps[0].posterior.shape[1],
                                  outdir / "refine.png")


def cmd_diagnose(args, outdir: Path) -> None:
    trace, _ = _run_refine(args)
    _write_diag_csv(trace, outdir / "diagnostics.csv", args.top_p)
    R, mean_R = rewrite_counts(trace)
    _write_csv(outdir / "rewrites.csv", ["position", "R"], list(enumerate(R)))
    flags = over_refinement_flags(trace)
    _write_csv(
        outdir / "summary.csv",
        ["key", "value"],
        [("mean_rewrites", mean_R), ("churn_steps", " ".join(map(str, flags)) or "none")],
    )
    if not args.no_figures:
        from . import plots

        plots.save_step_diagnostics(trace_diagnostics(trace, args.top_p), outdir / "diagnostics.png")


def cmd_corrupt_stats(args, outdir: Path) -> None:
    config = CorruptionConfig(
        k=args.k, mu=args.mu, sigma=args.sigma, gamma_min=args.gamma_min,
        gamma_max=args.gamma_max, c=args.c, mode=args.mode,
        clip_lognormal=args.clip_lognormal,
    )
    gamma = sample_gamma_vector(args.n, config, args.seed)
    edges = np.linspace(0.0, max(float(gamma.max()), config.gamma_max), args.bins + 1)
    hist, _ = np.histogram(gamma, bins=edges)
    _write_csv(
        outdir / "gamma_hist.csv",
        ["bin_lo", "bin_hi", "count"],
        [(edges[i], edges[i + 1], int(hist[i])) for i in range(args.bins)],
    )
    low = float(np.mean(gamma < config.gamma_min))
    high = float(np.mean(gamma > config.c * config.gamma_max))
    _write_csv(
        outdir / "summary.csv",
        ["roar_target", "frac_below_gamma_min", "frac_above_c_gamma_max", "median"],
        [(1.0 / config.k, low, high, float(np.median(gamma)))],
    )
    if not args.no_figures:
        from . import plots

        plots.save_gamma_histogram(gamma, edges, outdir / "gamma_hist.png")


def cmd_train_converter(args, outdir: Path) -> None:
    emb = make_circle_embeddings(args.K) if args.embedding == "circle" else make_sphere_embeddings(
        args.K, args.dim, args.seed
    )
    tokens, _, z = sample_single_token_pairs(emb, args.n, args.seed, args.mu, args.sigma)
    params, trace = train_converter(tokens, z, emb, init_params(args.K), args.lr, args.n_iters)
    save_params(params, outdir / "params.txt")
    _write_csv(outdir / "loss.csv", ["iteration", "loss"], list(enumerate(trace)))
    kl_rows = [
        (g, mean_kl_to_bayes(params, emb, g, args.n_eval, args.seed + 1))
        for g in (5.0, 20.0)
    ]
    _write_csv(outdir / "kl.csv", ["gamma", "kl_to_bayes"], kl_rows)
    if not args.no_figures:
        from . import plots

        plots.save_loss_curve(trace, outdir / "loss.png")


def cmd_calibration(args, outdir: Path) -> None:
    data, emb = _load_dataset(args)
    reports = []
    rows = []
    for label, power in (("exact", 1.0), ("mis-tempered", 2.0)):
        conf, correct = teacher_forcing_scores(
            data, emb, args.snr, args.n_draws, args.seed, temper_power=power
        )
        rep = calibration_report(conf, correct, args.bins)
        reports.append((label, rep))
        for b in range(args.bins):
            rows.append(
                (label, b, rep.bin_edges[b], rep.bin_edges[b + 1],
                 rep.bin_confidence[b], rep.bin_accuracy[b], int(rep.bin_count[b]))
            )
    _write_csv(
        outdir / "reliability.csv",
        ["posterior", "bin", "lo", "hi", "mean_confidence", "accuracy", "count"],
        rows,
    )
    _write_csv(
        outdir / "ece.csv",
        ["posterior", "ece", "n_scored"],
        [(label, rep.ece, rep.n_scored) for label, rep in reports],
    )
    if not args.no_figures:
        from . import plots

        plots.save_reliability(reports, outdir / "reliability.png")


# ------------------------------------------------------------------- parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_dataset_args(p):
    p.add_argument("--K", type=int, default=5, help="cyclic dataset size")
    p.add_argument("--corpus", default=None, help="path to a whitespace corpus file")
    p.add_argument("--vocab-size", type=int, default=5, help="vocabulary size for --corpus")
    p.add_argument("--embedding", choices=("circle", "sphere"), default="circle")
    p.add_argument("--dim", type=int, default=8, help="sphere embedding dimension")


def build_parser() -> _Parser:
    parser = _Parser(prog="snrlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"snrlab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, required=True, help="master seed (mandatory)")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--config", default=None, help="plain-text key-value override file")
    common.add_argument("--threads", type=int, default=1,
                        help="internal work chunking; never changes results")
    common.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("generate", parents=[common], help="unconditional SDE sampling report")
    _add_dataset_args(p)
    p.add_argument("--n-chains", type=int, default=20000)
    p.add_argument("--gamma-end", type=float, default=50.0)
    p.add_argument("--n-steps", type=int, default=1000)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("nll", parents=[common], help="path-integral NLL report")
    _add_dataset_args(p)
    p.add_argument("--contour", default="both", help="diagonal | ar | both")
    p.add_argument("--sequence-index", type=int, default=0)
    p.add_argument("--gamma-max", type=float, default=50.0)
    p.add_argument("--n-grid", type=int, default=80)
    p.add_argument("--n-mc", type=int, default=4000)
    p.set_defaults(func=cmd_nll)

    refine_common = argparse.ArgumentParser(add_help=False)
    refine_common.add_argument("--preset", default=None, help="named scenario (fig5)")
    refine_common.add_argument("--K", type=int, default=7)
    refine_common.add_argument("--T", type=int, default=128)
    refine_common.add_argument("--strategy", default="cap-loop")
    refine_common.add_argument("--eta-cap", type=float, default=0.010)
    refine_common.add_argument("--gamma-vis", type=float, default=DEFAULT_GAMMA_VIS)
    refine_common.add_argument("--top-p", type=float, default=DEFAULT_TOP_P)

    p = sub.add_parser("refine", parents=[common, refine_common],
                       help="masked-refinement run with trace export")
    p.add_argument("--sweep", type=int, default=0, help="success rate over this many seeds")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("diagnose", parents=[common, refine_common],
                       help="refinement diagnostics, rewrite counts, churn flags")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("corrupt-stats", parents=[common], help="mixed-SNR sampling statistics")
    p.add_argument("--n", type=int, default=200000)
    p.add_argument("--k", type=float, default=10.0)
    p.add_argument("--mu", type=float, default=1.65)
    p.add_argument("--sigma", type=float, default=0.9)
    p.add_argument("--gamma-min", type=float, default=0.5)
    p.add_argument("--gamma-max", type=float, default=50.0)
    p.add_argument("--c", type=float, default=0.9)
    p.add_argument("--mode", default="smoothed")
    p.add_argument("--clip-lognormal", action="store_true")
    p.add_argument("--bins", type=int, default=60)
    p.set_defaults(func=cmd_corrupt_stats)

    p = sub.add_parser("train-converter", parents=[common], help="fit the softmax converter")
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--embedding", choices=("circle", "sphere"), default="circle")
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--n-eval", type=int, default=20000)
    p.add_argument("--mu", type=float, default=1.65)
    p.add_argument("--sigma", type=float, default=0.9)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--n-iters", type=int, default=300)
    p.set_defaults(func=cmd_train_converter)

    p = sub.add_parser("calibration", parents=[common],
                       help="teacher-forcing reliability and ECE report")
    _add_dataset_args(p)
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--n-draws", type=int, default=20000)
    p.add_argument("--bins", type=int, default=15)
    p.set_defaults(func=cmd_calibration)
    return parser


def _apply_config_file(args: argparse.Namespace) -> None:
    if args.config is None:
        return
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise UsageError(f"{path}:{lineno}: expected 'key value'")
        key, value = parts
        attr = key.replace("-", "_")
        if not hasattr(args, attr) or attr in ("func", "subcommand", "config"):
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        current = getattr(args, attr)
        if isinstance(current, bool):
            setattr(args, attr, value.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, attr, int(value))
        elif isinstance(current, float):
            setattr(args, attr, float(value))
        else:
            setattr(args, attr, value)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        _echo_config(outdir, args)
        args.func(args, outdir)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SnrLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
