"""Command line entry points.

Verbs: ``synth`` (emit a synthetic dataset), ``train``, ``eval``,
``ablate`` (parameter sweep), ``report`` (summarize a run directory).
Options may come from an INI config file ([data]/[train]/[eval]
sections); explicit command line flags win over the file, which wins
over built-in defaults. Every run directory receives an echo of the
effective configuration, which is itself a valid ``--config`` file.

When ``--out`` is omitted the GAITSHAPE_OUT environment variable
supplies the output root.

Exit codes: 0 success, 2 bad configuration, 3 missing or malformed
data, 4 numeric failure during training.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import dataclasses
import os
import sys
from pathlib import Path

from . import data as _data
from . import evaluation as _eval
from . import prior as _prior
from . import trainer as _trainer
from .data import DataError
from .prior import PriorError
from .trainer import TrainConfig, TrainingAbort


class ConfigError(Exception):
    pass


# -------------------------------------------------------------- parsing


def _parse_views(text):
    try:
        return tuple(int(v) for v in str(text).split(",") if str(v).strip() != "")
    except ValueError as exc:
        raise ConfigError(f"bad view list {text!r}") from exc


def _parse_view_split(text) -> tuple[str, str]:
    """Split a 'train=0,18;test=36,54' spec into its two view lists."""
    parts = dict()
    for chunk in str(text).split(";"):
        name, sep, views = chunk.partition("=")
        if not sep:
            raise ConfigError(f"bad view split {text!r} (want train=...;test=...)")
        parts[name.strip().lower()] = views
    if set(parts) != {"train", "test"}:
        raise ConfigError(f"view split needs exactly train= and test=, got {text!r}")
    return parts["train"], parts["test"]


_FUSION_ALIASES = {"ts": "temporal_shift", "avg": "avg_pool", "max": "max_pool"}


def _parse_variants(text) -> dict:
    out = {}
    try:
        for part in text.split(","):
            name, count = part.split(":")
            out[name.strip().lower()] = int(count)
    except ValueError as exc:
        raise ConfigError(f"bad variant spec {text!r} (want name:count,...)") from exc
    return out


def _coerce(value: str, target_type):
    if target_type is bool:
        low = str(value).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad boolean {value!r}")
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    if target_type is tuple:
        return tuple(int(v) for v in str(value).split(","))
    return value


_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _field_type(name):
    py = _TRAIN_FIELDS[name].type
    return {"int": int, "float": float, "bool": bool, "str": str, "tuple": tuple}[py]


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    for name, field in _TRAIN_FIELDS.items():
        flag = "--" + name.replace("_", "-")
        t = _field_type(name)
        if t is bool:
            parser.add_argument(
                flag, dest=name, default=None, action=argparse.BooleanOptionalAction
            )
        else:
            parser.add_argument(flag, dest=name, default=None, type=str)


def _load_ini(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} does not exist")
        cp.read(p)
    return cp


def _build_train_config(cp: configparser.ConfigParser, args) -> TrainConfig:
    values = dataclasses.asdict(TrainConfig())
    if cp.has_section("train"):
        for key, raw in cp.items("train"):
            if key not in _TRAIN_FIELDS:
                raise ConfigError(f"unknown [train] option {key!r}")
            values[key] = _coerce(raw, _field_type(key))
    for name in _TRAIN_FIELDS:
        got = getattr(args, name, None)
        if got is not None:
            values[name] = got if isinstance(got, bool) else _coerce(
                got, _field_type(name)
            )
    fusion = getattr(args, "fusion", None)
    if fusion is not None:
        if getattr(args, "temporal_fusion", None) is not None:
            raise ConfigError("give either --fusion or --temporal-fusion, not both")
        values["temporal_fusion"] = _FUSION_ALIASES[fusion]
    try:
        return TrainConfig(**values)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _data_option(cp, args, key, default=None):
    got = getattr(args, key, None)
    if got is not None:
        return got
    if cp.has_section("data") and cp.has_option("data", key):
        return cp.get("data", key)
    return default


def _echo_config(out_dir: Path, config: TrainConfig, data_opts: dict) -> None:
    cp = configparser.ConfigParser()
    cp["data"] = {k: str(v) for k, v in sorted(data_opts.items()) if v is not None}
    train = {}
    for k, v in sorted(dataclasses.asdict(config).items()):
        train[k] = ",".join(str(x) for x in v) if isinstance(v, (tuple, list)) else str(v)
    cp["train"] = train
    with (out_dir / "config.ini").open("w") as f:
        cp.write(f)


def _resolve_data_opts(cp, args) -> dict:
    root = _data_option(cp, args, "data")
    if root is None:
        raise ConfigError("no dataset root given (--data or [data] root)")
    layout = _data_option(cp, args, "layout", "casia-b")
    scheme = _data_option(cp, args, "scheme", "casiab_74")

    train_views = _data_option(cp, args, "train_views")
    test_views = _data_option(cp, args, "test_views")
    view_split = _data_option(cp, args, "view_split")
    if view_split is not None:
        if train_views is not None or test_views is not None:
            raise ConfigError("--view-split conflicts with --train/--test-views")
        train_views, test_views = _parse_view_split(view_split)
    if (train_views is None) != (test_views is None):
        raise ConfigError("give both train_views and test_views or neither")

    sidecar = _data_option(cp, args, "sidecar")
    if sidecar is None:
        candidate = Path(root) / "priors.tsv"
        sidecar = str(candidate) if candidate.is_file() else None
    return {
        "data": str(root),
        "layout": layout,
        "scheme": scheme,
        "sidecar": sidecar,
        "train_views": train_views,
        "test_views": test_views,
    }


def _index_from_opts(opts: dict, config: TrainConfig | None):
    index = _data.load_dataset(opts["data"], layout=opts["layout"])
    scheme = opts["scheme"]
    if isinstance(scheme, str) and scheme.startswith("explicit:"):
        scheme = [s for s in scheme[len("explicit:"):].split(",") if s]
    _data.split_subjects(index, scheme)
    if index.test_subjects():
        _data.assign_roles(index)
    if opts["train_views"] is not None:
        _data.make_view_split(
            index, _parse_views(opts["train_views"]), _parse_views(opts["test_views"])
        )
    if opts["sidecar"] is not None and config is not None and config.prior_coverage > 0:
        _prior.attach_priors(index, opts["sidecar"], config.prior_coverage, config.seed)
    return index


def _prepare_index(cp, args, config: TrainConfig | None):
    opts = _resolve_data_opts(cp, args)
    return _index_from_opts(opts, config), opts


def _resolve_out(value, what="output directory") -> Path:
    if value is not None:
        return Path(value)
    env = os.environ.get("GAITSHAPE_OUT")
    if env:
        return Path(env)
    raise ConfigError(f"no {what} given (--out or GAITSHAPE_OUT)")


# -------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    out = _resolve_out(args.out, "dataset directory")
    variants = _parse_variants(args.variants) if args.variants else None
    manifest = _data.write_synthetic_dataset(
        out,
        n_subjects=args.subjects,
        views=_parse_views(args.views),
        frames=args.frames,
        seed=args.seed,
        variants=variants,
        edge_slack_probability=args.edge_slack_prob,
        force=args.force,
    )
    print(
        f"wrote {manifest['n_sequences']} sequences "
        f"({manifest['n_subjects']} subjects, {len(manifest['views'])} views, "
        f"{manifest['frames']} frames) to {out}"
    )
    return 0


def _final_eval(state, index, out_dir: Path | None, tag: str = "report"):
    if not (index.gallery_entries() and index.probe_entries()):
        return None
    report = _eval.evaluate_split(state.model, index)
    summary = _eval.summarize(report)
    table = _eval.format_report_table(report)
    if out_dir is not None:
        _eval.write_report_csv(report, out_dir / f"{tag}.csv")
        _eval.write_summary_csv(summary, out_dir / f"{tag}_summary.csv")
        (out_dir / f"{tag}.txt").write_text(table)
    print(table, end="")
    return report


def cmd_train(args) -> int:
    cp = _load_ini(args.config)
    config = _build_train_config(cp, args)
    index, data_opts = _prepare_index(cp, args, config)
    out_dir = _resolve_out(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(out_dir, config, data_opts)

    state = None
    if args.resume:
        state = _trainer.load_checkpoint(args.resume)
        print(f"resuming from iteration {state.iteration}")

    def on_eval(st):
        if args.eval_during_training:
            _final_eval(st, index, out_dir, tag=f"report_{st.iteration}")

    state, records = _trainer.train(
        config, index, out_dir=out_dir, state=state, on_eval=on_eval
    )
    if records:
        last = records[-1]
        print(
            f"finished at iteration {last.iteration}: "
            f"l_id={last.l_id:.4f} total={last.total:.4f}"
        )
    _final_eval(state, index, out_dir)
    return 0


def cmd_eval(args) -> int:
    state = _trainer.load_checkpoint(args.ckpt)
    cp = _load_ini(args.config)
    index, _ = _prepare_index(cp, args, None)
    if not (index.gallery_entries() and index.probe_entries()):
        raise DataError("dataset split defines no gallery/probe entries")
    out_dir = None
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
    loader = _data.SequenceCache()
    gallery = _eval.extract_embeddings(state.model, index.gallery_entries(), loader)
    probe = _eval.extract_embeddings(state.model, index.probe_entries(), loader)
    report = _eval.rank1(gallery, probe)
    summary = _eval.summarize(report)
    print(_eval.format_report_table(report), end="")
    if out_dir is not None:
        _eval.write_report_csv(report, out_dir / "report.csv")
        _eval.write_summary_csv(summary, out_dir / "report_summary.csv")
        (out_dir / "report.txt").write_text(_eval.format_report_table(report))
    if args.dump_embeddings:
        _eval.dump_embeddings(gallery + probe, args.dump_embeddings, args.decimals)
    if args.compare:
        other_state = _trainer.load_checkpoint(args.compare)
        other = _eval.rank1(
            _eval.extract_embeddings(other_state.model, index.gallery_entries(), loader),
            _eval.extract_embeddings(other_state.model, index.probe_entries(), loader),
        )
        deltas = _eval.compare_summaries(_eval.summarize(other), summary)
        for variant in sorted(deltas):
            print(f"delta[{variant}] = {deltas[variant]:+.2f} (this - compared)")
        if out_dir is not None:
            lines = ["variant,delta"] + [
                f"{v},{deltas[v]!r}" for v in sorted(deltas)
            ]
            (out_dir / "compare.csv").write_text("\n".join(lines) + "\n")
    return 0


def _ablation_point(config: TrainConfig, data_opts: dict, run_dir: str) -> dict:
    """Train and evaluate one grid value in its own run directory."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    index = _index_from_opts(data_opts, config)
    _echo_config(run_dir, config, data_opts)
    state, _ = _trainer.train(config, index, out_dir=run_dir)
    report = _final_eval(state, index, run_dir)
    if report is None:
        raise DataError("ablation dataset defines no gallery/probe entries")
    return _eval.summarize(report)


def cmd_ablate(args) -> int:
    cp = _load_ini(args.config)
    if "=" not in args.grid:
        raise ConfigError("grid must look like param=v1,v2,...")
    param, _, raw_values = args.grid.partition("=")
    param = param.strip()
    if param not in _TRAIN_FIELDS:
        raise ConfigError(f"unknown training parameter {param!r}")
    t = _field_type(param)
    values = [
        v if t is str else _coerce(v, t) for v in raw_values.split(",") if v.strip()
    ]
    if not values:
        raise ConfigError("grid lists no values")

    base = _build_train_config(cp, args)
    data_opts = _resolve_data_opts(cp, args)
    out_root = _resolve_out(args.out)
    out_root.mkdir(parents=True, exist_ok=True)

    configs = [dataclasses.replace(base, **{param: v}) for v in values]
    run_dirs = [str(out_root / f"{param}_{v}") for v in values]
    if args.jobs > 1:
        if len(set(run_dirs)) != len(run_dirs):
            raise ConfigError(
                "parallel ablation needs a distinct output directory per value"
            )
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(
                pool.map(_ablation_point, configs, [data_opts] * len(values), run_dirs)
            )
    else:
        summaries = [
            _ablation_point(c, data_opts, d) for c, d in zip(configs, run_dirs)
        ]

    rows = []
    for value, summary in zip(values, summaries):
        for variant, s in sorted(summary.items()):
            rows.append((param, value, variant, s["mean"], s["std"]))
    lines = ["param,value,variant,mean,std"]
    for r in rows:
        lines.append(f"{r[0]},{r[1]},{r[2]},{r[3]!r},{r[4]!r}")
    (out_root / "ablation.csv").write_text("\n".join(lines) + "\n")
    for r in rows:
        print(f"{r[0]}={r[1]}: {r[2]} mean={r[3]:.2f} std={r[4]:.2f}")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    metrics = run_dir / "metrics.csv"
    if not metrics.is_file():
        raise DataError(f"{run_dir} has no metrics.csv; not a run directory")
    lines = metrics.read_text().splitlines()
    print(f"run {run_dir}: {max(0, len(lines) - 1)} logged iterations")
    for line in lines[-min(args.tail, len(lines) - 1):] if len(lines) > 1 else []:
        print("  " + line)
    table = run_dir / "report.txt"
    if table.is_file():
        print(table.read_text(), end="")
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, axes = plt.subplots(1, 2, figsize=(11, 4))
        rows = [line.split(",") for line in lines[1:]]
        its = [int(r[0]) for r in rows]
        axes[0].plot(its, [float(r[1]) for r in rows], label="l_id")
        kd = [(int(r[0]), float(r[2])) for r in rows if r[2] != ""]
        if kd:
            axes[0].plot([x for x, _ in kd], [y for _, y in kd], label="l_kd")
        axes[0].plot(its, [float(r[3]) for r in rows], label="total")
        axes[0].set_xlabel("iteration")
        axes[0].set_ylabel("loss")
        axes[0].legend()
        report_csv = run_dir / "report.csv"
        if report_csv.is_file():
            per_variant: dict[str, list[tuple[int, float]]] = {}
            for line in report_csv.read_text().splitlines()[1:]:
                variant, pv, acc, _ = line.split(",")
                per_variant.setdefault(variant, []).append((int(pv), float(acc)))
            for variant, pts in sorted(per_variant.items()):
                pts.sort()
                axes[1].plot(
                    [p[0] for p in pts], [p[1] for p in pts], marker="o", label=variant
                )
            axes[1].set_xlabel("probe view (deg)")
            axes[1].set_ylabel("rank-1 (%)")
            axes[1].legend()
        fig.tight_layout()
        out_png = run_dir / "report.png"
        fig.savefig(out_png)
        print(f"wrote {out_png}")
    return 0


# -------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaitshape", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic silhouette dataset")
    p.add_argument("--out", default=None, help="defaults to $GAITSHAPE_OUT")
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--views", default="0,30,60,90,120,150")
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variants", default=None, help="e.g. nm:6,bg:2,cl:2")
    p.add_argument("--edge-slack-prob", type=float, default=0.25)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    for name, fn in (("train", cmd_train), ("ablate", cmd_ablate)):
        p = sub.add_parser(name)
        p.add_argument("--data", default=None)
        p.add_argument("--out", default=None, help="defaults to $GAITSHAPE_OUT")
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--layout", default=None, choices=("casia-b", "oumvlp"))
        p.add_argument("--scheme", default=None)
        p.add_argument("--sidecar", default=None)
        p.add_argument("--train-views", dest="train_views", default=None)
        p.add_argument("--test-views", dest="test_views", default=None)
        p.add_argument(
            "--view-split",
            dest="view_split",
            default=None,
            help='e.g. "train=0,18,36;test=54,72"',
        )
        p.add_argument(
            "--fusion",
            choices=tuple(_FUSION_ALIASES),
            default=None,
            help="short form of --temporal-fusion",
        )
        if name == "train":
            p.add_argument("--resume", default=None)
            p.add_argument(
                "--eval-during-training",
                action=argparse.BooleanOptionalAction,
                default=False,
            )
        else:
            p.add_argument("--grid", required=True, help="param=v1,v2,...")
            p.add_argument(
                "--jobs", type=int, default=1, help="grid values trained in parallel"
            )
        _add_train_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--layout", default=None, choices=("casia-b", "oumvlp"))
    p.add_argument("--scheme", default=None)
    p.add_argument("--train-views", dest="train_views", default=None)
    p.add_argument("--test-views", dest="test_views", default=None)
    p.add_argument("--view-split", dest="view_split", default=None)
    p.add_argument("--compare", default=None, help="second checkpoint for deltas")
    p.add_argument("--dump-embeddings", default=None)
    p.add_argument("--decimals", type=int, default=6)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--tail", type=int, default=5)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, PriorError, _eval.EvalError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (TrainingAbort, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
