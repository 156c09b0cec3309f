"""Pipeline command line: one executable, one subcommand per stage.

Every subcommand reads prior artifacts by path and writes its outputs
into --out-dir under fixed names, alongside a config.txt recording the
resolved settings for provenance.  Options may also come from a flat
key-value config file (--config); explicit command-line flags win.

Exit codes: 0 success, 1 usage, 2 validation failure, 3 I/O error,
4 numeric error (e.g. AUROC undefined on single-class labels).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from .audit import build_proposals, read_proposals, write_proposals
from .dataio import (
    FeatureTable,
    IngestError,
    load_manifest,
    read_feature_table,
    read_frames,
    write_feature_table,
)
from .features import LMD_FEATURES, compute_features, feature_set, spec_custom
from .metrics import (
    MetricError,
    correlation_export,
    correlation_table,
    evaluate_classifier,
    evaluate_regressor,
    reliability_export,
    scatter_export,
    write_report,
)
from .models import ModelError, fit, load_model, predict_table, save_model
from .nms import greedy_nms, match_to_gt
from .selection import greedy_select, write_trace
from .server import ReviewState, make_server
from .synth import generate_synthetic_dataset, profile_config

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

PORT_ENV_VAR = "LIDARQC_PORT"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class Parser(argparse.ArgumentParser):
    """argparse that exits 1 on usage errors instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_config_file(path: str) -> dict:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}", EXIT_IO) from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value", EXIT_VALIDATION)
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _coerce_option(action: argparse.Action, raw: str):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(action, argparse._AppendAction):
        return [part.strip() for part in raw.split(",") if part.strip()]
    if action.type is not None:
        return action.type(raw)
    return raw


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    probe, _ = parser.parse_known_args(argv)
    config_path = getattr(probe, "config", None)
    if config_path:
        subparsers = next(
            a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
        )
        subparser = subparsers.choices[probe.command]
        known = {a.dest: a for a in subparser._actions}
        file_values = _load_config_file(config_path)
        unknown = sorted(set(file_values) - set(known))
        if unknown:
            raise CliError(
                f"{config_path}: unknown option(s) {', '.join(unknown)}", EXIT_VALIDATION
            )
        coerced = {}
        for key, raw in file_values.items():
            try:
                coerced[key] = _coerce_option(known[key], raw)
            except (TypeError, ValueError) as exc:
                raise CliError(
                    f"{config_path}: bad value for {key}: {exc}", EXIT_VALIDATION
                ) from exc
        subparser.set_defaults(**coerced)
    return parser.parse_args(argv)


def _write_provenance(out_dir: Path, args: argparse.Namespace, skip=("config",)) -> None:
    lines = []
    for key in sorted(vars(args)):
        if key in skip or key == "func":
            continue
        lines.append(f"{key} = {getattr(args, key)}")
    (out_dir / "config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_hyper(pairs: list[str]) -> dict:
    import ast

    hyper = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise CliError(f"--hyper expects key=value, got {pair!r}", EXIT_USAGE)
        key, value = pair.split("=", 1)
        try:
            hyper[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            hyper[key] = value
    return hyper


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    out = _out_dir(args)
    overrides = dict(
        n_frames=args.frames,
        deletion_rate=args.deletion_rate,
        train_fraction=args.train_fraction,
    )
    if args.objects_per_frame is not None:
        overrides["objects_per_frame"] = args.objects_per_frame
    config = profile_config(args.profile, **overrides)
    generate_synthetic_dataset(config, args.seed, out)
    _write_provenance(out, args)
    print(f"wrote synthetic dataset with {args.frames} frames to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    manifest = load_manifest(args.manifest)
    n_frames = 0
    n_detections = 0
    n_gt = 0
    for frame in read_frames(manifest, strict=not args.lenient):
        n_frames += 1
        n_detections += len(frame.detections)
        n_gt += len(frame.ground_truth)
    print(
        f"ok: {n_frames} frames, {n_detections} detections, {n_gt} annotations, "
        f"{manifest.class_count} classes"
    )
    return EXIT_OK


def cmd_features(args) -> int:
    out = _out_dir(args)
    manifest = load_manifest(args.manifest)
    spec = feature_set(args.feature_set)
    rows = []
    for frame in read_frames(manifest, split=args.split, strict=not args.lenient):
        nms = greedy_nms(
            frame.detections,
            overlap_metric=args.nms_metric,
            threshold=args.nms_threshold,
            score_floor=args.score_floor,
            class_aware=args.class_aware_nms,
        )
        survivors = [frame.detections[i] for i in nms.survivors]
        matches = match_to_gt(survivors, frame.ground_truth, class_aware=args.class_aware)
        rows.extend(
            compute_features(
                frame, nms, matches, exclude_self_from_prop_stats=args.exclude_self
            )
        )
    table = FeatureTable.from_rows(rows, LMD_FEATURES)
    if spec.feature_names != LMD_FEATURES:
        table = table.select(spec.feature_names)
    write_feature_table(table, out / "features.tsv")
    _write_provenance(out, args)
    print(f"wrote {len(table)} rows x {len(table.feature_names)} features")
    return EXIT_OK


def cmd_fit(args) -> int:
    out = _out_dir(args)
    table = read_feature_table(args.table)
    if args.feature_set != "all":
        table = table.select(feature_set(args.feature_set).feature_names)
    y = table.tp if args.task == "classification" else table.iou
    model = fit(
        args.task,
        args.family,
        table.values,
        y,
        table.feature_names,
        hyper=_parse_hyper(args.hyper),
        seed=args.seed,
    )
    save_model(model, out / "model.json")
    _write_provenance(out, args)
    print(f"fitted {args.family} {args.task} model on {len(table)} rows")
    return EXIT_OK


def cmd_eval(args) -> int:
    out = _out_dir(args)
    table = read_feature_table(args.table)
    model = load_model(args.model)
    predictions = predict_table(model, table)
    if model.task == "classification":
        report = evaluate_classifier(
            predictions, table.tp, feature_set=args.label or "", family=model.family
        )
        reliability_export(report, out / "reliability.tsv")
    else:
        report = evaluate_regressor(
            predictions, table.iou, feature_set=args.label or "", family=model.family
        )
        scatter_export(predictions, table.iou, out / "scatter.tsv")
    write_report(report, out / "report.tsv")
    _write_provenance(out, args)
    for key in ("accuracy", "auroc", "r_squared", "ece", "mce"):
        value = getattr(report, key)
        if value is not None:
            print(f"{key} = {value:.6f}")
    return EXIT_OK


def cmd_correlate(args) -> int:
    out = _out_dir(args)
    table = read_feature_table(args.table)
    corr = correlation_table(table)
    correlation_export(corr, out / "correlations.tsv")
    _write_provenance(out, args)
    for name, r in corr.entries[: args.top]:
        print(f"{name}\t{r:+.4f}")
    return EXIT_OK


def cmd_select(args) -> int:
    out = _out_dir(args)
    train = read_feature_table(args.train_table)
    eval_ = read_feature_table(args.eval_table)
    candidates = None
    if args.candidates:
        candidates = spec_custom([c.strip() for c in args.candidates.split(",")]).feature_names
    trace = greedy_select(
        train,
        eval_,
        candidates=candidates,
        budget=args.budget,
        task=args.task,
        family=args.family,
        metric=args.metric,
        hyper=_parse_hyper(args.hyper),
        seed=args.seed,
    )
    write_trace(trace, out / "trace.tsv")
    _write_provenance(out, args)
    for step, (name, value) in enumerate(trace.steps, start=1):
        print(f"{step}\t{name}\t{value:.6f}")
    print(f"full set\t{trace.full_set_value:.6f}")
    return EXIT_OK


def cmd_audit(args) -> int:
    out = _out_dir(args)
    table = read_feature_table(args.table)
    predictions = None
    if args.method == "lmd":
        if not args.model:
            raise CliError("--model is required for the lmd ranking", EXIT_USAGE)
        model = load_model(args.model)
        predictions = predict_table(model, table)
    proposals = build_proposals(
        table, predictions, args.method, args.k, seed=args.seed,
        crop_radius=args.crop_radius,
    )
    if not proposals:
        print("no false positives: proposal list is empty")
    write_proposals(proposals, out / "proposals.jsonl")
    _write_provenance(out, args)
    print(f"wrote {len(proposals)} proposals ranked by {args.method}")
    return EXIT_OK


def cmd_registry(args) -> int:
    for name in LMD_FEATURES:
        print(name)
    return EXIT_OK


def cmd_serve(args) -> int:
    manifest = load_manifest(args.manifest)
    proposals = read_proposals(args.proposals)
    port = args.port
    if port is None:
        port = int(os.environ.get(PORT_ENV_VAR, "8075"))
    state = ReviewState(
        proposals=proposals,
        manifest=manifest,
        ledger_path=Path(args.ledger),
        ui_dir=Path(args.ui_dir) if args.ui_dir else None,
    )
    server = make_server(state, host=args.host, port=port)
    host, actual_port = server.server_address[:2]
    print(f"review service listening on http://{host}:{actual_port}/v1/proposals")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> Parser:
    parser = Parser(prog="lidarqc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lidarqc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", help="flat key=value config file; flags win")
        return p

    p = add("synth", cmd_synth, "generate a seeded synthetic dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--profile", default="medium", help="noise profile: none, low, medium")
    p.add_argument("--frames", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deletion-rate", type=float, default=0.0)
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--objects-per-frame", type=float, default=None)

    p = add("validate", cmd_validate, "strictly validate a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--lenient", action="store_true", help="report and skip bad frames")

    p = add("features", cmd_features, "replay NMS and compute feature rows")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", default=None, help="train-meta or test-meta; all when omitted")
    p.add_argument("--feature-set", default="lmd", help="lmd, box, or score")
    p.add_argument("--nms-metric", default="bev", choices=("bev", "3d"))
    p.add_argument("--nms-threshold", type=float, default=0.5)
    p.add_argument("--score-floor", type=float, default=0.1)
    p.add_argument("--class-aware", action="store_true", default=True,
                   help="class-aware ground-truth matching (default)")
    p.add_argument("--class-agnostic", dest="class_aware", action="store_false")
    p.add_argument("--class-aware-nms", action="store_true", default=False)
    p.add_argument("--exclude-self", action="store_true", default=False,
                   help="drop the survivor from its own pre-image statistics")
    p.add_argument("--lenient", action="store_true")

    p = add("fit", cmd_fit, "fit a meta model on a feature table")
    p.add_argument("--table", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--task", required=True, choices=("classification", "regression"))
    p.add_argument("--family", required=True,
                   choices=("logreg", "ridge", "forest", "gbt", "mlp"))
    p.add_argument("--feature-set", default="all",
                   help="restrict to a named set before fitting: lmd, box, score")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hyper", action="append", default=[], metavar="KEY=VALUE")

    p = add("eval", cmd_eval, "evaluate a model on a feature table")
    p.add_argument("--table", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--label", default=None, help="feature-set label for the report")

    p = add("correlate", cmd_correlate, "feature/target correlation table")
    p.add_argument("--table", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--top", type=int, default=12)

    p = add("select", cmd_select, "greedy forward feature selection")
    p.add_argument("--train-table", required=True)
    p.add_argument("--eval-table", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--budget", type=int, default=10)
    p.add_argument("--task", default="classification",
                   choices=("classification", "regression"))
    p.add_argument("--family", default="gbt",
                   choices=("logreg", "ridge", "forest", "gbt", "mlp"))
    p.add_argument("--metric", default=None, help="auroc or r_squared")
    p.add_argument("--candidates", default=None, help="comma-separated feature names")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hyper", action="append", default=[], metavar="KEY=VALUE")

    p = add("audit", cmd_audit, "rank annotation-error proposals")
    p.add_argument("--table", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--method", default="lmd", choices=("lmd", "score", "random"))
    p.add_argument("--model", default=None, help="meta model for the lmd ranking")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crop-radius", type=float, default=15.0)

    p = add("registry", cmd_registry, "print the canonical feature registry")

    p = add("serve", cmd_serve, "serve the review queue over HTTP")
    p.add_argument("--manifest", required=True)
    p.add_argument("--proposals", required=True)
    p.add_argument("--ledger", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None,
                   help=f"default from ${PORT_ENV_VAR} or 8075")
    p.add_argument("--ui-dir", default=None, help="serve these static files at /")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        try:
            args = _apply_config(parser, list(argv) if argv is not None else sys.argv[1:])
        except SystemExit as exc:  # argparse already printed usage/help
            return int(exc.code or 0)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except IngestError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MetricError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except KeyError as exc:
        print(f"validation error: unknown name {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
