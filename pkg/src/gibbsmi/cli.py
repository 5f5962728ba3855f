"""Command-line entry point: ``gmi gen-data | train | estimate | reproduce``.

Every subcommand also accepts ``--config FILE``, an INI file whose keys
are flag names (dashes or underscores). Section names are free-form and
only group keys; explicit flags override file values.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import experiment as ex
from . import nn, svg
from .infotheory import layer_names

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("gibbsmi")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from err


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_data_flags(p):
    p.add_argument("--data", required=True, help="GMI1 dataset file, or IDX images file with --labels")
    p.add_argument("--labels", help="IDX labels file (when --data is an IDX images file)")
    p.add_argument("--train-fraction", type=float, default=0.5, help="stratified train share (default 0.5)")
    p.add_argument("--split-seed", type=int, default=0, help="seed of the train/test split")
    p.add_argument(
        "--center", type=_bool, default=True, help="subtract the mean training pixel (default true)"
    )


def build_parser() -> Parser:
    parser = Parser(prog="gmi", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=Parser, required=True)

    p = sub.add_parser("gen-data", help="write the synthetic rotation dataset")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--side", type=int, default=32, help="image edge in pixels (default 32)")
    p.add_argument("--count", type=int, default=512, help="number of images (default 512)")
    p.add_argument("--noise-variance", type=float, default=1.0, help="pixel noise variance (default 1)")
    p.add_argument("--contrast", type=float, default=6.0, help="value range of the base image (default 6)")
    p.add_argument("--base-seed", type=int, default=0, help="seed of the base image")
    p.add_argument("--sample-seed", type=int, default=1, help="seed of the noise")
    p.add_argument("--out", required=True, help="output dataset path; a .preview.svg is written next to it")

    p = sub.add_parser("train", help="train one network and save a checkpoint")
    p.add_argument("--config", help="INI config file")
    _add_data_flags(p)
    p.add_argument("--arch", default="MLP1", help="MLP1..MLP6 or comma-separated hidden sizes")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.03)
    p.add_argument("--batch-size", type=int, default=None, help="default: full batch")
    p.add_argument("--seed", type=int, default=0, help="initialization/shuffle seed")
    p.add_argument("--out", required=True, help="checkpoint path")

    p = sub.add_parser("estimate", help="print the information record of a checkpoint as CSV")
    p.add_argument("--config", help="INI config file")
    _add_data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sigma", type=float, default=1.0, help="subgaussian parameter of the bound")
    p.add_argument("--epoch", type=int, default=0, help="value of the epoch column")
    p.add_argument("--header", type=_bool, default=True, help="print a header line (default true)")

    p = sub.add_parser("reproduce", help="rerun the figure experiments")
    p.add_argument("--config", help="INI config file")
    p.add_argument("figure", choices=["fig3", "fig4"])
    p.add_argument("--dataset", choices=["synthetic", "fmnist"], default="synthetic")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds, run as 0..N-1")
    p.add_argument("--epochs", type=int, default=None, help="default 1000 (synthetic) / 300 (fmnist)")
    p.add_argument("--lr", type=float, default=0.03)
    p.add_argument("--batch-size", type=int, default=None, help="default full batch / 64 for fmnist")
    p.add_argument("--mi-interval", type=int, default=10, help="epochs between MI evaluations")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--fmnist-dir", help="directory holding the Fashion-MNIST IDX files")
    p.add_argument("--subset", type=int, default=2000, help="fmnist training subset size")
    p.add_argument("--out", default="results", help="output directory")
    return parser


def _config_defaults(subparser: argparse.ArgumentParser, path: str) -> dict:
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as err:
        raise UsageError(f"cannot read config {path}: {err}") from err
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config")}
    values = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            dest = key.replace("-", "_")
            action = actions.get(dest)
            if action is None or not action.option_strings:
                raise UsageError(f"unknown config key {key!r} in section [{section}]")
            try:
                values[dest] = action.type(raw) if action.type else raw
            except (ValueError, argparse.ArgumentTypeError) as err:
                raise UsageError(f"invalid value for config key {key!r}: {raw!r}") from err
            if action.choices and values[dest] not in action.choices:
                raise UsageError(f"invalid value for config key {key!r}: {raw!r}")
    return values


def _config_path(argv) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv):
    parser = build_parser()
    choices = parser._subparsers._group_actions[0].choices
    command = next((tok for tok in argv if tok in choices), None)
    path = _config_path(argv)
    if command and path:
        # config values become subcommand defaults, so explicit flags still win
        subparser = choices[command]
        defaults = _config_defaults(subparser, path)
        for action in subparser._actions:
            if action.dest in defaults:
                action.required = False
        subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


# --- helpers --------------------------------------------------------------


def _load_data(args) -> ds.Dataset:
    path = Path(args.data)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    return ds.load_any(path, args.labels)


def _prepared(args) -> ex.PreparedData:
    train, test = ds.split(_load_data(args), args.train_fraction, args.split_seed)
    if args.center:
        return ex.center(train, test)
    return ex.PreparedData(train, test)


def _architecture(spec: str, data: ds.Dataset) -> tuple[int, ...]:
    if spec in ex.ARCHITECTURES:
        arch = ex.ARCHITECTURES[spec]
        if arch[0] != data.dim or arch[-1] != data.num_classes:
            raise UsageError(
                f"{spec} expects {arch[0]} inputs and {arch[-1]} classes, "
                f"data has {data.dim} and {data.num_classes}"
            )
        return arch
    try:
        hidden = _int_list(spec)
    except argparse.ArgumentTypeError as err:
        raise UsageError(str(err)) from err
    if not hidden:
        raise UsageError("--arch needs at least one hidden layer")
    return (data.dim, *hidden, data.num_classes)


# --- subcommands ----------------------------------------------------------


def cmd_gen_data(args) -> int:
    config = ds.SynthConfig(
        side=args.side,
        count=args.count,
        noise_variance=args.noise_variance,
        contrast=args.contrast,
        base_seed=args.base_seed,
        sample_seed=args.sample_seed,
    )
    try:
        config.validate()
    except ValueError as err:
        raise UsageError(f"invalid dataset config: {err}") from err
    data = ds.generate_synthetic(config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.save_dataset(data, out)
    base = ds.generate_base_image(config)
    preview = svg.image_grid(
        [ds.orient(base, k) for k in range(ds.ORIENTATIONS)],
        ["identity", "anti-diagonal", "vertical", "horizontal"],
        cell=max(1, 192 // config.side),
    )
    svg.write(out.with_suffix(".preview.svg"), preview)
    print(f"wrote {out} ({data.count} x {data.dim}, {data.num_classes} classes)")
    return EXIT_OK


def cmd_train(args) -> int:
    data = _prepared(args)
    arch = _architecture(args.arch, data.train)
    params = nn.init_mlp(arch, args.seed)
    cfg = nn.TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed)
    params, losses = nn.train(params, data.train, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(params, out)
    final = losses[-1] if losses else float("nan")
    print(f"wrote {out} (layers {'-'.join(map(str, arch))}, last epoch loss {final:.6g})")
    return EXIT_OK


def cmd_estimate(args) -> int:
    params = nn.load_checkpoint(args.checkpoint)
    data = _prepared(args)
    sizes = params.layer_sizes
    if sizes[0] != data.train.dim or sizes[-1] != data.train.num_classes:
        raise UsageError(
            f"checkpoint expects {sizes[0]} inputs / {sizes[-1]} classes, "
            f"data has {data.train.dim} / {data.train.num_classes}"
        )
    record = ex.evaluate(params, args.epoch, data.train, data.test, args.sigma)
    cols = ex.seed_columns(params.num_hidden)
    row = record.flat()
    writer = csv.writer(sys.stdout, lineterminator="\n")
    if args.header:
        writer.writerow(cols)
    writer.writerow([ex._cell(row[c]) for c in cols])
    return EXIT_OK


def _fmnist_source(args) -> ex.IdxSource:
    if not args.fmnist_dir:
        raise UsageError("--dataset fmnist needs --fmnist-dir")
    root = Path(args.fmnist_dir)

    def find(stem):
        for name in (stem, stem + ".gz"):
            if (root / name).exists():
                return str(root / name)
        raise FileNotFoundError(f"{stem}[.gz] not found in {root}")

    return ex.IdxSource(
        images=find("train-images-idx3-ubyte"),
        labels=find("train-labels-idx1-ubyte"),
        test_images=find("t10k-images-idx3-ubyte"),
        test_labels=find("t10k-labels-idx1-ubyte"),
        subset_size=args.subset,
    )


def _summary_line(name, arts: ex.RunArtifacts) -> str:
    return (
        f"{name}: final L_S={arts.final('loss_train_mean'):.4g} "
        f"I(Y;Yhat)={arts.final('i_y_yhat_mean'):.4f} I(S;W)={arts.final('i_sw_mean'):.4f} bits "
        f"bound={arts.final('bound_mean'):.4f} gap={arts.final('gap_mean'):.4f}"
    )


def cmd_reproduce(args) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    fmnist = args.dataset == "fmnist"
    base = ex.ExperimentConfig(
        epochs=args.epochs if args.epochs is not None else (300 if fmnist else 1000),
        lr=args.lr,
        batch_size=args.batch_size if args.batch_size is not None else (64 if fmnist else None),
        seeds=tuple(range(args.seeds)),
        mi_log_interval=args.mi_interval,
        sigma=args.sigma,
        train_fraction=args.train_fraction,
        split_seed=args.split_seed,
    )
    if fmnist:
        base = replace(base, dataset=_fmnist_source(args))
        names = ["MLP6"]
    else:
        names = ["MLP1"] if args.figure == "fig3" else ["MLP1", "MLP2", "MLP3"]
    out = Path(args.out)
    results = {}
    for name in names:
        config = replace(base, architecture=ex.ARCHITECTURES[name])
        target = out if len(names) == 1 else out / name
        arts = ex.run_experiment(config)
        ex.export(arts, target)
        if arts.meta["excluded_seeds"]:
            log.warning("%s: excluded diverged seeds %s", name, arts.meta["excluded_seeds"])
        results[name] = arts
        print(_summary_line(name, arts))
    if len(names) > 1:
        _write_comparison(results, out)
    return EXIT_OK


def _write_comparison(results: dict[str, ex.RunArtifacts], out: Path) -> None:
    cols = ["i_sw_mean", "gap_mean", "bound_mean", "acc_train_mean", "acc_test_mean"]
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["architecture", "layers"] + [f"final_{c}" for c in cols])
        for name, arts in results.items():
            layers = "-".join(map(str, arts.config.architecture))
            writer.writerow([name, layers] + [ex._cell(arts.final(c)) for c in cols])
    for col, ylabel in (("i_sw_mean", "I(S;W) bits"), ("gap_mean", "acc_train - acc_test"), ("bound_mean", "bound")):
        series = {name: (a.aggregate["epoch"], a.aggregate[col]) for name, a in results.items()}
        svg.write(out / f"compare_{col[:-5]}.svg", svg.line_chart(series, title=col[:-5], ylabel=ylabel))


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "estimate": cmd_estimate,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as err:
        print(f"gmi: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse: --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as err:
        print(f"gmi: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError) as err:
        print(f"gmi: {args.command} failed: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
