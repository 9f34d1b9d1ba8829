"""Command-line entry point: ``avtenet <subcommand> [flags]``.

Settings resolve as flag > ``--config`` file > ``AVTENET_SEED`` (seed only) >
built-in default. Exit codes are a stable contract, see ``EXIT``.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path

EXIT = {
    "ok": 0,
    "verify": 1,
    "usage": 2,
    "io": 3,
    "empty": 4,
    "nonfinite": 5,
    "mismatch": 6,
}

NETWORK_NAMES = {"vn": "vn", "an": "an", "avn-fused": "avn_fused", "avn-concat": "avn_concat"}
GRADCHECK_TOL = 1e-4

log = logging.getLogger("avtenet")


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = EXIT[code]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Opt:
    """One overridable setting: a ``--flag`` that a config file may also set."""

    name: str
    type: type
    default: object = None
    help: str = ""
    choices: tuple | None = None

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


def _opts(*specs) -> list:
    return [Opt(*s) for s in specs]


SEED = ("seed", int, 42, "global seed (falls back to $AVTENET_SEED)")

SETTINGS = {
    "gen-data": _opts(
        ("out", str, None, "output directory"),
        SEED,
        ("counts", str, None, "training counts, e.g. RvRa=10,RvFa=10,FvRa=10,FvFa=10"),
        ("test-real", int, 60, "real clips per test subset"),
        ("test-fake", int, 60, "fake clips per test subset (multiple of 6)"),
        ("jobs", int, 1, "worker processes"),
        ("force", _bool, False, "overwrite an existing dataset"),
    ),
    "train": _opts(
        ("network", str, None, "network to train", tuple(NETWORK_NAMES)),
        ("data", str, None, "dataset directory"),
        ("out", str, None, "checkpoint path"),
        ("lr", float, 1e-3, "learning rate"),
        ("epochs", int, 5, "training epochs"),
        ("batch", int, 16, "batch size"),
        SEED,
    ),
    "train-ensemble": _opts(
        ("strategy", str, None, "fusion strategy", ("mv", "asf", "sf", "ff")),
        ("data", str, None, "dataset directory"),
        ("out", str, None, "fusion head checkpoint path"),
        ("lr", float, 2e-3, "learning rate"),
        ("epochs", int, 5, "training epochs"),
        ("batch", int, 16, "batch size"),
        SEED,
    ),
    "eval": _opts(
        ("model", str, None, "evaluate one network", tuple(NETWORK_NAMES)),
        ("ensemble", str, None, "evaluate the ensemble with this strategy", ("mv", "asf", "sf", "ff")),
        ("data", str, None, "dataset directory"),
        ("subset", str, "full", "test subset"),
        ("json", str, None, "write the JSON report here"),
        ("md", str, None, "write the markdown report here"),
        ("dump-embeddings", str, None, "write per-sample embeddings here"),
        ("jobs", int, 1, "inference threads"),
    ),
    "describe": _opts(
        ("ckpt", str, None, "checkpoint to describe"),
    ),
    "gradcheck": _opts(
        ("network", str, None, "network to check", tuple(NETWORK_NAMES)),
        SEED[:2] + (1, "seed for the toy network and batch"),
        ("eps", float, 1e-5, "finite-difference step"),
    ),
}

REQUIRED = {
    "gen-data": ("out",),
    "train": ("network", "data", "out"),
    "train-ensemble": ("strategy", "data", "out"),
    "eval": ("data",),
    "describe": ("ckpt",),
    "gradcheck": ("network",),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}\n{self.format_usage().strip()}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="avtenet", description="Audio-visual forgery detection on synthetic clips.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for command, opts in SETTINGS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="key=value overlay file ('#' comments)")
        for o in opts:
            kwargs = {"dest": o.dest, "default": None, "help": o.help}
            if o.type is _bool:
                kwargs["action"] = "store_const"
                kwargs["const"] = True
            else:
                kwargs["type"] = o.type
                if o.choices:
                    kwargs["choices"] = o.choices
            p.add_argument("--" + o.name, **kwargs)
        if command == "train-ensemble":
            p.add_argument("--components", nargs=3, metavar="CKPT", help="VN, AN and AVN checkpoints")
        if command == "eval":
            p.add_argument("--ckpt", action="extend", nargs="+", default=[],
                           help="network checkpoints, plus the fusion head for sf/ff")
        if command == "gradcheck":
            p.add_argument("--sabotage", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


def read_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError("io", f"cannot read config {path}: {exc.strerror}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError("usage", f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def resolve(command: str, args: argparse.Namespace, env=None) -> dict:
    """Merge flags, config overlay, environment and defaults for ``command``."""
    env = os.environ if env is None else env
    opts = {o.dest: o for o in SETTINGS[command]}
    config = read_config(args.config) if args.config else {}
    unknown = sorted(set(config) - set(opts))
    if unknown:
        raise CliError("usage", f"unknown config keys for {command}: {', '.join(unknown)}")
    settings = {}
    for dest, o in opts.items():
        value = getattr(args, dest)
        if value is None and dest in config:
            try:
                value = o.type(config[dest])
            except ValueError as exc:
                raise CliError("usage", f"config {dest}: {exc}") from exc
            if o.choices and value not in o.choices:
                raise CliError("usage", f"config {dest}: {value!r} not in {', '.join(o.choices)}")
        if value is None and dest == "seed" and env.get("AVTENET_SEED"):
            try:
                value = int(env["AVTENET_SEED"])
            except ValueError as exc:
                raise CliError("usage", f"AVTENET_SEED must be an integer, got {env['AVTENET_SEED']!r}") from exc
        settings[dest] = o.default if value is None else value
    missing = [k for k in REQUIRED[command] if settings.get(k.replace("-", "_")) is None]
    if missing:
        raise CliError("usage", f"{command}: missing --{', --'.join(missing)}")
    return settings


def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(data):
    from .synthdata import Manifest

    path = Path(data)
    path = path / "manifest.jsonl" if path.is_dir() or not path.suffix else path
    try:
        return Manifest.read(path)
    except FileNotFoundError as exc:
        raise CliError("io", f"no manifest at {path}") from exc
    except (OSError, ValueError) as exc:
        raise CliError("io", f"cannot read manifest {path}: {exc}") from exc


def _read_ckpt(path) -> dict:
    from .tensor import checkpoint as ckpt

    try:
        return ckpt.load(path)
    except FileNotFoundError as exc:
        raise CliError("io", f"no such checkpoint: {path}") from exc
    except OSError as exc:
        raise CliError("io", f"cannot read {path}: {exc.strerror}") from exc
    except ckpt.CheckpointError as exc:
        raise CliError("io", f"{path}: {exc}") from exc


# -- subcommands ---------------------------------------------------------

def cmd_gen_data(s: dict, args, out) -> int:
    from .synthdata import GenerationConfig, generate_dataset, parse_counts

    cfg = GenerationConfig(n_test_real=s["test_real"], n_test_fake=s["test_fake"], global_seed=s["seed"])
    try:
        if s["counts"]:
            cfg.train_counts = parse_counts(s["counts"])
        cfg.validate()
    except ValueError as exc:
        raise CliError("usage", str(exc)) from exc
    if s["jobs"] < 1:
        raise CliError("usage", "--jobs must be >= 1")
    root = Path(s["out"])
    if root.exists() and not root.is_dir():
        raise CliError("io", f"{root} exists and is not a directory")
    if root.is_dir() and any(root.iterdir()):
        if not s["force"]:
            raise CliError("io", f"{root} is not empty (pass --force to regenerate)")
        # only remove what a previous run wrote
        shutil.rmtree(root / "media", ignore_errors=True)
        (root / "manifest.jsonl").unlink(missing_ok=True)
    try:
        manifest = generate_dataset(root, cfg, jobs=s["jobs"])
    except OSError as exc:
        raise CliError("io", f"writing {root}: {exc}") from exc
    print(f"records {len(manifest.records)}", file=out)
    print(f"config_digest {manifest.digest}", file=out)
    print(f"manifest_sha256 {_sha(root / 'manifest.jsonl')}", file=out)
    return EXIT["ok"]


def cmd_train(s: dict, args, out) -> int:
    from .harness.training import EmptyTrainingSetError, TrainConfig, train_network
    from .nets import NonFiniteLossError

    manifest = _manifest(s["data"])
    kind = NETWORK_NAMES[s["network"]]
    cfg = TrainConfig(kind, s["lr"], s["batch"], s["epochs"], s["seed"], s["out"])
    try:
        cfg.validate()
    except ValueError as exc:
        raise CliError("usage", str(exc)) from exc

    def on_epoch(k, loss):
        print(f"epoch {k} loss {loss:.6f}", file=out, flush=True)

    try:
        est = train_network(kind, manifest, cfg, on_epoch)
    except EmptyTrainingSetError as exc:
        raise CliError("empty", str(exc)) from exc
    except NonFiniteLossError as exc:
        raise CliError("nonfinite", str(exc)) from exc
    except OSError as exc:
        raise CliError("io", f"writing {s['out']}: {exc}") from exc
    print(f"initial loss {est.initial_loss_:.6f}", file=out)
    print(f"checkpoint {s['out']} sha256 {_sha(s['out'])}", file=out)
    return EXIT["ok"]


def _components(paths) -> tuple:
    """Load three checkpoints as (vn, an, avn) estimators."""
    from .nets.estimators import kinds_in, load_estimator

    by_role = {}
    for p in paths:
        arrays = _read_ckpt(p)
        kinds = kinds_in(arrays)
        if len(kinds) != 1:
            raise CliError("mismatch", f"{p}: expected one network, found {kinds or 'none'}")
        role = "avn" if kinds[0].startswith("avn") else kinds[0]
        if role in by_role:
            raise CliError("mismatch", f"two {role} checkpoints given")
        by_role[role] = load_estimator(arrays)
    missing = [r for r in ("vn", "an", "avn") if r not in by_role]
    if missing:
        raise CliError("mismatch", f"no {', '.join(missing)} checkpoint among components")
    return by_role["vn"], by_role["an"], by_role["avn"]


def cmd_train_ensemble(s: dict, args, out) -> int:
    from .harness.training import EmptyTrainingSetError, TrainConfig, train_ensemble

    if s["strategy"] in ("mv", "asf"):
        raise CliError("usage", f"strategy {s['strategy']} has no parameters to train; "
                                f"use it directly with `eval --ensemble {s['strategy']}`")
    if not args.components:
        raise CliError("usage", "train-ensemble: missing --components VN AN AVN")
    for p in args.components:
        if not Path(p).is_file():
            raise CliError("io", f"no such checkpoint: {p}")
    components = _components(args.components)
    manifest = _manifest(s["data"])
    cfg = TrainConfig("dm", s["lr"], s["batch"], s["epochs"], s["seed"], s["out"])
    try:
        cfg.validate()
    except ValueError as exc:
        raise CliError("usage", str(exc)) from exc
    before = {p: _sha(p) for p in args.components}
    try:
        model = train_ensemble(s["strategy"], components, manifest, cfg, args.components)
    except EmptyTrainingSetError as exc:
        raise CliError("empty", str(exc)) from exc
    except FloatingPointError as exc:
        raise CliError("nonfinite", str(exc)) from exc
    except RuntimeError as exc:
        raise CliError("verify", str(exc)) from exc
    for k, loss in enumerate(model.head_.history, 1):
        print(f"epoch {k} loss {loss:.6f}", file=out)
    for p in args.components:
        after = _sha(p)
        status = "unchanged" if after == before[p] else "CHANGED"
        print(f"component {p} sha256 {after} {status}", file=out)
    print(f"checkpoint {s['out']} sha256 {_sha(s['out'])}", file=out)
    return EXIT["ok"]


def _build_ensemble(strategy: str, paths):
    from .ensemble import TRAINABLE, AVTENet, FusionHead
    from .tensor import checkpoint as ckpt

    nets, head = [], None
    for p in paths:
        arrays = _read_ckpt(p)
        if any(k.startswith("dm.") for k in arrays):
            try:
                head = FusionHead.from_arrays(arrays, strategy)
            except ckpt.CheckpointError as exc:
                raise CliError("mismatch", f"{p}: {exc}") from exc
        else:
            nets.append(p)
    if len(nets) != 3:
        raise CliError("usage", f"--ensemble needs three network checkpoints, got {len(nets)}")
    model = AVTENet(*_components(nets), strategy=strategy)
    if strategy in TRAINABLE:
        if head is None:
            raise CliError("usage", f"--ensemble {strategy} needs a fusion head checkpoint")
        model.head_ = head
    model.classes_ = [0, 1]
    return model


def cmd_eval(s: dict, args, out) -> int:
    from .harness.evaluation import evaluate
    from .nets import load_estimator
    from .synthdata import SUBSETS
    from .tensor import checkpoint as ckpt

    if (s["model"] is None) == (s["ensemble"] is None):
        raise CliError("usage", "eval: give exactly one of --model or --ensemble")
    if s["subset"] not in SUBSETS:
        raise CliError("usage", f"unknown subset {s['subset']!r}; choose from {', '.join(SUBSETS)}")
    if not args.ckpt:
        raise CliError("usage", "eval: missing --ckpt")
    if s["jobs"] < 1:
        raise CliError("usage", "--jobs must be >= 1")
    for p in args.ckpt:
        if not Path(p).is_file():
            raise CliError("io", f"no such checkpoint: {p}")
    if s["model"]:
        if len(args.ckpt) != 1:
            raise CliError("usage", "--model takes one --ckpt")
        try:
            model = load_estimator(_read_ckpt(args.ckpt[0]), NETWORK_NAMES[s["model"]])
        except ckpt.CheckpointError as exc:
            raise CliError("mismatch", f"{args.ckpt[0]}: {exc}") from exc
    else:
        model = _build_ensemble(s["ensemble"], args.ckpt)
    manifest = _manifest(s["data"])
    try:
        report = evaluate(model, manifest, s["subset"], s["dump_embeddings"], jobs=s["jobs"])
    except OSError as exc:
        raise CliError("io", str(exc)) from exc
    md = report.to_markdown()
    try:
        if s["json"]:
            Path(s["json"]).write_text(report.dumps())
        if s["md"]:
            Path(s["md"]).write_text(md)
    except OSError as exc:
        raise CliError("io", f"writing report: {exc}") from exc
    out.write(md)
    return EXIT["ok"]


def describe_arrays(arrays: dict) -> list:
    """``[(prefix, count)]`` per two-level name prefix, metadata excluded."""
    counts = {}
    for name, arr in arrays.items():
        if ".meta." in name:
            continue
        prefix = ".".join(name.split(".")[:2])
        counts[prefix] = counts.get(prefix, 0) + int(arr.size)
    return sorted(counts.items())


def cmd_describe(s: dict, args, out) -> int:
    arrays = _read_ckpt(s["ckpt"])
    rows = describe_arrays(arrays)
    for prefix, n in rows:
        print(f"{prefix} {n}", file=out)
    print(f"total {sum(n for _, n in rows)}", file=out)
    return EXIT["ok"]


def cmd_gradcheck(s: dict, args, out) -> int:
    from .harness.verify import network_gradcheck

    err = network_gradcheck(NETWORK_NAMES[s["network"]], s["seed"], eps=s["eps"], sabotage=args.sabotage)
    ok = err <= GRADCHECK_TOL
    print(f"max_rel_err {err:.3e} {'<=' if ok else '>'} {GRADCHECK_TOL:g}", file=out)
    return EXIT["ok"] if ok else EXIT["verify"]


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "train-ensemble": cmd_train_ensemble,
    "eval": cmd_eval,
    "describe": cmd_describe,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None, out=None, env=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        settings = resolve(args.command, args, env)
        return COMMANDS[args.command](settings, args, out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
