"""Command-line entry point: ``train``, ``evaluate``, ``denoise-dump``, ``capacity``.

Exit codes: 0 success, 2 input/config error, 3 numeric failure, 4 I/O failure.
Options may also come from a flat ``key = value`` file given with ``--config``;
command-line flags override it.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import IDENTITY, CorruptionSet, load_mnist, load_mnist_c
from .errors import FormatError, HopfieldRobustError, NumericError, UsageError
from .evaluation import IdentityModule, evaluate_corruption_set
from .hopfield import capacity_sweep
from .models import Cdae, CnnClassifier, MNIST_MEAN, MNIST_STD, accuracy, train_cdae, train_classifier
from .pooling import Arrangement, HopfieldPooling, PoolingConfig, denoise_batch, train_denoiser
from .report import capacity_csv, encode_pgm, report_csv, report_markdown, write_text
from .tensor import Rng

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(HopfieldRobustError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    mnist_dir: str | None = None
    mnist_c_dir: str | None = None
    out: str = "."
    subset: int | None = None
    epochs: int = 20
    batch: int = 20
    arrangement: str = "singleton"
    workers: int = 1
    convention: str = "both"
    extra: dict = field(default_factory=dict)

    def validate(self, need_mnist: bool = False, need_mnist_c: bool = False) -> None:
        if need_mnist and not self.mnist_dir:
            raise ConfigError("--mnist-dir is required")
        if need_mnist_c and not self.mnist_c_dir:
            raise ConfigError("--mnist-c-dir is required")
        for key in ("mnist_dir", "mnist_c_dir"):
            path = getattr(self, key)
            if path and not Path(path).is_dir():
                raise ConfigError(f"{key.replace('_', '-')} {path!r} does not exist")
        if self.subset is not None and self.subset < 1:
            raise ConfigError("--subset must be positive")
        if self.epochs < 0 or self.batch < 1 or self.workers < 1:
            raise ConfigError("epochs must be >= 0, batch and workers >= 1")
        Arrangement.parse(self.arrangement)

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        d.update(self.extra)
        return d


def parse_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


_TYPES = {"seed": int, "subset": int, "epochs": int, "batch": int, "workers": int}


def build_config(args: argparse.Namespace) -> RunConfig:
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(parse_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("config", "command", "func") or value is None:
            continue
        merged[key] = value
    cfg = RunConfig()
    for key, value in merged.items():
        if hasattr(cfg, key) and key != "extra":
            try:
                setattr(cfg, key, _TYPES.get(key, lambda v: v)(value))
            except ValueError:
                raise ConfigError(f"invalid value for {key}: {value!r}") from None
        else:
            cfg.extra[key] = value
    return cfg


# --------------------------------------------------------------------------
# model (de)serialisation


def model_checkpoint(model, cfg: RunConfig, extra: dict | None = None) -> Checkpoint:
    config = cfg.echo()
    if isinstance(model, HopfieldPooling):
        config["pooling"] = model.config.to_dict()
        config["arrangement"] = str(model.arrangement)
    config.update(extra or {})
    return Checkpoint(model.kind, model.state_dict(), config, cfg.seed)


def model_from_checkpoint(ckpt: Checkpoint):
    if ckpt.kind == "baseline":
        model = CnnClassifier(Rng(0))
    elif ckpt.kind == "cdae":
        model = Cdae(Rng(0))
    elif ckpt.kind == "hopfield":
        arrangement = Arrangement.parse(ckpt.config.get("arrangement", "singleton"))
        model = HopfieldPooling(PoolingConfig(**ckpt.config["pooling"]), Rng(0), arrangement)
    else:
        raise FormatError(f"unknown checkpoint kind {ckpt.kind!r}")
    model.load_state_dict(ckpt.params)
    return model


def load_model(path, expect: tuple[str, ...]):
    ckpt = load_checkpoint(path)
    if ckpt.kind not in expect:
        raise UsageError(f"{path}: checkpoint kind {ckpt.kind!r}, expected one of {expect}")
    return model_from_checkpoint(ckpt), ckpt


def load_denoiser(spec: str | None):
    """``none``, ``identity`` or a path to a hopfield / cdae checkpoint."""
    if spec in (None, "", "none"):
        return None, None
    if spec == "identity":
        return IdentityModule(), None
    return load_model(spec, ("hopfield", "cdae"))


# --------------------------------------------------------------------------
# commands


def _load_split(cfg: RunConfig, split: str):
    ds = load_mnist(cfg.mnist_dir, split)
    if cfg.subset is not None and cfg.subset > len(ds):
        raise ConfigError(f"--subset {cfg.subset} exceeds the {len(ds)} {split} images")
    return ds.subset(cfg.subset)


def cmd_train(args) -> int:
    cfg = build_config(args)
    cfg.validate(need_mnist=True)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    train = _load_split(cfg, "train")
    rng = Rng(cfg.seed)
    init_rng, train_rng = rng.spawn(1), rng.spawn(2)
    rows, timing = [], []
    start = time.perf_counter()

    def log_epoch(epoch, value):
        rows.append((epoch, value))
        timing.append((epoch, time.perf_counter() - start))
        print(f"epoch {epoch}: {value:.6f}", flush=True)

    extra = {}
    if args.kind == "baseline":
        model = CnnClassifier(init_rng)
        train_classifier(model, train, train_rng, cfg.epochs, cfg.batch, on_epoch=log_epoch)
        try:
            acc = accuracy(model, load_mnist(cfg.mnist_dir, "test"))
            extra["clean_test_accuracy"] = round(acc, 4)
            print(f"clean test accuracy: {acc:.2f}%")
        except FileNotFoundError:
            pass
        extra["normalization"] = f"(x - {MNIST_MEAN}) / {MNIST_STD} at classifier input"
        metric = "loss"
    else:
        if args.kind == "hopfield":
            arrangement = Arrangement.parse(cfg.arrangement)
            model = HopfieldPooling(PoolingConfig.for_arrangement(arrangement), init_rng, arrangement)
            train_denoiser(model, train.unit(), train_rng, cfg.epochs, cfg.batch, on_epoch=log_epoch)
        else:
            model = Cdae(init_rng)
            train_cdae(model, train.unit(), train_rng, cfg.epochs, cfg.batch, on_epoch=log_epoch)
        metric = "mse"

    save_checkpoint(out / f"{args.kind}.ckpt", model_checkpoint(model, cfg, extra))
    write_text(out / f"{args.kind}_metrics.csv",
               f"epoch,{metric}\n" + "".join(f"{e},{v!r}\n" for e, v in rows))
    write_text(out / f"{args.kind}_timing.csv",
               "epoch,wall_seconds\n" + "".join(f"{e},{t:.3f}\n" for e, t in timing))
    return EXIT_OK


def _corruption_set(cfg: RunConfig) -> CorruptionSet:
    identity = load_mnist(cfg.mnist_dir, "test")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cs = load_mnist_c(cfg.mnist_c_dir, identity)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return cs.subset(cfg.subset)


def cmd_evaluate(args) -> int:
    cfg = build_config(args)
    cfg.validate(need_mnist=True, need_mnist_c=True)
    if cfg.convention not in ("paper", "eq11", "both"):
        raise ConfigError(f"--convention must be paper, eq11 or both, got {cfg.convention!r}")
    classifier, _ = load_model(args.baseline, ("baseline",))
    module, module_ckpt = load_denoiser(args.module)
    cs = _corruption_set(cfg)
    meta = {
        "seed": cfg.seed,
        "config": json.dumps(cfg.echo(), sort_keys=True),
        "baseline_checkpoint": Path(args.baseline).name,
        "module_checkpoint": Path(args.module).name if module_ckpt else (args.module or "none"),
        "arrangement": module_ckpt.config.get("arrangement", "n/a") if module_ckpt else "n/a",
        "normalization": f"denoiser works on [0, 1] pixels; classifier standardises with "
                         f"mean {MNIST_MEAN}, std {MNIST_STD}",
        "mse_convention": "per-pixel (divided by batch size and pixel count)",
        "missing_corruptions": ", ".join(cs.missing) or "none",
        "pearson_rows": "all rows including identity",
        "tie_rule": "equal max probabilities select the module branch",
    }
    report = evaluate_corruption_set(classifier, module, cs, workers=cfg.workers, metadata=meta)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_text(out / "report.csv", report_csv(report))
    write_text(out / "report.md", report_markdown(report, cfg.convention))
    print(report_markdown(report, cfg.convention))
    return EXIT_OK


def cmd_denoise_dump(args) -> int:
    cfg = build_config(args)
    cfg.validate(need_mnist=True, need_mnist_c=True)
    module, _ = load_denoiser(args.module)
    if module is None:
        raise ConfigError("denoise-dump needs --module (checkpoint path or identity)")
    cs = _corruption_set(cfg)
    names = args.corruptions.split(",") if args.corruptions else [n for n in cs.names() if n != IDENTITY]
    clean = cs[IDENTITY]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in names:
        if name not in cs.names():
            raise ConfigError(f"corruption {name!r} not available")
        ds = cs[name]
        count = min(args.samples, len(ds))
        outputs = denoise_batch(ds.unit()[:count], module)
        for i in range(count):
            (out / f"{name}_{i}_corrupted.pgm").write_bytes(encode_pgm(ds.images[i]))
            (out / f"{name}_{i}_output.pgm").write_bytes(encode_pgm(outputs[i]))
            (out / f"{name}_{i}_clean.pgm").write_bytes(encode_pgm(clean.images[i]))
    return EXIT_OK


def cmd_capacity(args) -> int:
    cfg = build_config(args)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    rng = Rng(cfg.seed)
    classical_k = [int(k) for k in args.classical_k.split(",")]
    modern_k = [int(k) for k in args.modern_k.split(",")]
    rows = capacity_sweep(args.classical_n, classical_k, 0.1, args.trials, rng.spawn(1),
                          networks=("classical",), corruption="flip")
    rows += capacity_sweep(args.modern_n, modern_k, 0.5, args.trials, rng.spawn(2),
                           networks=("modern",), beta=args.beta, corruption="mask")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    text = capacity_csv(rows)
    write_text(out / "capacity.csv", text)
    print(text, end="")
    return EXIT_OK


# --------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    if data:
        p.add_argument("--mnist-dir", help="directory with MNIST IDX files")
        p.add_argument("--mnist-c-dir", help="MNIST-C root (<root>/<corruption>/test_*.npy)")
        p.add_argument("--subset", type=int, help="use only the first N images of each set")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hopfield-robust", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the baseline classifier or a denoiser")
    p.add_argument("kind", choices=("baseline", "hopfield", "cdae"))
    _common(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--arrangement", help="singleton | rows | patches:<p>")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="baseline vs integrated evaluation on MNIST-C")
    _common(p)
    p.add_argument("--baseline", required=True, help="baseline checkpoint")
    p.add_argument("--module", default="none", help="hopfield/cdae checkpoint, 'identity' or 'none'")
    p.add_argument("--workers", type=int)
    p.add_argument("--convention", choices=("paper", "eq11", "both"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("denoise-dump", help="write corrupted/output/clean PGM triplets")
    _common(p)
    p.add_argument("--module", required=True, help="hopfield/cdae checkpoint or 'identity'")
    p.add_argument("--corruptions", help="comma-separated names (default: all)")
    p.add_argument("--samples", type=int, default=3, help="samples per corruption")
    p.set_defaults(func=cmd_denoise_dump)

    p = sub.add_parser("capacity", help="classical vs modern storage-capacity sweep")
    _common(p, data=False)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--classical-n", type=int, default=100)
    p.add_argument("--classical-k", default="1,5,10,14,20,30,40")
    p.add_argument("--modern-n", type=int, default=64)
    p.add_argument("--modern-k", default="1,16,32,64,128")
    p.add_argument("--beta", type=float, default=8.0)
    p.set_defaults(func=cmd_capacity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (HopfieldRobustError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
