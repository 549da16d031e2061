"""Module containing the bdry command line interface."""

import argparse
import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING, Any

from bdrylib import __version__
from bdrylib.attack.iattack import ENorm
from bdrylib.attack.search import (
    boundary_search_ensemble,
    load_attack_configs,
)
from bdrylib.attribution import (
    DAgiConfig,
    EAttrMethod,
    IGConfig,
    attribute,
    load_attribution,
    save_attribution,
)
from bdrylib.config import RunConfig, format_value
from bdrylib.errors import BdryError, ConfigError
from bdrylib.experiments.alignment import run_alignment
from bdrylib.experiments.common import find_boundary, instance_id
from bdrylib.experiments.correlation import run_correlation
from bdrylib.experiments.dataset import KINDS, synth_dataset
from bdrylib.experiments.localization import (
    METRIC_COLUMNS,
    run_localization,
    score_map,
)
from bdrylib.experiments.report import (
    DExperimentReport,
    write_report,
    write_rows_csv,
    write_table_csv,
)
from bdrylib.experiments.sensitivity import (
    build_polarity_detector,
    run_baseline_sensitivity,
)
from bdrylib.experiments.smoothing import run_smoothing
from bdrylib.experiments.train import ARCHS, train_toy
from bdrylib.logger import logger
from bdrylib.metrics import read_boxes
from bdrylib.proto.netformat import load_model, save_model
from bdrylib.proto.tensorformat import load_tensor, save_tensor
from bdrylib.render import DEFAULT_BLUR, render_heatmap

if TYPE_CHECKING:
    from bdrylib.attack.iattack import DAttackConfig
    from bdrylib.experiments.dataset import ToyDataset
    from bdrylib.net import Network

# run options, kept out of the configuration echo
_NOT_KEYS = (
    "command",
    "config",
    "experiment",
    "func",
    "out",
    "threads",
    "verbose",
)

NET_SUFFIX = ".bnet"
TENSOR_SUFFIX = ".bten"
MODEL_NAME = "model" + NET_SUFFIX
HEATMAP_DIR = "heatmaps"
# upscaling of experiment heatmaps
HEATMAP_SCALE = 16

EXPERIMENTS = (
    "alignment",
    "localization",
    "correlation",
    "smoothing",
    "baseline-sensitivity",
)

_AGI_DEFAULTS: dict[str, Any] = {
    "agi_eps": 0.5,
    "agi_topk": 10,
    "agi_iters": 15,
    "agi_step": 0.05,
}

ATTRIBUTE_DEFAULTS: dict[str, Any] = {
    "model": None,
    "input": None,
    "method": "sm",
    "steps": 20,
    "sigma": 0.15,
    "samples": 50,
    "attacks": "toy",
    "clip": [0.0, 1.0],
    "seed": 0,
    **_AGI_DEFAULTS,
}

BOUNDARY_DEFAULTS: dict[str, Any] = {
    "model": None,
    "input": None,
    "attacks": "toy",
    "clip": [0.0, 1.0],
    "seed": 0,
}

EVALUATE_DEFAULTS: dict[str, Any] = {
    "attributions": None,
    "boxes": None,
    "seed": 0,
}

RENDER_DEFAULTS: dict[str, Any] = {
    "attribution": None,
    "blur": DEFAULT_BLUR,
    "scale": 1,
    "gray": False,
    "seed": 0,
}

TRAIN_DEFAULTS: dict[str, Any] = {
    "dataset": "blobs2d",
    "n": 200,
    "arch": "mlp16",
    "epochs": 100,
    "lr": 0.05,
    "robust_eps": None,
    "norm": "l2",
    "seed": 0,
}


def _experiment_defaults(name: str) -> dict[str, Any]:
    """Get the accepted keys of an experiment with their defaults."""
    base: dict[str, Any] = {"models": None, "n": 20, "seed": 0}
    search: dict[str, Any] = {"attacks": "toy", "steps": 20}
    if name == "alignment":
        return {**base, "dataset": "blobs2d", **search, **_AGI_DEFAULTS}
    if name == "localization":
        return {
            **base,
            "dataset": "patches8x8",
            **search,
            **_AGI_DEFAULTS,
            "methods": [m.value for m in EAttrMethod],
            "sigma": 0.15,
            "samples": 50,
            "heatmaps": 2,
        }
    if name == "correlation":
        return {
            **base,
            "dataset": "patches8x8",
            **search,
            **_AGI_DEFAULTS,
            "heatmaps": 2,
        }
    if name == "smoothing":
        return {
            **base,
            "dataset": "blobs2d",
            "sigmas": [0.0, 0.1, 0.25, 0.5, 1.0],
            "n_noise": 50,
            "eps": 3.0,
            "iters": 40,
            "noise_seed": 2020,
        }
    assert name == "baseline-sensitivity"
    return {**base, "dataset": "polarity8x8", **search, "heatmaps": 2}


###############################################################################
# Helpers
###############################################################################


def _resolve(
    args: argparse.Namespace, command: str, defaults: dict[str, Any]
) -> RunConfig:
    """Get the run configuration: defaults, then the file, then flags."""
    cfg = RunConfig(command, defaults)
    if args.config:
        cfg.load_file(args.config)
    cfg.override(
        {k: v for k, v in vars(args).items() if k not in _NOT_KEYS}
    )
    return cfg


def _need(cfg: RunConfig, key: str) -> Any:
    value = cfg[key]
    if value is None:
        raise ConfigError(f"{cfg.command}: '{key}' is required")
    return value


def _as_list(value: Any) -> list[Any]:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _clip(cfg: RunConfig) -> tuple[float, float]:
    clip = _as_list(cfg["clip"])
    if len(clip) != 2:
        raise ConfigError("clip needs two values")
    return float(clip[0]), float(clip[1])


def _attacks(
    cfg: RunConfig, clip: tuple[float, float] | None
) -> "list[DAttackConfig]":
    spec = cfg["attacks"]
    if spec is None or str(spec).lower() == "none":
        return []
    return load_attack_configs(str(spec), clip, int(cfg["seed"]))


def _agi(cfg: RunConfig) -> DAgiConfig:
    return DAgiConfig(
        float(cfg["agi_eps"]),
        int(cfg["agi_topk"]),
        int(cfg["agi_iters"]),
        float(cfg["agi_step"]),
    )


def _method(value: Any) -> EAttrMethod:
    try:
        return EAttrMethod(str(value))
    except ValueError as exc:
        raise ConfigError(f"unknown attribution method '{value}'") from exc


def _outdir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


###############################################################################
# Subcommands
###############################################################################


def cmd_attribute(args: argparse.Namespace) -> int:
    """Compute an attribution map of one input."""
    cfg = _resolve(args, "attribute", ATTRIBUTE_DEFAULTS)
    net = load_model(_need(cfg, "model"))
    x = load_tensor(_need(cfg, "input"))
    method = _method(cfg["method"])
    clip = _clip(cfg)

    boundary = None
    if method.needs_boundary:
        boundary = boundary_search_ensemble(net, x, _attacks(cfg, clip))
    amap = attribute(
        net,
        x,
        method,
        boundary,
        IGConfig(int(cfg["steps"])),
        _agi(cfg),
        float(cfg["sigma"]),
        int(cfg["samples"]),
        int(cfg["seed"]),
        clip,
    )

    outdir = _outdir(args)
    stem = Path(cfg["input"]).stem
    save_attribution(amap, outdir / f"{stem}-{method.value}{TENSOR_SUFFIX}")
    cfg.write_echo(outdir)
    return 0


def cmd_boundary(args: argparse.Namespace) -> int:
    """Search the closest decision boundary of one input."""
    cfg = _resolve(args, "boundary", BOUNDARY_DEFAULTS)
    net = load_model(_need(cfg, "model"))
    x = load_tensor(_need(cfg, "input"))
    res = boundary_search_ensemble(net, x, _attacks(cfg, _clip(cfg)))

    outdir = _outdir(args)
    stem = Path(cfg["input"]).stem
    save_tensor(res.adversarial, outdir / f"{stem}-adv{TENSOR_SUFFIX}")
    record = [
        f"success = {format_value(res.success)}",
        f"distance = {format_value(res.distance)}",
        f"method = {res.method}",
        f"label = {res.label}",
        f"refined = {format_value(res.refined)}",
    ]
    (outdir / f"{stem}-boundary.txt").write_text("\n".join(record) + "\n")
    cfg.write_echo(outdir)
    if res.success:
        logger.info("boundary at distance %.6g (%s)", res.distance, res.method)
    else:
        logger.info("no boundary found, fallback iterate written")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Score a directory of attribution maps against bounding boxes."""
    cfg = _resolve(args, "evaluate", EVALUATE_DEFAULTS)
    attr_dir = Path(_need(cfg, "attributions"))
    boxes = read_boxes(_need(cfg, "boxes"))

    report = DExperimentReport("metrics", list(METRIC_COLUMNS))
    missing: list[str] = []
    for path in sorted(attr_dir.glob(f"*{TENSOR_SUFFIX}")):
        iid = path.stem.rsplit("-", 1)[0]
        if iid not in boxes:
            missing.append(iid)
            continue
        amap = load_attribution(path)
        status, values = score_map(amap, boxes[iid])
        report.add(iid, amap.method.value, status, **values)
    if missing:
        logger.warning(
            "skipped %d maps without a box: %s",
            len(missing),
            ", ".join(missing),
        )
    report.summarize()

    outdir = _outdir(args)
    write_rows_csv(report, outdir / "metrics.csv", status=False)
    write_table_csv(report, outdir / "metrics-table.csv")
    cfg.write_echo(outdir)
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    """Render an attribution tensor as a heatmap image."""
    cfg = _resolve(args, "render", RENDER_DEFAULTS)
    src = Path(_need(cfg, "attribution"))
    values = load_tensor(src)
    gray = bool(cfg["gray"])

    outdir = _outdir(args)
    dst = outdir / (src.stem + (".pgm" if gray else ".ppm"))
    render_heatmap(values, dst, float(cfg["blur"]), int(cfg["scale"]), gray)
    cfg.write_echo(outdir)
    return 0


def cmd_train_toy(args: argparse.Namespace) -> int:
    """Train a toy network on a synthetic dataset."""
    cfg = _resolve(args, "train-toy", TRAIN_DEFAULTS)
    seed = int(cfg["seed"])
    dataset = synth_dataset(str(cfg["dataset"]), int(cfg["n"]), seed)
    robust = cfg["robust_eps"]
    try:
        norm = ENorm(str(cfg["norm"]))
    except ValueError as exc:
        raise ConfigError(f"unknown norm '{cfg['norm']}'") from exc

    net = train_toy(
        dataset,
        str(cfg["arch"]),
        int(cfg["epochs"]),
        float(cfg["lr"]),
        None if robust is None else float(robust),
        norm,
        seed,
    )
    outdir = _outdir(args)
    save_model(net, outdir / MODEL_NAME)
    cfg.write_echo(outdir)
    return 0


def _models(cfg: RunConfig, name: str) -> "list[tuple[str, Network]]":
    paths = [str(p) for p in _as_list(cfg["models"])]
    if not paths:
        if name == "baseline-sensitivity":
            return [("detector", build_polarity_detector())]
        raise ConfigError(f"{name}: 'models' is required")
    tags = [Path(p).stem for p in paths]
    if len(set(tags)) < len(tags):
        # train-toy always writes model.bnet, use the run directories
        tags = [Path(p).parent.name or Path(p).stem for p in paths]
    if len(set(tags)) < len(tags):
        msg = f"{name}: models need distinct file or directory names"
        raise ConfigError(msg)
    return [(tag, load_model(p)) for tag, p in zip(tags, paths)]


def _single(models: "list[tuple[str, Network]]", name: str) -> "Network":
    if len(models) != 1:
        raise ConfigError(f"{name} takes exactly one model")
    return models[0][1]


def _render_samples(
    net: "Network",
    dataset: "ToyDataset",
    methods: list[EAttrMethod],
    configs: "list[DAttackConfig]",
    cfg: RunConfig,
    rundir: Path,
) -> None:
    """Render heatmaps of the first correctly classified instances."""
    count = int(cfg.params.get("heatmaps", 0))
    if count <= 0 or len(dataset.input_shape) != 3:
        return
    outdir = rundir / HEATMAP_DIR
    outdir.mkdir(exist_ok=True)
    ig_cfg = IGConfig(int(cfg["steps"]))
    agi_cfg = _agi(cfg) if "agi_eps" in cfg.params else None
    sg_sigma = float(cfg.params.get("sigma", 0.15))
    sg_samples = int(cfg.params.get("samples", 50))
    done = 0
    for index in range(len(dataset)):
        if done >= count:
            break
        x = dataset.inputs[index]
        if net.predict(x) != dataset.labels[index]:
            continue
        boundary = None
        if any(m.needs_boundary for m in methods) and configs:
            boundary = find_boundary(net, dataset, index, configs)
        for m in methods:
            if m.needs_boundary and not (boundary and boundary.success):
                continue
            amap = attribute(
                net,
                x,
                m,
                boundary,
                ig_cfg,
                agi_cfg,
                sg_sigma=sg_sigma,
                sg_samples=sg_samples,
                seed=int(cfg["seed"]),
                clip=dataset.domain.clip,
            )
            path = outdir / f"{instance_id(index)}-{m.value}.ppm"
            render_heatmap(amap.values, path, scale=HEATMAP_SCALE)
        done += 1


def cmd_experiment(args: argparse.Namespace) -> int:
    """Run one experiment into a run directory named by its config."""
    name = args.experiment
    cfg = _resolve(args, name, _experiment_defaults(name))
    seed = int(cfg["seed"])
    dataset = synth_dataset(str(cfg["dataset"]), int(cfg["n"]), seed)
    models = _models(cfg, name)
    threads = args.threads
    params = cfg.params

    configs: "list[DAttackConfig]" = []
    if "attacks" in params:
        configs = _attacks(cfg, dataset.domain.clip)
    ig_cfg = IGConfig(int(cfg["steps"])) if "steps" in params else None
    agi_cfg = _agi(cfg) if "agi_eps" in params else None
    shown = [EAttrMethod.SM, EAttrMethod.IG, EAttrMethod.BIG]

    if name == "alignment":
        report = run_alignment(
            models, dataset, configs, ig_cfg, agi_cfg, threads
        )
    elif name == "localization":
        shown = [_method(m) for m in _as_list(cfg["methods"])]
        report = run_localization(
            _single(models, name),
            dataset,
            shown,
            configs,
            ig_cfg,
            agi_cfg,
            seed,
            threads,
            float(cfg["sigma"]),
            int(cfg["samples"]),
        )
    elif name == "correlation":
        report = run_correlation(
            _single(models, name), dataset, configs, ig_cfg, agi_cfg, threads
        )
    elif name == "smoothing":
        report = run_smoothing(
            _single(models, name),
            dataset,
            [float(s) for s in _as_list(cfg["sigmas"])],
            int(cfg["n_noise"]),
            float(cfg["eps"]),
            int(cfg["iters"]),
            int(cfg["noise_seed"]),
            threads,
        )
    else:
        report = run_baseline_sensitivity(
            _single(models, name), dataset, configs, ig_cfg, threads
        )

    report.config_echo = cfg.echo()
    rundir = _outdir(args) / cfg.run_name(name)
    rundir.mkdir(parents=True, exist_ok=True)
    write_report(report, rundir)
    if name != "alignment" and name != "smoothing":
        _render_samples(models[0][1], dataset, shown, configs, cfg, rundir)
    logger.info("run directory %s", rundir)
    return 0


###############################################################################
# Parser
###############################################################################


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument(
        "--threads", type=int, default=1, help="worker threads"
    )
    common.add_argument(
        "-v", "--verbose", action="store_true", help="debug logging"
    )
    return common


def _flag(parser: argparse.ArgumentParser, name: str, **kwargs: Any) -> None:
    """Add an optional flag whose absence is None."""
    parser.add_argument(name, default=None, **kwargs)


def _add_search_flags(
    parser: argparse.ArgumentParser, agi: bool = True
) -> None:
    _flag(parser, "--attacks", help="attack preset or configuration file")
    _flag(parser, "--steps", type=int, help="IG path steps")
    if not agi:
        return
    _flag(parser, "--agi-eps", type=float)
    _flag(parser, "--agi-topk", type=int)
    _flag(parser, "--agi-iters", type=int)
    _flag(parser, "--agi-step", type=float)


def _add_experiment_flags(parser: argparse.ArgumentParser, name: str) -> None:
    """Add the flags of the keys an experiment accepts."""
    _flag(parser, "--models", type=_csv, help="comma separated model files")
    _flag(parser, "--dataset", choices=KINDS)
    _flag(parser, "--n", type=int, help="dataset size")
    if name == "smoothing":
        _flag(parser, "--sigmas", type=_csv_float)
        _flag(parser, "--n-noise", type=int)
        _flag(parser, "--eps", type=float)
        _flag(parser, "--iters", type=int)
        _flag(parser, "--noise-seed", type=int)
        return

    _add_search_flags(parser, agi=name != "baseline-sensitivity")
    if name == "localization":
        _flag(parser, "--methods", type=_csv)
        _flag(parser, "--sigma", type=float, help="SmoothGrad noise")
        _flag(parser, "--samples", type=int, help="SmoothGrad samples")
    if name != "alignment":
        _flag(parser, "--heatmaps", type=int, help="instances to render")


def _csv(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _csv_float(text: str) -> list[float]:
    return [float(part) for part in _csv(text)]


def build_parser() -> argparse.ArgumentParser:
    """Get the bdry argument parser."""
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="bdry", description="Boundary-based attribution toolkit."
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attribute", parents=[common], help="attribution map")
    _flag(p, "--model")
    _flag(p, "--input")
    _flag(p, "--method", choices=[m.value for m in EAttrMethod])
    _flag(p, "--sigma", type=float, help="SmoothGrad noise")
    _flag(p, "--samples", type=int, help="SmoothGrad samples")
    _flag(p, "--clip", type=float, nargs=2, metavar=("LO", "HI"))
    _add_search_flags(p)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("boundary", parents=[common], help="boundary search")
    _flag(p, "--model")
    _flag(p, "--input")
    _flag(p, "--attacks", help="attack preset or configuration file")
    _flag(p, "--clip", type=float, nargs=2, metavar=("LO", "HI"))
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("evaluate", parents=[common], help="box metrics")
    _flag(p, "--attributions", help="directory of attribution tensors")
    _flag(p, "--boxes", help="bounding box CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", parents=[common], help="heatmap image")
    _flag(p, "--attribution", help="attribution tensor")
    _flag(p, "--blur", type=float)
    _flag(p, "--scale", type=int)
    _flag(p, "--gray", action="store_const", const=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("train-toy", parents=[common], help="train a toy net")
    _flag(p, "--dataset", choices=KINDS)
    _flag(p, "--n", type=int, help="dataset size")
    _flag(p, "--arch", choices=ARCHS)
    _flag(p, "--epochs", type=int)
    _flag(p, "--lr", type=float)
    _flag(p, "--robust-eps", type=float)
    _flag(p, "--norm", choices=[n.value for n in ENorm])
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("experiment", help="run a study")
    studies = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        s = studies.add_parser(name, parents=[common])
        _add_experiment_flags(s, name)
        s.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Run the bdry command line.

    :param argv: arguments without the program name
    """
    args = build_parser().parse_args(argv)
    logger.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return int(args.func(args))
    except (BdryError, OSError) as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
