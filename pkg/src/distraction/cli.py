"""Command-line entry point.

Each subcommand reads and writes flat files (VTF tensors, signal CSVs, LSD1
model files) so the stages can be chained and inspected::

    distraction synth --config scene.cfg --out scene/
    distraction extract --video scene/video.vtf --mask scene/mask.vtf --method chrom --out est.csv
    distraction noise --video scene/video.vtf --mask scene/mask.vtf --out noise.csv
    distraction denoise --estimate est.csv --noise noise.csv --mode freq-sub --out clean.csv
    distraction evaluate --estimate clean.csv --truth scene/pulse.csv --out metrics.csv

Exit status is 0 when the outputs were written, 2 for usage errors and 1 for
any other failure, with a one-line diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

from . import dsp, metrics, pipeline
from .attention import DEFAULT_THRESHOLD, MASK_SIZE, InversionConfig
from .denoise import TrainConfig, load_model, lstm_train, save_model
from .signalio import (FormatError, read_mask, read_signal_csv, read_video_tensor,
                       write_mask, write_signal_csv, write_video_tensor)
from .synth import SceneConfig, render_scene

SCENE_FILES = ("video.vtf", "mask.vtf", "pulse.csv", "breathing.csv", "flicker.csv")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser whose errors are a single line on stderr."""

    def error(self, message):
        self.exit(2, f"{self.prog}: usage error: {message}\n")


@dataclass(frozen=True)
class PipelineConfig:
    """The flags that select one pipeline variant."""

    method: str = "chrom"
    denoiser: str = "none"
    mask_mode: str = "binary"
    threshold: float | None = DEFAULT_THRESHOLD
    region: str = "all"
    band_hz: tuple[float, float] | None = dsp.HR_BAND_HZ
    lam: float | None = None
    model_path: str | None = None

    def __post_init__(self):
        if self.method not in pipeline.METHODS:
            raise UsageError(f"unknown method {self.method!r}")
        if self.denoiser not in pipeline.DENOISERS:
            raise UsageError(f"unknown denoiser {self.denoiser!r}")
        if self.denoiser.startswith("lstm") and not self.model_path:
            raise UsageError(f"denoiser {self.denoiser} requires --model")
        if self.mask_mode == "binary" and self.threshold is None:
            raise UsageError("binary inversion requires a threshold")
        if self.region not in ("all", "center", "edges"):
            raise UsageError(f"unknown region {self.region!r}")
        if self.band_hz is not None and not 0 < self.band_hz[0] < self.band_hz[1]:
            raise UsageError(f"bad band {self.band_hz}")
        if self.lam is not None and self.lam <= 0:
            raise UsageError("--lam must be positive")

    @property
    def inversion(self) -> InversionConfig:
        try:
            return InversionConfig(self.mask_mode, self.threshold or DEFAULT_THRESHOLD)
        except ValueError as exc:
            raise UsageError(str(exc)) from None


def _band(args):
    if getattr(args, "no_bandpass", False):
        return None
    return tuple(args.band_hz)


def _config(args, **kw) -> PipelineConfig:
    base = dict(lam=getattr(args, "lam", None), band_hz=_band(args))
    base.update(kw)
    return PipelineConfig(**base)


def _out_parent(path) -> Path:
    p = Path(path)
    if not p.parent.is_dir():
        raise OSError(f"output directory {p.parent} does not exist")
    return p


def cmd_synth(args) -> None:
    try:
        cfg = SceneConfig.load(args.config) if args.config else SceneConfig()
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{args.config}: {exc}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = render_scene(cfg)
    write_video_tensor(scene.video, out / "video.vtf")
    write_mask(scene.attention, out / "mask.vtf", cfg.fps)
    write_signal_csv(scene.pulse, out / "pulse.csv")
    write_signal_csv(scene.breathing, out / "breathing.csv")
    write_signal_csv(scene.flicker, out / "flicker.csv")


def cmd_extract(args) -> None:
    cfg = _config(args, method=args.method)
    out = _out_parent(args.out)
    video = read_video_tensor(args.video)
    mask = read_mask(args.mask)
    est = pipeline.extract(video, mask, cfg.method, cfg.lam, cfg.band_hz)
    write_signal_csv(est.with_samples(est.samples, ("estimate",)), out)


def cmd_noise(args) -> None:
    cfg = _config(args, mask_mode=args.mode, threshold=args.threshold, region=args.region)
    out = _out_parent(args.out)
    video = read_video_tensor(args.video)
    mask = read_mask(args.mask)
    n = pipeline.noise(video, mask, cfg.inversion, cfg.region, tuple(args.size), cfg.lam,
                       cfg.band_hz, preprocess=not args.raw)
    write_signal_csv(n, out)


def cmd_denoise(args) -> None:
    cfg = _config(args, denoiser=args.mode, model_path=args.model)
    out = _out_parent(args.out)
    est = read_signal_csv(args.estimate)
    nz = read_signal_csv(args.noise) if args.noise else None
    if nz is None and cfg.denoiser in ("freq-sub", "wave-sub", "lstm"):
        raise UsageError(f"denoiser {cfg.denoiser} requires --noise")
    model = load_model(cfg.model_path) if cfg.model_path else None
    result = pipeline.denoise(est, nz, cfg.denoiser, model)
    write_signal_csv(result.with_samples(result.samples, ("estimate",)), out)


def _scene_dirs(path: Path) -> list[Path]:
    if path.is_file():
        lines = [ln.split("#", 1)[0].strip() for ln in path.read_text().splitlines()]
        dirs = [(path.parent / ln) for ln in lines if ln]
    elif path.is_dir():
        dirs = sorted(p for p in path.iterdir() if (p / "video.vtf").is_file())
    else:
        raise FileNotFoundError(f"{path} is neither a scene directory nor a manifest")
    if not dirs:
        raise UsageError(f"no scenes found in {path}")
    for d in dirs:
        for name in ("video.vtf", "mask.vtf", "pulse.csv"):
            if not (d / name).is_file():
                raise FileNotFoundError(f"scene {d} is missing {name}")
    return dirs


def cmd_train(args) -> None:
    if args.hidden < 1 or args.layers < 1 or args.epochs < 1 or args.batch_size < 1:
        raise UsageError("--hidden, --layers, --epochs and --batch-size must be positive")
    if args.window_length < 2 or not 0 <= args.window_overlap < 1:
        raise UsageError("need --window-length >= 2 and 0 <= --window-overlap < 1")
    cfg = _config(args, method=args.method, mask_mode=args.mode, threshold=args.threshold,
                  region=args.region)
    out = _out_parent(args.out)
    trace_path = _out_parent(args.loss_csv) if args.loss_csv else None
    signals = []
    for d in _scene_dirs(Path(args.scenes)):
        video, mask = read_video_tensor(d / "video.vtf"), read_mask(d / "mask.vtf")
        est = pipeline.extract(video, mask, cfg.method, cfg.lam, cfg.band_hz)
        nz = pipeline.noise(video, mask, cfg.inversion, cfg.region, MASK_SIZE, cfg.lam,
                            cfg.band_hz)
        tgt = pipeline.target(read_signal_csv(d / "pulse.csv"), cfg.lam)
        if tgt.num_samples != est.num_samples:
            raise ValueError(f"scene {d}: pulse has {tgt.num_samples} samples, "
                             f"video has {est.num_samples} frames")
        signals.append(pipeline.SceneSignals(est, nz, tgt, None))
    tc = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed,
                     hidden=args.hidden, layers=args.layers, window_length=args.window_length,
                     window_overlap=args.window_overlap)
    data = pipeline.build_dataset(signals, not args.no_noise, tc.window_length, tc.window_overlap)
    model, trace = lstm_train(data, tc)
    save_model(model, out)
    if trace_path:
        with open(trace_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["epoch", "loss"])
            for i, loss in enumerate(trace, start=1):
                wr.writerow([i, repr(float(loss))])


def cmd_evaluate(args) -> None:
    out = _out_parent(args.out)
    est = read_signal_csv(args.estimate)
    truth = read_signal_csv(args.truth)
    if abs(est.fps - truth.fps) > 1e-6 * truth.fps:
        raise ValueError(f"frame rates differ: {est.fps} vs {truth.fps}")
    if args.band_bpm is not None:
        band = tuple(args.band_bpm)
    else:
        band = metrics.BR_BAND_BPM if args.target == "br" else metrics.HR_BAND_BPM
    if not 0 < band[0] < band[1]:
        raise UsageError(f"bad band {band}")
    report = metrics.evaluate(est, truth, band, args.window_seconds)
    report.to_csv(out)


def _add_preprocess_flags(p):
    p.add_argument("--band-hz", nargs=2, type=float, default=list(dsp.HR_BAND_HZ),
                   metavar=("LO", "HI"), help="bandpass edges in Hz")
    p.add_argument("--no-bandpass", action="store_true", help="skip the bandpass stage")
    p.add_argument("--lam", type=float, default=None,
                   help="detrending smoothness (default depends on the frame rate)")


def _add_mask_flags(p):
    p.add_argument("--mode", choices=("binary", "continuous"), default="binary")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                   help="binary inversion threshold T")
    p.add_argument("--region", choices=("all", "center", "edges"), default="all")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="distraction",
                     description="Inverse-attention noise estimation tools")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="render a synthetic scene and its ground truth")
    p.add_argument("--config", default=None, help="key=value scene file (defaults if omitted)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="preliminary pulse estimate from a video")
    p.add_argument("--video", required=True)
    p.add_argument("--mask", required=True, help="attention mask VTF")
    p.add_argument("--method", choices=pipeline.METHODS, default="chrom")
    p.add_argument("--out", required=True)
    _add_preprocess_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("noise", help="noise estimate from the ignored regions")
    p.add_argument("--video", required=True)
    p.add_argument("--mask", required=True)
    _add_mask_flags(p)
    p.add_argument("--size", nargs=2, type=int, default=list(MASK_SIZE), metavar=("H", "W"))
    p.add_argument("--raw", action="store_true", help="write the estimate before preprocessing")
    p.add_argument("--out", required=True)
    _add_preprocess_flags(p)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("denoise", help="remove the noise estimate from a pulse estimate")
    p.add_argument("--estimate", required=True)
    p.add_argument("--noise", default=None)
    p.add_argument("--mode", choices=pipeline.DENOISERS, default="freq-sub")
    p.add_argument("--model", default=None, help="LSD1 model file for the lstm modes")
    p.add_argument("--out", required=True)
    _add_preprocess_flags(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("train", help="train the LSTM denoiser on rendered scenes")
    p.add_argument("--scenes", required=True,
                   help="directory of scene folders, or a manifest listing one folder per line")
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("--loss-csv", default=None, help="per-epoch loss trace")
    p.add_argument("--method", choices=pipeline.METHODS, default="mean")
    p.add_argument("--no-noise", action="store_true", help="train without the noise inputs")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--window-length", type=int, default=60)
    p.add_argument("--window-overlap", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    _add_mask_flags(p)
    _add_preprocess_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score an estimate against ground truth")
    p.add_argument("--estimate", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--target", choices=("hr", "br"), default="hr")
    p.add_argument("--band-bpm", nargs=2, type=float, default=None, metavar=("LO", "HI"),
                   help="override the rate search band")
    p.add_argument("--window-seconds", type=float, default=metrics.WINDOW_SECONDS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help exits 0, parse errors exit 2
        return int(exc.code or 0)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"distraction {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError, ValueError, ArithmeticError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"distraction {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
