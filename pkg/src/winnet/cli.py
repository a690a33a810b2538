"""Command-line entry point: ``winnet <command> [--config PATH] [--seed N] [--out DIR]``.

Exit codes: 0 success, 1 config error, 2 I/O error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import itertools
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, metrics
from .config import ConfigError, RunConfig
from .data import Image, ImageError, load_dataset, patches_from_images, save_image
from .model import Model, build, denoise, forward, mse_loss, param_count, training_target
from .noise import FRESH, FROZEN, NoiseConfig, NoiseSource, Rng
from .train import LOG_COLUMNS, EpochRecord, NumericalError, ValidationSet, fit, mean_psnr

log = logging.getLogger("winnet")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


def _stamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.path("out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _training_data(cfg: RunConfig):
    train_imgs = load_dataset(cfg.path("data.train"))
    if not train_imgs:
        raise ConfigError(f"no images found in {cfg['data.train']}")
    patches = patches_from_images(train_imgs, cfg.patch, cfg.stride, cfg.augment)
    val_src = cfg.path("data.val") or cfg.path("data.train")
    val_patches = patches_from_images(load_dataset(val_src), cfg.patch, cfg.stride)
    noise = cfg.noise()
    val_sigma = noise.sigma if not noise.is_range else (noise.sigma + noise.sigma_hi) / 2
    return patches, ValidationSet.make(val_patches.patches, val_sigma, cfg.seed)


def _validation_loss(model: Model, val: ValidationSet) -> float:
    pred, _ = forward(model, val.noisy, "infer")
    return mse_loss(pred, training_target(model, val.noisy, val.clean))[0]


def train_run(cfg: RunConfig, out: Path, spec=None, name: str = "train") -> tuple[Model, list[EpochRecord]]:
    """Train one model and write ``<name>.log`` plus its checkpoint into ``out``."""
    spec = spec or cfg.model_spec()
    patches, val = _training_data(cfg)
    model = build(spec, seed=cfg.seed)
    log_path = out / f"{name}.log"
    lines = [f"# winnet {name} log, started {_stamp()}",
             f"# spec={spec.to_dict()} params={param_count(spec)} patches={len(patches)}",
             LOG_COLUMNS]
    log_path.write_text("\n".join(lines) + "\n")

    def on_epoch(rec: EpochRecord):
        with log_path.open("a") as fh:
            fh.write(rec.line() + "\n")
        log.info("epoch %d lr %.4g loss %.6g val_psnr %.3f", rec.epoch, rec.lr, rec.train_loss, rec.val_psnr)

    trainer = fit(model, patches, cfg.noise(), cfg.optim(), cfg.epochs, cfg.seed, val, on_epoch)
    model.meta = {"noise": cfg.noise_dict(), "epochs": cfg.epochs, "seed": cfg.seed,
                  "steps": trainer.state.steps, "patch": cfg.patch, "stride": cfg.stride,
                  "final_train_loss": trainer.history[-1].train_loss,
                  "final_val_psnr": trainer.history[-1].val_psnr}
    return model, trainer.history


def cmd_train(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    model, _ = train_run(cfg, out)
    ckpt = out / cfg["checkpoint"]  # absolute paths survive the join
    checkpoint.save(model, ckpt)
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def _denoise_image(model: Model, img: Image) -> np.ndarray:
    return denoise(model, img.as_tensor())[0, 0]


def cmd_denoise(cfg: RunConfig, ckpt: Path, inputs: Path, clean: Path | None) -> int:
    model = checkpoint.load(ckpt)
    out = _out_dir(cfg)
    noisy = load_dataset(inputs)
    refs = {Path(i.source_path).name: i for i in load_dataset(clean)} if clean else {}
    sigma = model.meta.get("noise", {}).get("sigma")
    sigma = math.nan if sigma is None else float(sigma)
    report = metrics.QualityReport()
    for img in noisy:
        est = _denoise_image(model, img)
        name = Path(img.source_path).name
        save_image(est, out / name)
        if name in refs:
            report.add(name, sigma, refs[name], est)
    if report.records:
        (out / "quality.tsv").write_text("\n".join(report.lines()) + "\n")
        (out / "quality.txt").write_text(report.table())
        print(report.table(), end="")
    print(f"wrote {len(noisy)} image(s) to {out}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, ckpt: Path, clean: Path) -> int:
    """Corrupt clean images at each sigma, denoise, report PSNR/SSIM."""
    model = checkpoint.load(ckpt)
    out = _out_dir(cfg)
    images = load_dataset(clean)
    report = metrics.QualityReport()
    rng = Rng(cfg.seed).derive(11)
    for sigma in cfg.float_list("eval.sigmas"):
        src = NoiseSource(NoiseConfig(sigma=sigma), rng)
        for img in images:
            noisy = img.pixels + src.sample((1, 1) + img.pixels.shape)[0, 0]
            est = denoise(model, noisy[None, None])[0, 0]
            report.add(Path(img.source_path).name, sigma, img, est)
    (out / "eval.tsv").write_text("\n".join(report.lines()) + "\n")
    (out / "eval.txt").write_text(report.table())
    print(report.table(), end="")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    axes = cfg.sweep_axes()
    base = cfg.model_spec()
    depth = axes["depth"] or [base.depth]
    filters = axes["filters"] or [base.layers[0].filters]
    kernel = axes["kernel"] or [base.layers[0].kernel]
    out = _out_dir(cfg)
    rows = []
    for d, k, f in itertools.product(depth, filters, kernel):
        spec = cfg.model_spec(depth=d, filters=k, kernel=f)
        name = f"L{d}_K{k}_F{f}"
        sub = out / name
        sub.mkdir(exist_ok=True)
        model, hist = train_run(cfg, sub, spec, name="train")
        checkpoint.save(model, sub / "model.ckpt")
        _, val = _training_data(cfg)
        rows.append([name, str(param_count(spec)), f"{hist[-1].train_loss:.6g}",
                     f"{_validation_loss(model, val):.6g}", f"{hist[-1].val_psnr:.3f}"])
    table = metrics.format_table(["variant", "params", "train_loss", "val_loss", "val_psnr"], rows,
                                 "final validation results per variant")
    (out / "sweep.txt").write_text(table)
    print(table, end="")
    return EXIT_OK


def seed_flaw_experiment(cfg: RunConfig) -> dict:
    """Train frozen- and fresh-noise twins; PSNR of each on frozen and fresh noise."""
    base = cfg.noise()
    spec = cfg.model_spec()
    patches, _ = _training_data(cfg)
    val_src = cfg.path("data.val") or cfg.path("data.train")
    clean = patches_from_images(load_dataset(val_src), cfg.patch, cfg.stride).patches
    shape = (1, 1, cfg.patch, cfg.patch)
    sigma = base.sigma
    frozen_noise = NoiseSource(NoiseConfig(sigma=sigma, seed_policy=FROZEN, seed=base.seed)).sample(shape)
    fresh_noise = NoiseSource(NoiseConfig(sigma=sigma), Rng(cfg.seed).derive(13)).sample(clean.shape)
    evals = {FROZEN: clean + frozen_noise, FRESH: clean + fresh_noise}
    result = {}
    for policy in (FROZEN, FRESH):
        model = build(spec, seed=cfg.seed)
        noise = NoiseConfig(sigma=sigma, seed_policy=policy, seed=base.seed)
        fit(model, patches, noise, cfg.optim(), cfg.epochs, cfg.seed)
        result[policy] = {k: mean_psnr(model, clean, y) for k, y in evals.items()}
    return result


def format_seed_flaw(result: dict, cfg: RunConfig) -> tuple[str, str]:
    rows, recs = [], []
    for policy in (FROZEN, FRESH):
        r = result[policy]
        gap = r[FROZEN] - r[FRESH]
        rows.append([f"{policy}-trained", f"{r[FROZEN]:.3f}", f"{r[FRESH]:.3f}", f"{gap:.3f}"])
        recs.append(f"{policy}\t{r[FROZEN]!r}\t{r[FRESH]!r}\t{gap!r}")
    excess = (result[FROZEN][FROZEN] - result[FROZEN][FRESH]) - (result[FRESH][FROZEN] - result[FRESH][FRESH])
    title = (f"PSNR (dB) on {cfg.patch}x{cfg.patch} patches, sigma={cfg.noise().sigma:g}, "
             f"epochs={cfg.epochs}, seed={cfg.seed}")
    table = metrics.format_table(["model", "frozen-noise eval", "fresh-noise eval", "gap"], rows, title)
    return table + f"gap excess (frozen-trained minus fresh-trained): {excess:.3f} dB\n", \
        "trained\tpsnr_frozen_eval\tpsnr_fresh_eval\tgap\n" + "\n".join(recs) + "\n"


def cmd_diagnose_seed(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    result = seed_flaw_experiment(cfg)
    table, records = format_seed_flaw(result, cfg)
    (out / "seed_flaw.txt").write_text(table)
    (out / "seed_flaw.tsv").write_text(records)
    print(table, end="")
    return EXIT_OK


def histogram_report(images: list[Image], sigmas: list[float], seed_policy: str = FRESH, seed: int = 0):
    """Per-image, per-sigma histograms of the clipped noisy images and pairwise L1 distances."""
    if len(images) < 2:
        raise ConfigError("histogram comparison needs at least 2 images")
    hists, dists = {}, []
    for sigma in sigmas:
        src = NoiseSource(NoiseConfig(sigma=sigma, seed_policy=seed_policy, seed=seed), Rng(seed).derive(17))
        for i, img in enumerate(images):
            noisy = np.clip(img.pixels + src.sample((1, 1) + img.pixels.shape)[0, 0], 0, 1)
            hists[(i, sigma)] = metrics.histogram(noisy)
        for i, j in itertools.combinations(range(len(images)), 2):
            dists.append((sigma, i, j, metrics.histogram_distance(hists[(i, sigma)], hists[(j, sigma)])))
    return hists, dists


def cmd_histogram(cfg: RunConfig, paths: list[str]) -> int:
    if not paths and cfg["histogram.images"]:
        paths = [cfg["histogram.images"]]
    if not paths:
        paths = [cfg["data.train"]]
    images = [img for p in paths for img in load_dataset(p)]
    sigmas = cfg.float_list("histogram.sigmas")
    hists, dists = histogram_report(images, sigmas, cfg.noise().seed_policy, cfg.noise().seed)
    out = _out_dir(cfg)
    names = [Path(i.source_path).name for i in images]
    rows = [[f"{s:g}", names[i], names[j], f"{d:.6f}"] for s, i, j, d in dists]
    table = metrics.format_table(["sigma", "image_a", "image_b", "L1 distance"], rows,
                                 "histogram distance between noisy images")
    with (out / "histograms.tsv").open("w") as fh:
        fh.write("image\tsigma\t" + "\t".join(str(b) for b in range(256)) + "\n")
        for (i, s), h in hists.items():
            fh.write(f"{names[i]}\t{s:g}\t" + "\t".join(str(int(c)) for c in h.bins) + "\n")
    (out / "histogram_distances.txt").write_text(table)
    print(table, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value run configuration")
    common.add_argument("--seed", type=int, help="global seed (overrides config)")
    common.add_argument("--out", type=Path, help="output directory (overrides config)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key; may be repeated")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="winnet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train a model on patches of a folder of images")
    d = sub.add_parser("denoise", parents=[common], help="denoise image(s) with a checkpoint")
    d.add_argument("--checkpoint", type=Path, required=True)
    d.add_argument("--input", type=Path, required=True, help="noisy image or folder")
    d.add_argument("--clean", type=Path, help="clean references (same file names) for PSNR/SSIM")
    e = sub.add_parser("eval", parents=[common], help="corrupt clean images at eval.sigmas and score")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--clean", type=Path, required=True)
    sub.add_parser("sweep", parents=[common], help="train one variant per sweep.depth/filters/kernel entry")
    sub.add_parser("diagnose-seed", parents=[common], help="frozen vs fresh training-noise experiment")
    h = sub.add_parser("histogram", parents=[common], help="noisy-image histogram similarity")
    h.add_argument("images", nargs="*", help="images or folders (default: histogram.images or data.train)")
    return p


def _overrides(args) -> dict[str, str]:
    ov = {}
    for item in args.set:
        k, sep, v = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        ov[k.strip()] = v.strip()
    if args.seed is not None:
        ov["seed"] = str(args.seed)
    if args.out is not None:
        ov["out"] = str(args.out)
    return ov


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = RunConfig.load(args.config, _overrides(args))
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "denoise":
            return cmd_denoise(cfg, args.checkpoint, args.input, args.clean)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint, args.clean)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "diagnose-seed":
            return cmd_diagnose_seed(cfg)
        if args.command == "histogram":
            return cmd_histogram(cfg, args.images)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ImageError, checkpoint.CheckpointError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
