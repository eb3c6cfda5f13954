"""Command-line entry point: enhance | train-toy | gen-data | count-macs | profile."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import complexity, profiler, synth
from .errors import MagSepError
from .pipeline import (
    DEFAULT_SEED,
    EnhancementModel,
    ModelConfig,
    apply_overrides,
    enhance,
    load_checkpoint,
    parse_config_text,
    save_checkpoint,
    si_sdr,
)
from .training import train_toy
from .wav import read_wav, write_wav

MANIFEST = "manifest.csv"
MANIFEST_HEADER = ("clean", "noise", "mix", "snr_db", "seed")
TOY_MASKER = {"repeats": 1, "k_intra": 1, "k_inter": 1, "d_model": 64, "d_ff": 64, "n_heads": 4}


class UsageError(MagSepError):
    pass


def _parse_sets(items) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve_config(args, base: ModelConfig | None = None) -> ModelConfig:
    config = base or ModelConfig.stft()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from exc
        config = apply_overrides(config, parse_config_text(text))
    return apply_overrides(config, _parse_sets(args.set))


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from exc
    return out


# -- commands ----------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    grid = _float_list(args.snr_grid)
    if not grid:
        raise UsageError("--snr-grid must list at least one SNR")
    out = _out_dir(args.out)
    pairs = synth.make_dataset(args.seed, args.pairs, args.seconds, grid)
    rows = []
    for i, pair in enumerate(pairs):
        names = [f"pair{i:03d}_{kind}.wav" for kind in ("clean", "noise", "mix")]
        for name, signal in zip(names, (pair.clean, pair.noise, pair.mixture)):
            write_wav(out / name, signal)
        rows.append((*names, f"{pair.snr_db:g}", pair.seed))
    with (out / MANIFEST).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        writer.writerows(rows)
    print(f"wrote {len(rows)} pairs to {out}")
    return 0


def read_manifest(data_dir) -> list[dict]:
    path = Path(data_dir) / MANIFEST
    if not path.exists():
        raise UsageError(f"no {MANIFEST} in {data_dir}")
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(MANIFEST_HEADER) - set(rows[0]):
        raise UsageError(f"{path}: expected header {','.join(MANIFEST_HEADER)} and at least one row")
    return rows


def cmd_enhance(args) -> int:
    audio = read_wav(args.input)
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        if args.config or args.set:
            requested = resolve_config(args, model.config)
            if requested != model.config:
                raise UsageError("config overrides disagree with the checkpoint's config")
    else:
        model = EnhancementModel(resolve_config(args), seed=args.seed)
    if model.config.sample_rate != audio.sample_rate:
        raise UsageError(f"input is {audio.sample_rate} Hz, model expects {model.config.sample_rate} Hz")
    estimate = enhance(model, audio, unit_mask=args.debug_unit_mask).data
    out = Path(args.out)
    if out.is_dir():
        out = out / "enhanced.wav"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_wav(out, estimate, audio.sample_rate)
    print(f"wrote {out} ({len(estimate)} samples, {model.config.label})")
    if args.reference:
        ref = read_wav(args.reference)
        print(f"si_sdr_db={si_sdr(estimate, ref.samples):.4f}")
        print(f"si_sdr_input_db={si_sdr(audio.samples, ref.samples):.4f}")
    return 0


def cmd_train_toy(args) -> int:
    rows = read_manifest(args.data)
    if args.pairs:
        rows = rows[: args.pairs]
    data_dir = Path(args.data)
    dataset = [(read_wav(data_dir / r["mix"]).samples, read_wav(data_dir / r["clean"]).samples)
               for r in rows]
    config = resolve_config(args, ModelConfig.stft(**TOY_MASKER))
    model = EnhancementModel(config, seed=args.seed)
    before = [si_sdr(enhance(model, n).data, c) for n, c in dataset]
    result = train_toy(model, dataset, args.steps, lr=args.lr, clip=args.clip)
    out = _out_dir(args.out)
    save_checkpoint(model, out / "model.ckpt")
    with (out / "loss.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("step", "loss", "lr"))
        for i, (loss, lr) in enumerate(zip(result.losses, result.learning_rates)):
            writer.writerow((i, repr(loss), repr(lr)))
    after = [si_sdr(enhance(model, n).data, c) for n, c in dataset]
    mixture = [si_sdr(n, c) for n, c in dataset]
    print(f"steps={args.steps} first_loss={result.losses[0]:.4f} final_loss={result.losses[-1]:.4f}")
    print(f"mean si_sdr_db: mixture={np.mean(mixture):.4f} untrained={np.mean(before):.4f} "
          f"trained={np.mean(after):.4f}")
    print(f"wrote {out / 'model.ckpt'} and {out / 'loss.csv'}")
    return 0


def _print_table(rows: list[dict]) -> None:
    keys = list(rows[0])
    print(",".join(keys))
    for r in rows:
        print(",".join(_fmt(r[k]) for k in keys))


def _fmt(value) -> str:
    return f"{value:.6f}" if isinstance(value, float) else str(value)


def cmd_count_macs(args) -> int:
    if args.table1:
        rows = complexity.table1(args.convention, args.seconds)
    else:
        config = resolve_config(args)
        desc = complexity.ConfigDescriptor.from_config(config, args.seconds)
        rows = [{"config": config.label, "seconds": args.seconds,
                 **complexity.count_macs(desc, args.convention).as_record()}]
    _print_table(rows)
    if args.out:
        out = _out_dir(args.out) / "macs.csv"
        with out.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(list(rows[0]))
            writer.writerows([[_fmt(v) for v in r.values()] for r in rows])
    return 0


def _profile_configs(args) -> list[ModelConfig]:
    if args.compare:
        return [ModelConfig.learned(250), ModelConfig.stft(50), ModelConfig.stft(25)]
    return [resolve_config(args)]


def cmd_profile(args) -> int:
    out = _out_dir(args.out)
    configs = _profile_configs(args)
    seconds = _float_list(args.seconds)
    if not seconds:
        raise UsageError("--seconds must list at least one length")
    if args.mode == "forward":
        reports = []
        for cfg in configs:
            model = EnhancementModel(cfg, seed=args.seed)
            reports.extend(profiler.profile_forward(model, s, args.runs) for s in seconds)
        path = profiler.write_profile_csv(out / "profile.csv", reports)
        for r in reports:
            print(f"{r.config} {r.seconds:g}s median_ms={r.wall_ms:.1f} peak_bytes={r.peak_bytes}")
    elif args.mode == "memory":
        curves = {cfg.label: profiler.memory_curve(EnhancementModel(cfg, seed=args.seed), seconds)
                  for cfg in configs}
        path = profiler.write_memory_csv(out / "memory.csv", curves)
    else:
        curves = {}
        for cfg in configs:
            model = EnhancementModel(cfg, seed=args.seed)
            lengths = seconds[0] if len(seconds) == 1 else seconds
            curves[cfg.label] = profiler.simulate_streaming(model, lengths, stop_rtf=args.stop_rtf)
        path = profiler.write_rtf_csv(out / "rtf.csv", curves)
        profiler.write_crossing_csv(out / "rtf_crossing.csv", curves)
        for label, points in curves.items():
            hit = profiler.crossing(points)
            if hit is None:
                print(f"{label} stays below rtf=1 on this grid")
            else:
                print(f"{label} crosses rtf=1 at {hit.seconds:g}s")
    print(f"wrote {path}")
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    parser = argparse.ArgumentParser(prog="magsepformer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", parents=[common], help="enhance a 16 kHz mono WAV file")
    p.add_argument("input")
    p.add_argument("--out", required=True, help="output WAV path or directory")
    p.add_argument("--checkpoint")
    p.add_argument("--reference", help="clean WAV; prints SI-SDR of input and estimate")
    p.add_argument("--debug-unit-mask", action="store_true", help="bypass the masker (m = 1)")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("train-toy", parents=[common], help="overfit a small model on generated pairs")
    p.add_argument("--data", required=True, help="directory written by gen-data")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--pairs", type=int, default=0, help="use only the first N pairs (0 = all)")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--clip", type=float, default=5.0)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("gen-data", parents=[common], help="write synthetic clean/noise/mix triplets")
    p.add_argument("--out", required=True)
    p.add_argument("--pairs", type=int, default=6)
    p.add_argument("--seconds", type=float, default=1.0)
    p.add_argument("--snr-grid", default=",".join(f"{v:g}" for v in synth.SNR_GRID_DB))
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("count-macs", parents=[common], help="analytic MAC breakdown")
    p.add_argument("--seconds", type=float, default=10.0)
    p.add_argument("--convention", choices=complexity.CONVENTIONS, default="module")
    p.add_argument("--table1", action="store_true", help="all six published configurations")
    p.add_argument("--out", help="also write macs.csv into this directory")
    p.set_defaults(func=cmd_count_macs)

    p = sub.add_parser("profile", parents=[common], help="timing, memory or streaming RTF CSVs")
    p.add_argument("mode", choices=("forward", "memory", "stream"))
    p.add_argument("--out", required=True)
    p.add_argument("--seconds", default="10", help="comma-separated utterance lengths")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--compare", action="store_true",
                   help="profile learned C=250 and STFT C=50/C=25 instead of --config")
    p.add_argument("--stop-rtf", type=float, default=None)
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MagSepError, OSError) as exc:
        print(f"magsepformer {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
