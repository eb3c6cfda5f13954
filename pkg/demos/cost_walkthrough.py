"""Where the multiply-accumulates go: learned front end vs magnitude STFT front end.

Run with ``python3 demos/cost_walkthrough.py``. Nothing here is timed; all numbers
come from the analytic counter.
"""

from magsepformer import complexity as CX
from magsepformer.complexity import ConfigDescriptor
from magsepformer.pipeline import ModelConfig

# %% The six reference configurations at 10 s of 16 kHz audio
for row in CX.table1():
    print(f"{row['config']:<24} {row['gmacs']:7.2f} GMACs  (reference {row['published_gmacs']:.2f}, "
          f"{100 * row['rel_error']:+.1f}%)")

learned, stft = ModelConfig.learned(chunk=250), ModelConfig.stft(chunk=50)
print(f"\nreduction factor learned C=250 / stft C=50: {CX.reduction_factor(learned, stft):.2f}")

# %% Per-stage breakdown. The default convention leaves attention products out of
# the total; the dense one counts everything.
for cfg in (learned, stft):
    mb = CX.count_macs(cfg, "dense")
    print(f"\n{cfg.label}")
    for stage in CX.STAGES:
        share = getattr(mb, stage) / mb.total
        print(f"  {stage:<18} {getattr(mb, stage) / 1e9:8.3f} G  {100 * share:5.1f}%")

# %% Frames per second is the whole story: 16 ms hop vs 1 ms hop
for cfg in (learned, stft):
    d = ConfigDescriptor.from_config(cfg, 10.0)
    print(f"{cfg.label}: {d.n_frames} frames, {d.n_chunks} chunks of {cfg.chunk}")

# %% Long inputs: the inter-chunk attention takes over and growth turns quadratic
seconds = [1, 10, 60, 300, 1200, 4800]
report = CX.asymptotic_regime(ConfigDescriptor(16000, 512, 128, 50), [16000 * s for s in seconds])
for s, share in zip(seconds, report.inter_share):
    print(f"{s:>6} s  inter-attention share {100 * share:5.1f}%")
print(f"inter dominates from {report.crossover / 16000:g} s; "
      f"log-log slope over the last step {report.loglog_slope():.2f}")

# %% Chunk size that balances intra and inter score cost
for frames in (1247, 9999):
    print(f"L={frames}: chunk {CX.optimal_chunk(frames)}")
