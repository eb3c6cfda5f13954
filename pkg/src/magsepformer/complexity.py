"""Analytic multiply-accumulate model of the enhancement network.

Two counting conventions are offered:

``"dense"``
    every dense multiply-accumulate, including the attention projections and
    the ``QK^T`` / ``softmax(.)V`` products.
``"module"``
    what layer-hook profilers report for this architecture: convolution and
    feed-forward/linear layers are counted, the fused multi-head attention
    module is not. The omitted attention MACs are kept in
    ``MacBreakdown.attention_uncounted``.

The published per-configuration GMAC figures line up with the ``"module"``
convention (see ``TABLE1``); asymptotic statements about sequence length use
``"dense"``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dsp import frame_count
from .errors import ConfigError
from .masker import n_chunks
from .pipeline import ModelConfig

CONVENTIONS = ("module", "dense")
STAGES = (
    "encoder",
    "input_projection",
    "intra_attention",
    "intra_ffw",
    "inter_attention",
    "inter_ffw",
    "norms_and_gates",
    "decoder",
)


def fft_macs(frame: int) -> int:
    """Real MACs for one length-``frame`` FFT: (M/2) log2 M complex butterflies, ~4 real MACs each."""
    return 2 * frame * int(math.log2(frame))


@dataclass(frozen=True)
class ConfigDescriptor:
    n_samples: int
    frame: int
    hop: int
    chunk: int
    repeats: int = 2
    k_intra: int = 4
    k_inter: int = 4
    d_model: int = 256
    d_ff: int = 256
    n_heads: int = 8
    n_features: int = 257
    encoder: str = "stft_mag"

    def __post_init__(self):
        if self.chunk < 2:
            raise ConfigError("chunk must be >= 2")
        if min(self.repeats, self.k_intra, self.k_inter) < 0:
            raise ConfigError("block counts must be >= 0")
        if min(self.d_model, self.d_ff, self.n_heads, self.n_features) < 1:
            raise ConfigError("widths must be positive")
        frame_count(self.n_samples, self.frame, self.hop)

    @classmethod
    def from_config(cls, config: ModelConfig, seconds: float | None = None,
                    n_samples: int | None = None) -> "ConfigDescriptor":
        if n_samples is None:
            if seconds is None:
                raise ConfigError("give seconds or n_samples")
            n_samples = int(round(seconds * config.sample_rate))
        m = config.masker
        return cls(n_samples, config.frame, config.hop, m.chunk_size, m.repeats, m.k_intra,
                   m.k_inter, m.d_model, m.d_ff, m.n_heads, config.n_features, config.encoder)

    @property
    def n_frames(self) -> int:
        return frame_count(self.n_samples, self.frame, self.hop)

    @property
    def n_chunks(self) -> int:
        return n_chunks(self.n_frames, self.chunk)

    def with_samples(self, n_samples: int) -> "ConfigDescriptor":
        return ConfigDescriptor(**{**asdict(self), "n_samples": n_samples})


@dataclass(frozen=True)
class MacBreakdown:
    encoder: int
    input_projection: int
    intra_attention: int
    intra_ffw: int
    inter_attention: int
    inter_ffw: int
    norms_and_gates: int
    decoder: int
    convention: str = "module"
    attention_uncounted: int = 0
    secondary: dict = field(default_factory=dict, compare=False)

    @property
    def total(self) -> int:
        return sum(getattr(self, s) for s in STAGES)

    @property
    def gmacs(self) -> float:
        return self.total / 1e9

    @property
    def masker(self) -> int:
        return self.total - self.encoder - self.decoder - self.input_projection

    def as_record(self) -> dict:
        """Flat key/value view for CSV output."""
        record = {s: getattr(self, s) for s in STAGES}
        record.update(total=self.total, gmacs=round(self.gmacs, 6), convention=self.convention,
                      attention_uncounted=self.attention_uncounted)
        record.update({f"secondary_{k}": v for k, v in self.secondary.items()})
        return record


def attention_macs(rows: int, length: int, d_model: int) -> int:
    """Projections (Q, K, V, out) and the two score products for ``rows`` sequences."""
    return rows * (4 * length * d_model * d_model + 2 * length * length * d_model)


def ffw_macs(rows: int, length: int, d_model: int, d_ff: int) -> int:
    return rows * 2 * length * d_model * d_ff


def count_macs(cfg: ConfigDescriptor | ModelConfig, convention: str = "module",
               seconds: float | None = None) -> MacBreakdown:
    if isinstance(cfg, ModelConfig):
        cfg = ConfigDescriptor.from_config(cfg, seconds if seconds is not None else 10.0)
    if convention not in CONVENTIONS:
        raise ConfigError(f"convention must be one of {CONVENTIONS}")
    L, S, C = cfg.n_frames, cfg.n_chunks, cfg.chunk
    d, F = cfg.d_model, cfg.n_features
    rk_intra = cfg.repeats * cfg.k_intra
    rk_inter = cfg.repeats * cfg.k_inter

    intra_attention = rk_intra * attention_macs(S, C, d)
    inter_attention = rk_inter * attention_macs(C, S, d)
    if cfg.encoder == "learned":
        codec = L * F * cfg.frame
    else:
        codec = L * fft_macs(cfg.frame)
    secondary = {
        "softmax_exp": cfg.n_heads * (rk_intra * S * C * C + rk_inter * C * S * S),
        "norm_elements": 2 * (rk_intra + rk_inter) * S * C * d,
        "activation_elements": (rk_intra + rk_inter) * S * C * cfg.d_ff + S * C * d + 3 * L * F,
    }
    uncounted = 0
    if convention == "module":
        uncounted = intra_attention + inter_attention
        intra_attention = inter_attention = 0
    return MacBreakdown(
        encoder=codec,
        input_projection=L * F * d if F != d else 0,
        intra_attention=intra_attention,
        intra_ffw=rk_intra * ffw_macs(S, C, d, cfg.d_ff),
        inter_attention=inter_attention,
        inter_ffw=rk_inter * ffw_macs(C, S, d, cfg.d_ff),
        norms_and_gates=S * C * d * d + 2 * L * d * F,
        decoder=codec,
        convention=convention,
        attention_uncounted=uncounted,
        secondary=secondary,
    )


def reduction_factor(cfg_a, cfg_b, convention: str = "module") -> float:
    return count_macs(cfg_a, convention).total / count_macs(cfg_b, convention).total


def optimal_chunk(n_frames: int) -> int:
    """Even chunk size nearest to sqrt(L).

    This balances ``L*C`` intra against ``L^2/C`` inter score work for
    non-overlapping chunks. With 50% overlap the chunk count doubles and the
    balance point moves to sqrt(2L).
    """
    if n_frames < 4:
        raise ConfigError("optimal_chunk needs L >= 4")
    root = math.sqrt(n_frames)
    lower = 2 * math.floor(root / 2)
    upper = lower + 2
    best = lower if root - lower <= upper - root else upper
    return max(2, best)


@dataclass(frozen=True)
class RegimeReport:
    n_samples: list[int]
    totals: list[int]
    inter_share: list[float]
    crossover: int | None

    def loglog_slope(self, last: int = 2) -> float:
        x = np.log(np.asarray(self.n_samples[-last:], dtype=float))
        y = np.log(np.asarray(self.totals[-last:], dtype=float))
        return float(np.polyfit(x, y, 1)[0])


def asymptotic_regime(cfg: ConfigDescriptor | ModelConfig, n_range) -> RegimeReport:
    """Share of inter-chunk attention in the dense total for each input length."""
    if isinstance(cfg, ModelConfig):
        cfg = ConfigDescriptor.from_config(cfg, n_samples=int(n_range[0]))
    n_range = [int(n) for n in n_range]
    if any(b <= a for a, b in zip(n_range, n_range[1:])):
        raise ConfigError("n_range must be strictly increasing")
    totals, shares, crossover = [], [], None
    for n in n_range:
        mb = count_macs(cfg.with_samples(n), "dense")
        share = mb.inter_attention / mb.total
        totals.append(mb.total)
        shares.append(share)
        if crossover is None and share > 0.5:
            crossover = n
    return RegimeReport(n_range, totals, shares, crossover)


# published GMACs for 10 s of 16 kHz audio: (encoder, frame, hop, chunk, gmacs)
TABLE1 = (
    ("learned", 32, 16, 250, 45.75),
    ("learned", 32, 16, 100, 45.10),
    ("stft_mag", 512, 128, 100, 6.26),
    ("stft_mag", 512, 128, 50, 5.93),
    ("stft_mag", 512, 128, 25, 5.99),
    ("stft_mag", 512, 256, 25, 3.08),
)


def table1_configs(**masker) -> list[tuple[ModelConfig, float]]:
    rows = []
    for encoder, frame, hop, chunk, gmacs in TABLE1:
        if encoder == "learned":
            cfg = ModelConfig.learned(chunk, frame, hop, **masker)
        else:
            cfg = ModelConfig.stft(chunk, frame, hop, **masker)
        rows.append((cfg, gmacs))
    return rows


def table1(convention: str = "module", seconds: float = 10.0) -> list[dict]:
    out = []
    for cfg, published in table1_configs():
        mb = count_macs(ConfigDescriptor.from_config(cfg, seconds), convention)
        out.append({
            "config": cfg.label,
            "frame_ms": 1000 * cfg.frame / cfg.sample_rate,
            "overlap_pct": round(100 * (cfg.frame - cfg.hop) / cfg.frame),
            "chunk": cfg.chunk,
            "gmacs": mb.gmacs,
            "published_gmacs": published,
            "rel_error": mb.gmacs / published - 1.0,
        })
    return out
