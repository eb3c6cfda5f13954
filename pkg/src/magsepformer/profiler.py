"""Wall time, peak memory and streaming real-time factor measurements.

All timings use ``time.perf_counter`` and run with BLAS limited to a single
thread. Peak memory is the tracemalloc high-water mark of one forward pass,
which includes every numpy buffer allocated during the pass.
"""

from __future__ import annotations

import csv
import statistics
import time
import tracemalloc
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .complexity import ConfigDescriptor, count_macs
from .errors import ConfigError
from .masker import n_chunks, run_stack
from .pipeline import EnhancementModel, ModelConfig, enhance
from .tensor import Tensor

MEMORY_METHOD = "tracemalloc"
PROFILE_HEADER = ("config", "seconds", "run", "wall_ms", "peak_bytes", "gmacs")
RTF_HEADER = ("config", "seconds", "chunk_idx", "proc_ms", "budget_ms", "rtf")
MEMORY_HEADER = ("config", "seconds", "peak_bytes")
CROSSING_HEADER = ("config", "crossing_seconds", "crossing_chunk_idx")


@contextmanager
def single_thread():
    with threadpool_limits(limits=1):
        yield


def _input(model: EnhancementModel, seconds: float, seed: int = 0) -> np.ndarray:
    n = int(round(seconds * model.config.sample_rate))
    return np.random.default_rng(seed).uniform(-0.5, 0.5, n)


def peak_forward_bytes(model: EnhancementModel, x: np.ndarray) -> int:
    """tracemalloc high-water mark of one forward pass, relative to its start."""
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    tracemalloc.reset_peak()
    base = tracemalloc.get_traced_memory()[0]
    enhance(model, x)
    peak = tracemalloc.get_traced_memory()[1]
    if not was_tracing:
        tracemalloc.stop()
    return peak - base


@dataclass(frozen=True)
class ProfileReport:
    config: str
    seconds: float
    wall_ms_runs: tuple[float, ...]
    peak_bytes: int
    gmacs: float
    memory_method: str = MEMORY_METHOD

    @property
    def wall_ms(self) -> float:
        return statistics.median(self.wall_ms_runs)

    @property
    def runs(self) -> int:
        return len(self.wall_ms_runs)


def profile_forward(model: EnhancementModel, seconds: float = 10.0, runs: int = 10,
                    seed: int = 0) -> ProfileReport:
    """Median wall time over ``runs`` forward passes after one untimed warm-up.

    The warm-up pass doubles as the memory measurement so the timed passes run
    without allocator tracing.
    """
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    x = _input(model, seconds, seed)
    times = []
    with single_thread():
        peak = peak_forward_bytes(model, x)
        for _ in range(runs):
            start = time.perf_counter()
            enhance(model, x)
            times.append(1000.0 * (time.perf_counter() - start))
    gmacs = count_macs(ConfigDescriptor.from_config(model.config, n_samples=len(x))).gmacs
    return ProfileReport(model.config.label, seconds, tuple(times), peak, gmacs)


def memory_curve(model: EnhancementModel, seconds_list) -> list[tuple[float, int]]:
    seconds_list = list(seconds_list)
    if any(b <= a for a, b in zip(seconds_list, seconds_list[1:])):
        raise ConfigError("utterance lengths must be increasing")
    out = []
    with single_thread():
        for s in seconds_list:
            out.append((s, peak_forward_bytes(model, _input(model, s))))
    return out


# -- streaming -------------------------------------------------------------------


@dataclass(frozen=True)
class RtfPoint:
    seconds: float
    chunk_idx: int
    proc_s: float
    budget_s: float

    def __post_init__(self):
        if self.budget_s <= 0:
            raise ConfigError("chunk budget must be positive")

    @property
    def rtf(self) -> float:
        return self.proc_s / self.budget_s


def chunk_budget(config: ModelConfig) -> float:
    """Time for a new chunk to become available: chunk length plus chunk shift."""
    c = config.chunk
    return (c + c // 2) * config.hop / config.sample_rate


@dataclass(frozen=True)
class LatencyReport:
    chunk_budget: float
    with_frame: float


def latency(config: ModelConfig, include_frame: bool = False) -> float:
    """Algorithmic latency in seconds.

    By default this is the chunk budget ``(C + C/2) H / fs``; with
    ``include_frame`` the tail of the last analysis frame ``M / fs`` is added.
    """
    base = chunk_budget(config)
    return base + config.frame / config.sample_rate if include_frame else base


def latency_report(config: ModelConfig) -> LatencyReport:
    return LatencyReport(latency(config), latency(config, include_frame=True))


def _chunk_step(model: EnhancementModel, new_chunk: np.ndarray, history: np.ndarray) -> None:
    params = model.masker
    use_pe = params.config.positional_encoding
    for intra, inter in zip(params.intra, params.inter):
        run_stack(Tensor(new_chunk), intra, "intra", use_pe)
        run_stack(Tensor(history), inter, "inter", use_pe)


def streaming_point(model: EnhancementModel, seconds: float, repeats: int = 3,
                    seed: int = 0) -> RtfPoint:
    """Time the work needed when the chunk that completes ``seconds`` of audio arrives.

    Intra-chunk results of earlier chunks are assumed cached, so only the new
    chunk goes through the intra stacks; the inter stacks run over the whole
    chunk history ``(C, S, d)``.
    """
    cfg = model.config
    d = cfg.masker.d_model
    n = int(round(seconds * cfg.sample_rate))
    s = n_chunks(cfg.n_frames(n), cfg.chunk)
    rng = np.random.default_rng(seed)
    new_chunk = rng.standard_normal((1, cfg.chunk, d))
    history = rng.standard_normal((cfg.chunk, s, d))
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        _chunk_step(model, new_chunk, history)
        times.append(time.perf_counter() - start)
    return RtfPoint(seconds, s - 1, statistics.median(times), chunk_budget(cfg))


def simulate_streaming(model: EnhancementModel, seconds, repeats: int = 3,
                       stop_rtf: float | None = None) -> list[RtfPoint]:
    """RTF for a growing history.

    ``seconds`` is either a maximum utterance length, in which case every
    chunk index up to it is measured, or an increasing list of lengths to
    sample. With ``stop_rtf`` the sweep ends after the first point above it;
    the curve only grows from there and long histories get expensive.
    """
    cfg = model.config
    if np.isscalar(seconds):
        per_chunk = (cfg.chunk // 2) * cfg.hop / cfg.sample_rate
        first = (cfg.chunk * cfg.hop + cfg.frame - cfg.hop) / cfg.sample_rate
        lengths = list(np.arange(first, float(seconds) + 1e-9, per_chunk))
    else:
        lengths = [float(s) for s in seconds]
    points = []
    with single_thread():
        for s in lengths:
            point = streaming_point(model, s, repeats)
            points.append(point)
            if stop_rtf is not None and point.rtf > stop_rtf:
                break
    return points


def crossing(points: list[RtfPoint], threshold: float = 1.0) -> RtfPoint | None:
    """First point whose RTF exceeds ``threshold``."""
    for p in points:
        if p.rtf > threshold:
            return p
    return None


# -- CSV ---------------------------------------------------------------------------


def _write(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_profile_csv(path, reports: list[ProfileReport]) -> Path:
    """One row per timed run plus a ``median`` summary row per report."""
    rows = []
    for r in reports:
        for i, ms in enumerate(r.wall_ms_runs):
            rows.append((r.config, r.seconds, i, f"{ms:.3f}", r.peak_bytes, f"{r.gmacs:.6f}"))
        rows.append((r.config, r.seconds, "median", f"{r.wall_ms:.3f}", r.peak_bytes,
                     f"{r.gmacs:.6f}"))
    return _write(path, PROFILE_HEADER, rows)


def write_rtf_csv(path, curves: dict[str, list[RtfPoint]]) -> Path:
    rows = [(label, f"{p.seconds:.4f}", p.chunk_idx, f"{1000 * p.proc_s:.3f}",
             f"{1000 * p.budget_s:.3f}", f"{p.rtf:.5f}")
            for label, points in curves.items() for p in points]
    return _write(path, RTF_HEADER, rows)


def write_crossing_csv(path, curves: dict[str, list[RtfPoint]]) -> Path:
    rows = []
    for label, points in curves.items():
        hit = crossing(points)
        rows.append((label, "" if hit is None else f"{hit.seconds:.4f}",
                     "" if hit is None else hit.chunk_idx))
    return _write(path, CROSSING_HEADER, rows)


def write_memory_csv(path, curves: dict[str, list[tuple[float, int]]]) -> Path:
    rows = [(label, s, b) for label, curve in curves.items() for s, b in curve]
    return _write(path, MEMORY_HEADER, rows)
