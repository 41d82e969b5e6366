"""Empirical measurement protocols: sound-to-sound latency/jitter and RTF.

Latency: excitation trials with known onsets stream through a model;
latency per trial is the distance from the input onset to the first
detected output onset plus two blocks of buffering (capture one block
while computing the previous).  Trials where no onset is detected are
counted and excluded from statistics.  The reported headline numbers
come from the excitation spec with the best mean.

RTF: per block size, process_block is timed over `runs` executions with
a monotonic clock; the first `warmup` runs are discarded.  RTF is
processing time divided by block duration at the 44.1 kHz reference
rate.  The timing loop is strictly single threaded.
"""

from __future__ import annotations

import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import probes
from .archgraph import ms
from .errors import ComparisonError, InfeasibleBlockError, MeasurementFailureError
from .probes import ExcitationSpec, OnsetParams
from .streamkernel import ModelInstance

RTF_REFERENCE_RATE = 44100.0
DEFAULT_TRIALS = 500
DEFAULT_RUNS = 1100
DEFAULT_WARMUP = 100
DEFAULT_BLOCK_SIZES = (128, 256, 512, 2048)


# ---------------------------------------------------------------------------
# Report types
# ---------------------------------------------------------------------------


@dataclass
class SpecLatencyStats:
    kind: str
    length_samples: int
    amplitude_db: float
    trials: int
    detect_failures: int
    mean_ms: float
    std_ms: float
    min_ms: float
    max_ms: float

    @property
    def jitter_ms(self) -> float:
        return self.max_ms - self.min_ms

    @property
    def label(self) -> str:
        return f"{self.kind}/{self.length_samples}/{self.amplitude_db:g}dB"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "length_samples": self.length_samples,
            "amplitude_db": self.amplitude_db,
            "trials": self.trials,
            "detect_failures": self.detect_failures,
            "mean_ms": self.mean_ms,
            "std_ms": self.std_ms,
            "min_ms": self.min_ms,
            "max_ms": self.max_ms,
            "jitter_ms": self.jitter_ms,
        }


@dataclass
class LatencyReport:
    model: str
    sample_rate: int
    block_samples: int
    trials_per_spec: int
    master_seed: int
    buffering_included: bool
    per_spec: list[SpecLatencyStats]
    selected: SpecLatencyStats | None = None

    def to_dict(self) -> dict:
        return {
            "kind": "latency_report",
            "model": self.model,
            "sample_rate": self.sample_rate,
            "block_samples": self.block_samples,
            "trials_per_spec": self.trials_per_spec,
            "master_seed": self.master_seed,
            "buffering_included": self.buffering_included,
            "per_spec": [s.to_dict() for s in self.per_spec],
            "selected": self.selected.to_dict() if self.selected else None,
            "selected_mean_ms": self.selected.mean_ms if self.selected else None,
            "selected_jitter_ms": self.selected.jitter_ms if self.selected else None,
        }

    def to_csv(self) -> str:
        header = (
            "kind,length_samples,amplitude_db,trials,detect_failures,"
            "mean_ms,std_ms,min_ms,max_ms,jitter_ms"
        )
        rows = [header]
        for s in self.per_spec:
            rows.append(
                f"{s.kind},{s.length_samples},{s.amplitude_db:g},{s.trials},"
                f"{s.detect_failures},{s.mean_ms!r},{s.std_ms!r},{s.min_ms!r},"
                f"{s.max_ms!r},{s.jitter_ms!r}"
            )
        return "\n".join(rows) + "\n"


@dataclass
class RtfEntry:
    block: int
    feasible: bool
    runs: int = 0
    warmup: int = 0
    rtf_mean: float = float("nan")
    rtf_std: float = float("nan")
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "block": self.block,
            "feasible": self.feasible,
            "runs": self.runs,
            "warmup": self.warmup,
            "rtf_mean": self.rtf_mean,
            "rtf_std": self.rtf_std,
            "note": self.note,
        }


@dataclass
class RtfReport:
    model: str
    host: str
    entries: list[RtfEntry]

    def to_dict(self) -> dict:
        return {
            "kind": "rtf_report",
            "model": self.model,
            "host": self.host,
            "entries": [e.to_dict() for e in self.entries],
        }

    def to_csv(self) -> str:
        rows = ["block,feasible,runs,warmup,rtf_mean,rtf_std"]
        for e in self.entries:
            rows.append(
                f"{e.block},{e.feasible},{e.runs},{e.warmup},{e.rtf_mean!r},{e.rtf_std!r}"
            )
        return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# Latency harness
# ---------------------------------------------------------------------------

_WORKER_STATE: dict = {}


def _trial_latency(instance, spec, trial_ss, block, params):
    trial = probes.make_trial(spec, trial_ss)
    x = trial.samples
    pad = (-len(x)) % block
    if pad:
        x = np.concatenate([x, np.zeros(pad)])
    instance.reset()
    # one-shot processing: identical samples to block-by-block streaming
    # by the cached-padding equivalence, at a fraction of the loop cost
    y = instance.process_block_array(x[None, :].astype(np.float32))[0]
    onset = probes.first_onset(y, params, sample_rate=spec.sample_rate)
    if onset is None:
        return None
    return float(onset - trial.onset_index + 2 * block)


def _worker_init(spec_dict, weights):
    from .archgraph import ArchitectureSpec

    inst = ModelInstance(ArchitectureSpec.from_dict(spec_dict), weights)
    _WORKER_STATE["instance"] = inst


def _worker_run(args):
    spec, seeds, block, params = args
    inst = _WORKER_STATE["instance"]
    return [_trial_latency(inst, spec, ss, block, params) for ss in seeds]


def measure_latency(
    instance: ModelInstance,
    grid: list[ExcitationSpec] | None = None,
    trials_per_spec: int = DEFAULT_TRIALS,
    master_seed: int = 0,
    block_samples: int | None = None,
    params: OnsetParams | None = None,
    workers: int | None = None,
) -> LatencyReport:
    """Latency and jitter over the excitation grid.

    Runs trials_per_spec trials for every spec in the grid (default: the
    full 12-signal grid), aggregates onset-to-onset latencies plus two
    blocks of buffering, and selects the spec with the best mean.
    Per-trial seeds derive from (master_seed, spec index, trial index),
    so reports are reproducible bit for bit regardless of worker count.
    """
    sr = instance.spec.sample_rate
    c_r = instance.compression_ratio
    block = block_samples if block_samples is not None else c_r
    if block < c_r or block % c_r:
        raise InfeasibleBlockError(
            f"block {block} is not a positive multiple of the compression "
            f"ratio {c_r}"
        )
    grid = grid if grid is not None else probes.excitation_grid(sr)
    params = params or OnsetParams()
    if workers is None:
        workers = int(os.environ.get("STREAMLAT_WORKERS", "0")) or (
            os.cpu_count() or 1
        )
    per_spec: list[SpecLatencyStats] = []
    jobs = []
    for i, spec in enumerate(grid):
        seeds = np.random.SeedSequence([master_seed, i]).spawn(trials_per_spec)
        jobs.append((spec, seeds, block, params))

    use_pool = workers > 1 and trials_per_spec * len(grid) > 32
    if use_pool:
        import multiprocessing as mp

        ctx = mp.get_context("fork")
        chunks = []
        for spec, seeds, blk, prm in jobs:
            step = max(1, len(seeds) // workers)
            for j in range(0, len(seeds), step):
                chunks.append((spec, seeds[j : j + step], blk, prm))
        with ProcessPoolExecutor(
            max_workers=workers,
            mp_context=ctx,
            initializer=_worker_init,
            initargs=(instance.spec.to_dict(), instance.weights),
        ) as pool:
            chunk_results = list(pool.map(_worker_run, chunks, chunksize=1))
        results: dict[str, list] = {spec.label: [] for spec, *_ in jobs}
        for (spec, *_), vals in zip(chunks, chunk_results):
            results[spec.label].extend(vals)
    else:
        results = {}
        for spec, seeds, blk, prm in jobs:
            results[spec.label] = [
                _trial_latency(instance, spec, ss, blk, prm) for ss in seeds
            ]

    for spec, *_ in jobs:
        vals = results[spec.label]
        lat = np.array([v for v in vals if v is not None], dtype=np.float64)
        failures = sum(1 for v in vals if v is None)
        if len(lat) == 0:
            per_spec.append(
                SpecLatencyStats(
                    kind=spec.kind,
                    length_samples=spec.length_samples,
                    amplitude_db=spec.amplitude_db,
                    trials=len(vals),
                    detect_failures=failures,
                    mean_ms=float("nan"),
                    std_ms=float("nan"),
                    min_ms=float("nan"),
                    max_ms=float("nan"),
                )
            )
            continue
        lat_ms = lat / sr * 1000.0
        per_spec.append(
            SpecLatencyStats(
                kind=spec.kind,
                length_samples=spec.length_samples,
                amplitude_db=spec.amplitude_db,
                trials=len(vals),
                detect_failures=failures,
                mean_ms=float(np.mean(lat_ms)),
                std_ms=float(np.std(lat_ms)),
                min_ms=float(np.min(lat_ms)),
                max_ms=float(np.max(lat_ms)),
            )
        )
    usable = [s for s in per_spec if np.isfinite(s.mean_ms)]
    if not usable:
        raise MeasurementFailureError(
            "no excitation spec produced a single detected onset"
        )
    selected = min(usable, key=lambda s: s.mean_ms)
    return LatencyReport(
        model=instance.spec.name,
        sample_rate=sr,
        block_samples=block,
        trials_per_spec=trials_per_spec,
        master_seed=master_seed,
        buffering_included=True,
        per_spec=per_spec,
        selected=selected,
    )


# ---------------------------------------------------------------------------
# RTF harness
# ---------------------------------------------------------------------------


def host_description() -> str:
    return f"{platform.machine()} {platform.processor() or platform.system()}"


def measure_rtf(
    instance: ModelInstance,
    block_sizes=DEFAULT_BLOCK_SIZES,
    runs: int = DEFAULT_RUNS,
    warmup: int = DEFAULT_WARMUP,
    seed: int = 0,
) -> RtfReport:
    """Real-time factor per block size: runs timed after a warm-up prefix.

    Infeasible block sizes (below or off-grid of the compression ratio)
    are reported as skipped entries rather than errors.
    """
    if warmup >= runs:
        raise MeasurementFailureError("warmup must be smaller than runs")
    c_r = instance.compression_ratio
    rng = np.random.default_rng(seed)
    entries = []
    for block in block_sizes:
        if block < c_r or block % c_r:
            entries.append(
                RtfEntry(
                    block=block,
                    feasible=False,
                    note=f"block below or off-grid of compression ratio {c_r}",
                )
            )
            continue
        inputs = rng.uniform(-1.0, 1.0, size=(runs, 1, block)).astype(np.float32)
        instance.reset()
        times = np.empty(runs)
        for r in range(runs):
            t0 = time.perf_counter_ns()
            instance.process_block_array(inputs[r])
            times[r] = time.perf_counter_ns() - t0
        rtf = (times[warmup:] / 1e9) / (block / RTF_REFERENCE_RATE)
        entries.append(
            RtfEntry(
                block=block,
                feasible=True,
                runs=runs,
                warmup=warmup,
                rtf_mean=float(np.mean(rtf)),
                rtf_std=float(np.std(rtf)),
            )
        )
    return RtfReport(model=instance.spec.name, host=host_description(), entries=entries)


# ---------------------------------------------------------------------------
# Report comparison
# ---------------------------------------------------------------------------


def compare_reports(a, b) -> dict:
    """Side-by-side numeric deltas (b minus a) for regression tracking."""
    if isinstance(a, LatencyReport) and isinstance(b, LatencyReport):
        labels_a = [s.label for s in a.per_spec]
        labels_b = [s.label for s in b.per_spec]
        if labels_a != labels_b or a.block_samples != b.block_samples:
            raise ComparisonError("latency reports cover different grids or blocks")
        deltas = []
        for sa, sb in zip(a.per_spec, b.per_spec):
            deltas.append(
                {
                    "label": sa.label,
                    "mean_ms": sb.mean_ms - sa.mean_ms,
                    "jitter_ms": sb.jitter_ms - sa.jitter_ms,
                    "detect_failures": sb.detect_failures - sa.detect_failures,
                }
            )
        return {
            "kind": "latency_delta",
            "host_a": a.model,
            "host_b": b.model,
            "per_spec": deltas,
        }
    if isinstance(a, RtfReport) and isinstance(b, RtfReport):
        blocks_a = [e.block for e in a.entries]
        blocks_b = [e.block for e in b.entries]
        if blocks_a != blocks_b:
            raise ComparisonError("rtf reports cover different block sets")
        deltas = [
            {
                "block": ea.block,
                "rtf_mean": eb.rtf_mean - ea.rtf_mean,
                "rtf_std": eb.rtf_std - ea.rtf_std,
            }
            for ea, eb in zip(a.entries, b.entries)
        ]
        return {
            "kind": "rtf_delta",
            "host_a": a.host,
            "host_b": b.host,
            "entries": deltas,
        }
    raise ComparisonError("reports must be of the same type")
