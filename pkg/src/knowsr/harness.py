"""Seeded multi-run campaigns, aggregation and reporting."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .env_mpe import WorldConfig
from .errors import ConfigError, KnowSRError
from .maddpg import MetricsRecord, TrainConfig
from .sharing import ShareSchedule, run_training

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 100
DEFAULT_TOL_FRACTION = 0.02


@dataclass(frozen=True)
class Variant:
    name: str
    schedule: ShareSchedule

    @property
    def is_baseline(self) -> bool:
        return self.schedule.share_steps == 0


@dataclass
class ExperimentConfig:
    env: WorldConfig = field(default_factory=WorldConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    variants: list[Variant] = field(default_factory=list)
    episodes: int = 4000
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    smoothing_window: int = DEFAULT_WINDOW
    tolerance_fraction: float = DEFAULT_TOL_FRACTION
    out_dir: str = "runs"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seed list must not be empty")
        if self.episodes < 1:
            raise ConfigError("episode budget must be >= 1")
        if self.smoothing_window < 1:
            raise ConfigError("smoothing window must be >= 1")
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate variant names: {names}")

    def to_dict(self) -> dict:
        return {
            "scenario": asdict(self.env),
            "train": {**asdict(self.train), "episodes": self.episodes},
            "campaign": {
                "seeds": list(self.seeds),
                "smoothing_window": self.smoothing_window,
                "tolerance_fraction": self.tolerance_fraction,
                "variants": [{"name": v.name, **asdict(v.schedule)} for v in self.variants],
            },
        }


# --------------------------------------------------------------------------
# metrics files
# --------------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_metrics(path, records: list[MetricsRecord]) -> Path:
    """Deterministic CSV (fixed column order, round-trip float repr); no wall times."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MetricsRecord.FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, f)) for f in MetricsRecord.FIELDS])
    return path


def write_timing(path, records: list[MetricsRecord]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("episode", "wall_seconds"))
        for r in records:
            w.writerow((r.episode, f"{r.wall_seconds:.6f}"))
    return path


def read_metrics(path) -> list[MetricsRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(MetricsRecord(
                seed=int(row["seed"]), episode=int(row["episode"]),
                avg_step_reward=float(row["avg_step_reward"]), episode_reward=float(row["episode_reward"]),
                phase=row["phase"], self_updates=int(row["self_updates"]),
                share_updates=int(row["share_updates"]), noise_scale=float(row["noise_scale"]),
            ))
    return out


def metrics_filename(variant: str, seed: int) -> str:
    return f"{variant}__seed{seed}.csv"


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------

def trailing_mean(series, window: int) -> np.ndarray:
    """Mean of the last ``window`` values up to and including each position."""
    x = np.asarray(series, dtype=np.float64)
    if window <= 1 or x.size == 0:
        return x.copy()
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def full_windows(series, window: int) -> tuple[int, np.ndarray]:
    """Trailing means from the first position whose window is full.

    Returns ``(offset, values)`` with ``values[k]`` belonging to index ``offset + k``.
    A series shorter than the window yields only its overall mean at the last index.
    """
    s = trailing_mean(series, window)
    if s.size == 0:
        raise ValueError("empty series")
    offset = min(max(window, 1), s.size) - 1
    return offset, s[offset:]


def first_best_episode(series, tolerance: float, window: int = 1) -> int:
    """Earliest 0-based index whose smoothed value is within ``tolerance`` of the best.

    Only fully-windowed points compete: a partial window at the start of training
    averages one or two noisy episodes and would otherwise win by luck.
    """
    offset, s = full_windows(series, window)
    return offset + int(np.argmax(s >= s.max() - tolerance))


def reach_episode(series, level: float, window: int = 1) -> int | None:
    """Earliest 1-based episode whose (fully windowed) smoothed value is at least ``level``."""
    offset, s = full_windows(series, window)
    hit = np.flatnonzero(s >= level)
    return offset + int(hit[0]) + 1 if hit.size else None


def default_tolerance(smoothed, fraction: float = DEFAULT_TOL_FRACTION) -> float:
    s = np.asarray(smoothed)
    return float(fraction * (s.max() - s.min()))


@dataclass
class Aggregate:
    mean: np.ndarray
    half_width: np.ndarray
    ci_defined: bool
    n_seeds: int

    @property
    def low(self) -> np.ndarray:
        return self.mean - self.half_width

    @property
    def high(self) -> np.ndarray:
        return self.mean + self.half_width


def confidence_interval(matrix, level: float = 0.95) -> Aggregate:
    """Per-column mean and CI half-width over rows (seeds).

    Student-t quantile below 30 seeds, normal quantile from 30 on. With one seed
    the half-width is reported as 0 and ``ci_defined`` is False.
    """
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    n = m.shape[0]
    mean = m.mean(axis=0)
    if n < 2:
        return Aggregate(mean, np.zeros_like(mean), False, n)
    q = stats.t.ppf(0.5 + level / 2, df=n - 1) if n < 30 else stats.norm.ppf(0.5 + level / 2)
    sem = m.std(axis=0, ddof=1) / np.sqrt(n)
    return Aggregate(mean, q * sem, True, n)


@dataclass
class SummaryRow:
    variant: str
    mean_step_reward: float
    mean_episode_reward: float
    first_best_episode: int  # 1-based
    final_smoothed_reward: float
    ci_half_width: np.ndarray
    ci_defined: bool
    n_seeds: int
    episodes: int
    share_start_episode: int | None = None


def _by_seed(records: dict[int, list[MetricsRecord]], attr: str) -> np.ndarray:
    # sorted seeds make the aggregate independent of the campaign's seed order
    return np.array([[getattr(r, attr) for r in records[s]] for s in sorted(records)])


def seed_mean(records: dict[int, list[MetricsRecord]], attr: str = "avg_step_reward") -> np.ndarray:
    """Per-episode mean over seeds (unsmoothed)."""
    return _by_seed(records, attr).mean(axis=0)


def smoothed_curves(records: dict[int, list[MetricsRecord]], window: int) -> Aggregate:
    step = _by_seed(records, "avg_step_reward")
    smoothed = np.stack([trailing_mean(row, window) for row in step])
    return confidence_interval(smoothed)


def summarize(name: str, records: dict[int, list[MetricsRecord]], window: int = DEFAULT_WINDOW,
              tolerance_fraction: float = DEFAULT_TOL_FRACTION,
              share_start: int | None = None) -> SummaryRow:
    step = _by_seed(records, "avg_step_reward")
    ep = _by_seed(records, "episode_reward")
    agg = smoothed_curves(records, window)
    mean = step.mean(axis=0)
    tol = default_tolerance(full_windows(mean, window)[1], tolerance_fraction)
    fb = first_best_episode(mean, tol, window)
    return SummaryRow(name, float(step.mean()), float(ep.mean()), fb + 1, float(agg.mean[-1]),
                      agg.half_width, agg.ci_defined, agg.n_seeds, step.shape[1], share_start)


# --------------------------------------------------------------------------
# comparison
# --------------------------------------------------------------------------

@dataclass
class ComparisonRow:
    variant: str
    mean_step_reward: float
    mean_episode_reward: float
    first_best_episode: int
    reward_flag: str  # better / worse / tie / baseline
    time_flag: str


def _flag(value, base, higher_is_better: bool) -> str:
    if value == base:
        return "tie"
    return "better" if (value > base) == higher_is_better else "worse"


def compare_variants(summaries: list[SummaryRow], baseline: str | None = None) -> list[ComparisonRow]:
    """Rows sorted by mean reward (best first), each flagged against the baseline
    on reward (higher wins) and first-best time (earlier wins)."""
    if len(summaries) < 2:
        raise ValueError("need at least two summaries to compare")
    names = [s.variant for s in summaries]
    if baseline is None:
        baseline = "MADDPG" if "MADDPG" in names else names[0]
    if baseline not in names:
        raise ValueError(f"baseline {baseline!r} not among {names}")
    base = summaries[names.index(baseline)]
    rows = []
    for s in sorted(summaries, key=lambda s: s.mean_step_reward, reverse=True):
        if s.variant == baseline:
            rf = tf = "baseline"
        else:
            rf = _flag(s.mean_step_reward, base.mean_step_reward, True)
            tf = _flag(s.first_best_episode, base.first_best_episode, False)
        rows.append(ComparisonRow(s.variant, s.mean_step_reward, s.mean_episode_reward,
                                  s.first_best_episode, rf, tf))
    return rows


def render_table(rows: list[ComparisonRow]) -> str:
    head = f"{'method':<14}{'avg step rew':>14}{'avg ep rew':>13}{'first best':>12}  reward   time"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.variant:<14}{r.mean_step_reward:>14.4f}{r.mean_episode_reward:>13.3f}"
                     f"{r.first_best_episode:>12d}  {r.reward_flag:<8} {r.time_flag}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# plot data
# --------------------------------------------------------------------------

def emit_plot_data(records: dict[int, list[MetricsRecord]], out, variant: str,
                   window: int = DEFAULT_WINDOW, share_start: int | None = None) -> list[Path]:
    """``<variant>.csv`` with (episode, mean, ci_low, ci_high) and a JSON sidecar
    holding the share-start marker."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{variant}.csv"
    meta_path = out / f"{variant}.meta.json"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("episode", "smoothed_mean", "ci_low", "ci_high"))
        if records and any(records.values()):
            agg = smoothed_curves(records, window)
            for e, (m, lo, hi) in enumerate(zip(agg.mean, agg.low, agg.high), start=1):
                w.writerow((e, repr(float(m)), repr(float(lo)), repr(float(hi))))
            n = agg.n_seeds
        else:
            n = 0
    meta = {"variant": variant, "share_start_episode": share_start, "smoothing_window": window,
            "n_seeds": n}
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return [csv_path, meta_path]


def plot_curves(plot_dir, out_png) -> Path | None:
    """Render every ``*.csv`` in ``plot_dir`` to one PNG; needs matplotlib."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not installed; skipping figure")
        return None
    plot_dir = Path(plot_dir)
    fig, ax = plt.subplots(figsize=(7, 4))
    markers = set()
    for f in sorted(plot_dir.glob("*.csv")):
        data = np.genfromtxt(f, delimiter=",", names=True)
        if data.size == 0:
            continue
        data = np.atleast_1d(data)
        ax.plot(data["episode"], data["smoothed_mean"], label=f.stem)
        ax.fill_between(data["episode"], data["ci_low"], data["ci_high"], alpha=0.2)
        meta = json.loads((plot_dir / f"{f.stem}.meta.json").read_text())
        if meta.get("share_start_episode"):
            markers.add(meta["share_start_episode"])
    for m in markers:
        ax.axvline(m, color="gray", linestyle=":")
    ax.set_xlabel("episode")
    ax.set_ylabel("average step reward")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return Path(out_png)


# --------------------------------------------------------------------------
# campaigns
# --------------------------------------------------------------------------

class CampaignError(KnowSRError, RuntimeError):
    """A run inside a campaign failed; partial results are on disk."""


def run_single(env: WorldConfig, train: TrainConfig, schedule: ShareSchedule, seed: int,
               episodes: int, checkpoint_dir=None) -> list[MetricsRecord]:
    return run_training(env, train, schedule, seed, episodes, checkpoint_dir=checkpoint_dir).records


def _job(args):
    env, train, variant, seed, episodes = args
    return variant.name, seed, run_single(env, train, variant.schedule, seed, episodes)


def max_workers() -> int:
    raw = os.environ.get("KNOWSR_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"KNOWSR_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


@dataclass
class CampaignResult:
    records: dict[str, dict[int, list[MetricsRecord]]]
    summaries: list[SummaryRow]
    # every (variant, seed, records) in job order, duplicates of a seed included
    runs: list[tuple[str, int, list[MetricsRecord]]] = field(default_factory=list)


def run_campaign(config: ExperimentConfig, workers: int | None = None, persist: bool = True) -> CampaignResult:
    """Run every (variant, seed), persist per-run metrics, summarise each variant."""
    if not config.variants:
        raise ConfigError("campaign has no variants")
    out = Path(config.out_dir)
    if persist:
        (out / "metrics").mkdir(parents=True, exist_ok=True)
        (out / "campaign.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    jobs = [(config.env, config.train, v, s, config.episodes) for v in config.variants for s in config.seeds]
    workers = min(workers or max_workers(), len(jobs))
    records: dict[str, dict[int, list[MetricsRecord]]] = {v.name: {} for v in config.variants}
    runs = []

    def store(name, seed, recs):
        records[name][seed] = recs
        runs.append((name, seed, recs))
        if persist:
            write_metrics(out / "metrics" / metrics_filename(name, seed), recs)
            write_timing(out / "metrics" / f"{name}__seed{seed}.timing.csv", recs)
        log.info("finished %s seed %d: final avg step reward %.4f", name, seed, recs[-1].avg_step_reward)

    try:
        if workers <= 1:
            for job in jobs:
                store(*_job(job))
        else:
            with ProcessPoolExecutor(workers) as ex:
                for res in ex.map(_job, jobs):
                    store(*res)
    except Exception as exc:
        if persist:
            (out / "PARTIAL").write_text(f"{type(exc).__name__}: {exc}\n")
        raise CampaignError(f"campaign aborted: {exc}") from exc

    summaries = [
        summarize(v.name, records[v.name], config.smoothing_window, config.tolerance_fraction,
                  None if v.is_baseline else v.schedule.share_start_episode)
        for v in config.variants
    ]
    if persist:
        write_summary(out / "summary.csv", summaries)
    return CampaignResult(records, summaries, runs)


def write_summary(path, summaries: list[SummaryRow]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("variant", "mean_step_reward", "mean_episode_reward", "first_best_episode",
                    "final_smoothed_reward", "n_seeds", "ci_defined", "mean_ci_half_width"))
        for s in summaries:
            w.writerow((s.variant, repr(s.mean_step_reward), repr(s.mean_episode_reward),
                        s.first_best_episode, repr(s.final_smoothed_reward), s.n_seeds,
                        int(s.ci_defined), repr(float(np.mean(s.ci_half_width)))))
    return Path(path)


def load_campaign_records(in_dir) -> dict[str, dict[int, list[MetricsRecord]]]:
    """Read every ``metrics/<variant>__seed<k>.csv`` under a campaign directory."""
    out: dict[str, dict[int, list[MetricsRecord]]] = {}
    for f in sorted(Path(in_dir, "metrics").glob("*__seed*.csv")):
        if f.name.endswith(".timing.csv"):
            continue
        name, _, seed = f.stem.rpartition("__seed")
        out.setdefault(name, {})[int(seed)] = read_metrics(f)
    return out
