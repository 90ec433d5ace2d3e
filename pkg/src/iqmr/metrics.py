"""Per-episode metrics rows, CSV I/O and run summaries."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

HEADER = ("episode", "cum_reward", "residual_energy_j", "delivered", "dropped", "fragmented", "mean_q")
WINDOW = 100
TOLERANCE = 0.05


@dataclass(frozen=True)
class EpisodeMetrics:
    episode: int
    cum_reward: float
    residual_energy_j: float
    delivered: int
    dropped: int
    fragmented: int
    mean_q: float


assert tuple(f.name for f in fields(EpisodeMetrics)) == HEADER


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def format_rows(rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(HEADER) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(v) for v in astuple(r)) + "\n")
    return buf.getvalue()


def write_csv(path: str | Path, rows) -> None:
    Path(path).write_text(format_rows(rows))


def read_csv(path: str | Path) -> list[EpisodeMetrics]:
    """Parse a metrics file, raising ValueError on a wrong header or bad row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        rows = []
        for n, rec in enumerate(reader, start=2):
            if len(rec) != len(HEADER):
                raise ValueError(f"{path}:{n}: expected {len(HEADER)} columns")
            try:
                rows.append(EpisodeMetrics(int(rec[0]), float(rec[1]), float(rec[2]), int(rec[3]),
                                           int(rec[4]), int(rec[5]), float(rec[6])))
            except ValueError as exc:
                raise ValueError(f"{path}:{n}: {exc}") from None
    return rows


def convergence_episode(rewards, window: int = WINDOW, tol: float = TOLERANCE) -> int:
    """First row after which every ``window``-row mean stays within ``tol`` of the final mean.

    The final mean is the mean of the last ``window`` rows; row ``e``'s
    window covers rows e .. e+window-1.  Runs shorter than one window
    report 0.
    """
    x = np.asarray(rewards, dtype=float)
    n = len(x)
    if n < window:
        return 0
    c = np.concatenate(([0.0], np.cumsum(x)))
    means = (c[window:] - c[:-window]) / window  # means[e] covers rows e..e+window-1
    final = means[-1]
    band = tol * abs(final)
    outside = np.nonzero(np.abs(means - final) > band + 1e-12 * max(1.0, abs(final)))[0]
    return 0 if len(outside) == 0 else int(outside[-1]) + 1


def tail_mean(values, window: int = WINDOW) -> float:
    x = np.asarray(values, dtype=float)
    return float(x[-window:].mean()) if len(x) else math.nan


def summarize(rows, initial_energy_j: float, injected: int | None = None) -> dict:
    """Headline numbers for one run."""
    if not rows:
        return {"episodes": 0, "final_residual_pct": 100.0, "throughput": 0.0, "throughput_pct": 0.0,
                "convergence_episode": 0, "delivered": 0, "dropped": 0, "final_cum_reward": 0.0}
    last = rows[-1]
    if injected is None:
        injected = last.delivered + last.dropped
    thr = last.delivered / injected if injected else 0.0
    return {
        "episodes": len(rows),
        "final_residual_pct": 100.0 * last.residual_energy_j / initial_energy_j,
        "throughput": thr,
        "throughput_pct": 100.0 * thr,
        "convergence_episode": convergence_episode([r.cum_reward for r in rows]),
        "delivered": last.delivered,
        "dropped": last.dropped,
        "injected": injected,
        "final_cum_reward": tail_mean([r.cum_reward for r in rows]),
    }
