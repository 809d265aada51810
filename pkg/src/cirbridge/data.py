"""Ingest per-day count series and normalize them onto the unit interval.

Input formats (UTF-8, comma-separated, LF, mandatory headers):
  counts CSV:    day_id,t_seconds,count  (one row per bin; an empty count
                 field, or a missing row, is a gap: that bin is absent)
  day table CSV: day_id,day_length_seconds

Each retained day is rescaled to unit time (s = (k+1/2)*dt/T) and unit total
(Z = count/total), so bin values sum to exactly 1; days with zero total carry
no information about the intraday shape and are excluded.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, TooFewDaysError
from .moments import MomentCurves

__all__ = [
    "DaySeries",
    "NormalizedDay",
    "NormalizedEnsemble",
    "load_day_counts",
    "normalize_days",
    "empirical_curves",
    "ensemble_to_day_files",
    "write_curves_csv",
]


@dataclass(frozen=True)
class DaySeries:
    """Raw counts for one day.  counts has one entry per nominal bin from
    sunrise; None marks a gap (no data)."""

    day_id: str
    day_length_seconds: float
    bin_seconds: float
    counts: tuple
    total: int

    @property
    def n_bins(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class NormalizedDay:
    day_id: str
    s: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class NormalizedEnsemble:
    days: list[NormalizedDay]
    excluded_days: list[str]


def _read_rows(path, expected_header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if [h.strip() for h in header] != expected_header:
            raise ParseError(
                f"{path}: line 1: expected header {','.join(expected_header)}, "
                f"got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            yield lineno, [f.strip() for f in row]


def _load_day_table(path) -> dict[str, float]:
    lengths: dict[str, float] = {}
    for lineno, row in _read_rows(path, ["day_id", "day_length_seconds"]):
        if len(row) != 2:
            raise ParseError(f"{path}: line {lineno}: expected 2 fields")
        day_id, raw = row
        if day_id in lengths:
            raise ParseError(f"{path}: line {lineno}: duplicate day_id {day_id!r}")
        try:
            length = float(raw)
        except ValueError:
            raise ParseError(
                f"{path}: line {lineno}: bad day_length_seconds {raw!r}"
            ) from None
        if not length > 0.0:
            raise ParseError(f"{path}: line {lineno}: day length must be positive")
        lengths[day_id] = length
    return lengths


def _modal_spacing(ts: list[float]) -> float | None:
    diffs = [b - a for a, b in zip(ts, ts[1:]) if b - a > 0.0]
    if not diffs:
        return None
    return Counter(diffs).most_common(1)[0][0]


def load_day_counts(counts_file, day_table_file) -> list[DaySeries]:
    """One DaySeries per day present in both files, in counts-file order.

    The bin width is inferred as the modal spacing of t_seconds within each
    day (falling back to the modal spacing across the whole file).
    """
    lengths = _load_day_table(day_table_file)

    order: list[str] = []
    rows: dict[str, list[tuple[int, float, int | None]]] = {}
    for lineno, row in _read_rows(counts_file, ["day_id", "t_seconds", "count"]):
        if len(row) != 3:
            raise ParseError(f"{counts_file}: line {lineno}: expected 3 fields")
        day_id, t_raw, c_raw = row
        if day_id not in lengths:
            raise ParseError(
                f"{counts_file}: line {lineno}: unknown day_id {day_id!r} "
                "(not in day table)"
            )
        try:
            t = float(t_raw)
        except ValueError:
            raise ParseError(
                f"{counts_file}: line {lineno}: bad t_seconds {t_raw!r}"
            ) from None
        if t < 0.0:
            raise ParseError(f"{counts_file}: line {lineno}: negative t_seconds")
        if c_raw == "":
            count: int | None = None  # explicit gap
        else:
            try:
                count = int(c_raw)
            except ValueError:
                raise ParseError(
                    f"{counts_file}: line {lineno}: bad count {c_raw!r}"
                ) from None
            if count < 0:
                raise ParseError(f"{counts_file}: line {lineno}: negative count")
        if day_id not in rows:
            order.append(day_id)
            rows[day_id] = []
        if rows[day_id] and t <= rows[day_id][-1][1]:
            raise ParseError(
                f"{counts_file}: line {lineno}: non-monotone t_seconds for "
                f"day {day_id!r}"
            )
        rows[day_id].append((lineno, t, count))

    # modal spacing across all days, as the fallback for single-row days
    all_diffs: list[float] = []
    for day in order:
        ts = [t for _, t, _ in rows[day]]
        all_diffs.extend(b - a for a, b in zip(ts, ts[1:]) if b - a > 0.0)
    global_spacing = Counter(all_diffs).most_common(1)[0][0] if all_diffs else None

    days: list[DaySeries] = []
    for day_id in order:
        day_rows = rows[day_id]
        length = lengths[day_id]
        spacing = _modal_spacing([t for _, t, _ in day_rows]) or global_spacing
        if spacing is None:
            raise ParseError(
                f"{counts_file}: cannot infer bin width for day {day_id!r} "
                "(single row and no other days)"
            )
        nominal = max(int(round(length / spacing)), 1)
        counts: list[int | None] = [None] * nominal
        for lineno, t, count in day_rows:
            k = int(round(t / spacing))
            if abs(t - k * spacing) > 1e-6 * spacing:
                raise ParseError(
                    f"{counts_file}: line {lineno}: t_seconds {t!r} is not a "
                    f"multiple of the bin width {spacing!r}"
                )
            if k >= nominal:
                if k == nominal and length / spacing > nominal - 0.5:
                    counts.append(None)
                    nominal += 1
                else:
                    raise ParseError(
                        f"{counts_file}: line {lineno}: bin start {t!r} beyond "
                        f"day length {length!r}"
                    )
            if counts[k] is not None:
                raise ParseError(
                    f"{counts_file}: line {lineno}: duplicate bin for day {day_id!r}"
                )
            counts[k] = count
        total = sum(c for c in counts if c is not None)
        days.append(
            DaySeries(
                day_id=day_id,
                day_length_seconds=length,
                bin_seconds=spacing,
                counts=tuple(counts),
                total=int(total),
            )
        )
    return days


def normalize_days(days: list[DaySeries]) -> NormalizedEnsemble:
    """Unit-interval, unit-sum rescaling; zero-total days are excluded."""
    retained: list[NormalizedDay] = []
    excluded: list[str] = []
    for day in days:
        if day.total <= 0:
            excluded.append(day.day_id)
            continue
        ks = np.array([k for k, c in enumerate(day.counts) if c is not None])
        cs = np.array([c for c in day.counts if c is not None], dtype=np.float64)
        s = (ks + 0.5) * day.bin_seconds / day.day_length_seconds
        z = cs / float(day.total)
        retained.append(NormalizedDay(day_id=day.day_id, s=s, z=z))
    return NormalizedEnsemble(days=retained, excluded_days=excluded)


def empirical_curves(normalized: NormalizedEnsemble, n_grid_bins: int) -> MomentCurves:
    """Pool all (s, Z) observations onto n_grid_bins equal bins of (0,1) and
    take per-bin mean and unbiased std; bins with fewer than two observations
    are dropped (no imputation)."""
    if len(normalized.days) < 2:
        raise TooFewDaysError(
            f"need at least 2 retained days, got {len(normalized.days)}"
        )
    if n_grid_bins < 10:
        raise ValueError("n_grid_bins must be >= 10")
    s_all = np.concatenate([d.s for d in normalized.days])
    z_all = np.concatenate([d.z for d in normalized.days])
    bins = np.minimum((s_all * n_grid_bins).astype(np.int64), n_grid_bins - 1)

    count = np.bincount(bins, minlength=n_grid_bins).astype(np.float64)
    sums = np.bincount(bins, weights=z_all, minlength=n_grid_bins)
    sq = np.bincount(bins, weights=z_all * z_all, minlength=n_grid_bins)
    occupied = count >= 2
    mean = sums[occupied] / count[occupied]
    var = (sq[occupied] - count[occupied] * mean * mean) / (count[occupied] - 1.0)
    std = np.sqrt(np.maximum(var, 0.0))
    mids = (np.arange(n_grid_bins) + 0.5) / n_grid_bins
    return MomentCurves(
        grid=mids[occupied],
        mean=np.maximum(mean, 0.0),
        std=std,
        source_tag="empirical",
        n_obs=count[occupied].astype(np.int64),
    )


def ensemble_to_day_files(
    grid,
    paths,
    counts_file,
    day_table_file,
    bins_per_day: int = 60,
    bin_seconds: float = 600.0,
    count_scale: float = 1e6,
    day_prefix: str = "day",
) -> list[str]:
    """Convert simulated paths into synthetic count files (one path = one
    day), sampling each path at the bins_per_day bin midpoints.

    The recorded grid must contain every midpoint (k+1/2)/bins_per_day.
    Returns the written day ids.
    """
    grid = np.asarray(grid, dtype=np.float64)
    paths = np.asarray(paths, dtype=np.float64)
    mids = (np.arange(bins_per_day) + 0.5) / bins_per_day
    cols = []
    for s in mids:
        hit = np.nonzero(np.abs(grid - s) <= 1e-9)[0]
        if hit.size != 1:
            raise ValueError(
                f"recorded grid does not contain bin midpoint {s!r}; choose "
                "n_steps/record_stride so midpoints are recorded"
            )
        cols.append(int(hit[0]))
    values = paths[:, cols]
    counts = np.rint(count_scale * values).astype(np.int64)

    width = len(str(paths.shape[0] - 1))
    day_ids = [f"{day_prefix}{p:0{width}d}" for p in range(paths.shape[0])]
    day_length = bins_per_day * bin_seconds
    with open(day_table_file, "w", newline="", encoding="utf-8") as fh:
        fh.write("day_id,day_length_seconds\n")
        for day_id in day_ids:
            fh.write(f"{day_id},{format(day_length, '.17g')}\n")
    with open(counts_file, "w", newline="", encoding="utf-8") as fh:
        fh.write("day_id,t_seconds,count\n")
        for p, day_id in enumerate(day_ids):
            for k in range(bins_per_day):
                fh.write(f"{day_id},{format(k * bin_seconds, '.17g')},{counts[p, k]}\n")
    return day_ids


def write_curves_csv(curves: MomentCurves, path):
    """Write curves as `s,mean,std,n_obs` (std/n_obs empty when absent)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("s,mean,std,n_obs\n")
        for i, s in enumerate(curves.grid):
            std = format(curves.std[i], ".17g") if curves.std is not None else ""
            n = str(int(curves.n_obs[i])) if curves.n_obs is not None else ""
            fh.write(f"{format(s, '.17g')},{format(curves.mean[i], '.17g')},{std},{n}\n")
