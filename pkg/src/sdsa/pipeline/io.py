"""CSV dataset files, manifests and atomic output helpers."""
from __future__ import annotations

import contextlib
import csv
import json
import math
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..records import DRIVER_FIELDS, DailyDrivers, SampleSeries, TargetSeries

SCHEMA_VERSION = 1
STATIC_HEADER = ["sample_id", "lat", "lon", "clay_frac", "om_pct", "yield_target", "yield_observed"]
DAILY_HEADER = ["sample_id", "day_index", *DRIVER_FIELDS, "ra", "rh", "flux_observed"]
TARGETS_HEADER = ["sample_id", "day_index", "ra", "rh", "flux_observed"]


def fmt(v):
    """Shortest round-trip text for a float; empty string for NaN."""
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def _num(text, where):
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(f"{where}: not a number: {text!r}") from None


def _flag(text, where):
    if text not in ("0", "1"):
        raise DataError(f"{where}: expected 0 or 1, got {text!r}")
    return text == "1"


@contextlib.contextmanager
def atomic_dir(path):
    """Yield a scratch directory that replaces ``path`` only if the block succeeds."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if path.exists():
        shutil.rmtree(path)
    os.replace(tmp, path)


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_dataset(out_dir, samples, targets, manifest):
    """Write static.csv, daily.csv and manifest.json into ``out_dir`` (replaced atomically)."""
    with atomic_dir(out_dir) as tmp:
        with open(tmp / "static.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(STATIC_HEADER)
            for s, t in zip(samples, targets):
                w.writerow([s.sample_id, fmt(s.lat), fmt(s.lon), fmt(s.clay_frac), fmt(s.om_pct),
                            fmt(t.yield_target), int(t.yield_observed)])
        with open(tmp / "daily.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DAILY_HEADER)
            for s, t in zip(samples, targets):
                m = s.days.matrix()
                for d in range(s.n_days):
                    obs = bool(t.mask[d])
                    w.writerow([s.sample_id, d, *(fmt(v) for v in m[d]),
                                fmt(t.ra[d]) if obs else "", fmt(t.rh[d]) if obs else "", int(obs)])
        man = dict(manifest)
        man["schema_version"] = SCHEMA_VERSION
        man.setdefault("sample_regions", {s.sample_id: s.region for s in samples})
        (tmp / "manifest.json").write_text(dump_json(man))


def _read_rows(path, header):
    path = Path(path)
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"{path} not found") from None
    with fh:
        r = csv.reader(fh)
        try:
            got = next(r)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if got != header:
            raise DataError(f"{path}: header {got} does not match expected {header}")
        rows = list(r)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: line {i + 2} has {len(row)} fields, expected {len(header)}")
    return rows


def _group_days(rows, path):
    by_id = {}
    for row in rows:
        try:
            day = int(row[1])
        except ValueError:
            raise DataError(f"{path}: bad day_index {row[1]!r} for sample {row[0]}") from None
        by_id.setdefault(row[0], []).append((day, row))
    for sid, items in by_id.items():
        items.sort(key=lambda x: x[0])
        days = [d for d, _ in items]
        if days != list(range(len(days))):
            raise DataError(f"{path}: sample {sid} day_index is not contiguous from 0")
    return by_id


def load_dataset(static_path, daily_path, targets_path=None, manifest_path=None):
    """Read samples and targets, joined on sample_id and sorted by day_index.

    Targets come from the ra/rh/flux_observed columns of daily.csv unless a
    separate ``targets_path`` (sample_id,day_index,ra,rh,flux_observed) is
    given. Missing driver cells load as NaN for later interpolation.
    """
    static_rows = _read_rows(static_path, STATIC_HEADER)
    daily_rows = _read_rows(daily_path, DAILY_HEADER)
    if not daily_rows:
        raise DataError(f"{daily_path} has no data rows")
    days_by_id = _group_days(daily_rows, daily_path)
    tgt_by_id = None
    if targets_path is not None:
        tgt_rows = _read_rows(targets_path, TARGETS_HEADER)
        tgt_by_id = _group_days(tgt_rows, targets_path)
    regions = {}
    if manifest_path is not None and Path(manifest_path).exists():
        regions = json.loads(Path(manifest_path).read_text()).get("sample_regions", {})

    seen = set()
    samples, targets = [], []
    for row in static_rows:
        sid = row[0]
        where = f"{static_path}: sample {sid}"
        if sid in seen:
            raise DataError(f"{where}: duplicate sample_id")
        seen.add(sid)
        if sid not in days_by_id:
            raise DataError(f"sample_id {sid} has no rows in {daily_path}")
        items = days_by_id[sid]
        vals = np.array([[_num(x, f"{daily_path}: sample {sid}") for x in r[2:2 + len(DRIVER_FIELDS)]]
                         for _, r in items]).reshape(len(items), len(DRIVER_FIELDS))
        drivers = DailyDrivers.from_matrix(vals)
        if tgt_by_id is not None:
            if sid not in tgt_by_id or len(tgt_by_id[sid]) != len(items):
                raise DataError(f"sample_id {sid} missing or misaligned in {targets_path}")
            trows = [r[2:] for _, r in tgt_by_id[sid]]
        else:
            trows = [r[2 + len(DRIVER_FIELDS):] for _, r in items]
        ra = np.array([_num(r[0], where) for r in trows])
        rh = np.array([_num(r[1], where) for r in trows])
        mask = np.array([_flag(r[2], where) for r in trows], dtype=bool)
        if np.isnan(ra[mask]).any() or np.isnan(rh[mask]).any():
            raise DataError(f"{where}: flux marked observed but value missing")
        samples.append(SampleSeries(sid, _num(row[1], where), _num(row[2], where), _num(row[3], where),
                                    _num(row[4], where), drivers, region=regions.get(sid)))
        targets.append(TargetSeries(ra, rh, mask, _num(row[5], where), _flag(row[6], where)))
    extra = set(days_by_id) - seen
    if extra:
        raise DataError(f"sample_id {sorted(extra)[0]} in {daily_path} has no row in {static_path}")
    return samples, targets


def load_dataset_dir(path):
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"dataset directory {path} not found")
    return load_dataset(path / "static.csv", path / "daily.csv", manifest_path=path / "manifest.json")


def read_manifest(path):
    p = Path(path) / "manifest.json"
    return json.loads(p.read_text()) if p.exists() else {}
