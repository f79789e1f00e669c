"""Naturalistic trajectory ingestion in a HighD-compatible CSV schema and
extraction of leader-follower episodes for calibration.
"""

from __future__ import annotations

import warnings

import numpy as np
import pandas as pd

from .calibration import TrajectoryRecord

__all__ = ["TRAJECTORY_COLUMNS", "load_trajectory_csv", "extract_cf_pairs"]

TRAJECTORY_COLUMNS = ["time_s", "vehicle_id", "lane_id", "x_m", "y_m",
                      "vx_mps", "ax_mps2", "leader_id", "length_m"]


def load_trajectory_csv(path) -> pd.DataFrame:
    """Read and validate a trajectory table.

    Requires exactly the documented columns, strictly increasing time per
    vehicle, and one uniform time step across the file.
    """
    df = pd.read_csv(path, dtype={"vehicle_id": str, "leader_id": str})
    missing = [c for c in TRAJECTORY_COLUMNS if c not in df.columns]
    extra = [c for c in df.columns if c not in TRAJECTORY_COLUMNS]
    if missing or extra:
        raise ValueError(f"trajectory CSV schema mismatch: missing {missing}, unexpected {extra}")
    df["leader_id"] = df["leader_id"].fillna("")
    steps = []
    for vid, group in df.groupby("vehicle_id"):
        dt = np.diff(group["time_s"].to_numpy())
        if len(dt) and dt.min() <= 0:
            raise ValueError(f"time not strictly increasing for vehicle {vid}")
        steps.extend(np.round(dt, 9).tolist())
    uniq = sorted(set(steps))
    if len(uniq) > 1:
        raise ValueError(f"non-uniform time step: found {uniq[:5]}")
    return df


def extract_cf_pairs(df: pd.DataFrame, min_samples: int = 2) -> list[TrajectoryRecord]:
    """Contiguous leader-follower episodes with positive spacing.

    Episodes split whenever the follower's leader or either vehicle's lane
    changes, or the time series has a gap. Followers pointing at themselves
    or at vehicles absent from the file are skipped with a warning.
    """
    step = float(np.round(np.diff(np.unique(df["time_s"]))[:1], 9)[0]) if len(df) > 1 else 0.1
    by_vehicle = {vid: g.set_index("time_s") for vid, g in df.groupby("vehicle_id")}
    records: list[TrajectoryRecord] = []

    for vid, g in df.sort_values("time_s").groupby("vehicle_id", sort=True):
        g = g.reset_index(drop=True)
        leader_ids = g["leader_id"].to_numpy()
        times = g["time_s"].to_numpy()
        lanes = g["lane_id"].to_numpy()

        start = 0
        for i in range(len(g) + 1):
            boundary = (
                i == len(g)
                or leader_ids[i] != leader_ids[start]
                or lanes[i] != lanes[start]
                or (i > 0 and not np.isclose(times[i] - times[i - 1], step))
            )
            if not boundary:
                continue
            _emit_episode(g.iloc[start:i], vid, by_vehicle, step, min_samples, records)
            start = i
    return records


def _emit_episode(chunk: pd.DataFrame, vid: str, by_vehicle, step: float,
                  min_samples: int, records: list) -> None:
    if len(chunk) < min_samples:
        return
    leader = chunk["leader_id"].iloc[0]
    if leader in ("", "0", "-1"):
        return
    if leader == vid:
        warnings.warn(f"vehicle {vid} lists itself as leader; episode rejected")
        return
    if leader not in by_vehicle:
        warnings.warn(f"leader {leader} of vehicle {vid} not in file; episode skipped")
        return
    lead = by_vehicle[leader]
    t = chunk["time_s"].to_numpy()
    present = np.isin(np.round(t, 9), np.round(lead.index.to_numpy(), 9))
    if not present.all():
        # keep the longest prefix where the leader exists
        cut = int(np.argmin(present)) if not present.all() else len(present)
        if cut < min_samples:
            warnings.warn(f"leader {leader} absent during episode of {vid}; episode skipped")
            return
        chunk = chunk.iloc[:cut]
        t = t[:cut]
    lead_rows = lead.loc[np.round(t, 9)]
    # split once more wherever either lane changed mid-episode
    lane_ok = lead_rows["lane_id"].to_numpy() == lead_rows["lane_id"].to_numpy()[0]
    if not lane_ok.all():
        cut = int(np.argmin(lane_ok))
        if cut >= min_samples:
            _append_record(chunk.iloc[:cut], lead_rows.iloc[:cut], vid, step, records)
        rest = chunk.iloc[cut:]
        if len(rest) >= min_samples:
            _emit_episode(rest, vid, by_vehicle, step, min_samples, records)
        return
    _append_record(chunk, lead_rows, vid, step, records)


def _append_record(chunk, lead_rows, vid, step, records) -> None:
    spacing = lead_rows["x_m"].to_numpy() - chunk["x_m"].to_numpy()
    if np.any(spacing <= 0.0):
        warnings.warn(f"non-positive spacing in episode of {vid}; episode skipped")
        return
    records.append(TrajectoryRecord(
        step,
        lead_rows["x_m"].to_numpy(dtype=float),
        lead_rows["vx_mps"].to_numpy(dtype=float),
        chunk["x_m"].to_numpy(dtype=float),
        chunk["vx_mps"].to_numpy(dtype=float),
        leader_id=str(chunk["leader_id"].iloc[0]),
        follower_id=str(vid),
    ))
