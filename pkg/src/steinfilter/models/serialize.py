"""CSV serialization for trajectories and beam-scan sequences.

Trajectories: one row per time step, columns ``t, s0, ..., s{d-1}``.

Scan sequences: one row per time step, columns
``t, sigma, n_beams, b0_x, b0_y, b1_x, b1_y, ...`` padded with empty fields
up to the widest scan in the file.
"""

from __future__ import annotations

import csv
from typing import List, Sequence

import numpy as np

from .gridmap import BeamScan


def _fmt(x: float) -> str:
    return repr(float(x))


def save_trajectory_csv(path, states: np.ndarray) -> None:
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"s{i}" for i in range(states.shape[1])])
        for t, row in enumerate(states):
            writer.writerow([t] + [_fmt(v) for v in row])


def load_trajectory_csv(path) -> np.ndarray:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 1
        rows = [[float(v) for v in row[1 : 1 + d]] for row in reader]
    return np.asarray(rows, dtype=np.float64)


def save_scans_csv(path, scans: Sequence[BeamScan]) -> None:
    k_max = max(s.n_beams for s in scans)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["t", "sigma", "n_beams"]
        for i in range(k_max):
            header += [f"b{i}_x", f"b{i}_y"]
        writer.writerow(header)
        for t, scan in enumerate(scans):
            row = [t, _fmt(scan.noise_std), scan.n_beams]
            for i in range(k_max):
                if i < scan.n_beams:
                    row += [_fmt(scan.endpoints[i, 0]), _fmt(scan.endpoints[i, 1])]
                else:
                    row += ["", ""]
            writer.writerow(row)


def load_scans_csv(path) -> List[BeamScan]:
    scans = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            sigma = float(row[1])
            k = int(row[2])
            pts = np.array(
                [[float(row[3 + 2 * i]), float(row[4 + 2 * i])] for i in range(k)]
            )
            scans.append(BeamScan(endpoints=pts, noise_std=sigma))
    return scans
