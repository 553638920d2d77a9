"""Reconstruction error against a reference cloud, and CSV reporting."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloud
from .geometry import PointCloud

CDF_STEPS = 100


@dataclass
class ErrorReport:
    mean_m: float
    std_m: float
    cdf: list
    point_counts: tuple[int, int]
    cp_percent: float | None = None

    def __post_init__(self):
        if self.mean_m < 0 or self.std_m < 0:
            raise ValueError("mean and std must be >= 0")
        fr = [f for _, f in self.cdf]
        if any(b < a for a, b in zip(fr, fr[1:])):
            raise ValueError("cdf must be nondecreasing")
        if fr and fr[-1] != 1.0:
            raise ValueError("cdf must end at 1")


def nn_distances(query: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from every query point to its nearest reference point."""
    d, _ = cKDTree(reference).query(query, k=1)
    return np.asarray(d, dtype=np.float64)


def error_cdf(errors: np.ndarray, steps: int = CDF_STEPS) -> list:
    """``(threshold, fraction <= threshold)`` at ``steps`` even thresholds from 0 to max."""
    errors = np.sort(np.asarray(errors, dtype=np.float64))
    top = float(errors[-1])
    ts = np.linspace(0.0, top, steps)
    ts[-1] = top
    frac = np.searchsorted(errors, ts, side="right") / len(errors)
    return [(float(t), float(f)) for t, f in zip(ts, frac)]


def nn_error(recon: PointCloud, gt: PointCloud, chamfer: bool = False,
             cp_percent: float | None = None) -> ErrorReport:
    """Distance from each reconstructed point to the nearest ground-truth point.

    With ``chamfer`` the ground-truth-to-reconstruction distances are pooled in
    as well.
    """
    if len(recon) == 0 or len(gt) == 0:
        raise EmptyCloud("empty point cloud")
    err = nn_distances(recon.points, gt.points)
    if chamfer:
        err = np.concatenate([err, nn_distances(gt.points, recon.points)])
    return ErrorReport(
        mean_m=float(err.mean()),
        std_m=float(err.std()),
        cdf=error_cdf(err),
        point_counts=(len(recon), len(gt)),
        cp_percent=cp_percent,
    )


def report_csv(report: ErrorReport) -> bytes:
    """CDF rows, a blank line, then the summary. Floats use ``repr`` so they parse back exactly."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold_m", "fraction"])
    for t, f in report.cdf:
        w.writerow([repr(t), repr(f)])
    w.writerow([])
    w.writerow(["metric", "value"])
    w.writerow(["mean_m", repr(report.mean_m)])
    w.writerow(["std_m", repr(report.std_m)])
    w.writerow(["cp_percent", "" if report.cp_percent is None else repr(report.cp_percent)])
    w.writerow(["recon_points", report.point_counts[0]])
    w.writerow(["gt_points", report.point_counts[1]])
    return buf.getvalue().encode("utf-8")


def parse_report_csv(data: bytes) -> ErrorReport:
    rows = list(csv.reader(io.StringIO(data.decode("utf-8"))))
    split = rows.index([])
    cdf = [(float(t), float(f)) for t, f in rows[1:split]]
    summary = dict(rows[split + 2:])
    cp = summary["cp_percent"]
    return ErrorReport(
        mean_m=float(summary["mean_m"]),
        std_m=float(summary["std_m"]),
        cdf=cdf,
        point_counts=(int(summary["recon_points"]), int(summary["gt_points"])),
        cp_percent=float(cp) if cp else None,
    )
