"""Report types, slope fitting, and serialization shared by all suites.

A DecayReport records norms against a scale variable together with a
fitted log2 slope and a pass verdict.  Three verdict directions exist:
"upper" passes when slope <= expected_bound + tolerance, "lower" when
slope >= expected_bound - tolerance, and "flat" when |slope -
expected_bound| <= tolerance.  Norms at or below the floor 1e-14 are
clamped before fitting; if every point is floored the data is noise and
an upper-bound suite passes vacuously.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .core import InputError

NORM_FLOOR = 1e-14


def fit_slope(scales, norms, floor=NORM_FLOOR):
    """Least-squares slope of log2(norm) against the scale variable.

    Returns (slope, r_squared, n_floored).  Requires at least four
    distinct scales.  Norms below ``floor`` are clamped to it; an
    all-floored data set fits slope 0 with r_squared 1 by convention.
    """
    x = np.asarray(scales, dtype=np.float64)
    y = np.asarray(norms, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError("scales and norms must be one-dimensional and equal length")
    if x.shape[0] < 4:
        raise InputError(f"need at least 4 points to fit a slope, got {x.shape[0]}")
    if np.unique(x).shape[0] < 4:
        raise InputError("need at least 4 distinct scales to fit a slope")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise InputError("norms must be finite and nonnegative")
    floored = y <= floor
    ly = np.log2(np.maximum(y, floor))
    if floored.all():
        return 0.0, 1.0, int(floored.sum())
    xm, ym = x.mean(), ly.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (ly - ym)) / sxx)
    resid = ly - (ym + slope * (x - xm))
    sstot = float(np.sum((ly - ym) ** 2))
    r2 = 1.0 if sstot == 0 else 1.0 - float(np.sum(resid**2)) / sstot
    return slope, r2, int(floored.sum())


@dataclass
class DecayReport:
    suite_id: str
    scales: list
    norms: list
    fitted_slope: float
    r_squared: float
    expected_bound: float
    tolerance: float
    passed: bool
    environment: dict = field(default_factory=dict)
    direction: str = "upper"
    n_floored: int = 0

    def to_json_dict(self):
        return {
            "suite_id": self.suite_id,
            "points": [
                {"j": float(s), "norm": float(v)}
                for s, v in zip(self.scales, self.norms)
            ],
            "fitted_slope": self.fitted_slope,
            "r_squared": self.r_squared,
            "expected_bound": self.expected_bound,
            "tolerance": self.tolerance,
            "pass": bool(self.passed),
            "environment": self.environment,
        }

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            [
                "suite_id",
                "scale",
                "norm",
                "fitted_slope",
                "r_squared",
                "expected_bound",
                "tolerance",
                "pass",
            ]
        )
        for s, v in zip(self.scales, self.norms):
            writer.writerow(
                [
                    self.suite_id,
                    f"{float(s):.12g}",
                    f"{float(v):.16e}",
                    f"{self.fitted_slope:.12g}",
                    f"{self.r_squared:.12g}",
                    f"{self.expected_bound:.12g}",
                    f"{self.tolerance:.12g}",
                    str(bool(self.passed)).lower(),
                ]
            )
        return buf.getvalue()


def slope_verdict(slope, expected_bound, tolerance, direction, all_floored=False):
    if direction == "upper":
        return bool(all_floored or slope <= expected_bound + tolerance)
    if direction == "lower":
        return bool(slope >= expected_bound - tolerance)
    if direction == "flat":
        return bool(all_floored or abs(slope - expected_bound) <= tolerance)
    if direction == "none":
        # cap-type suites: the slope is reported for the record, the pass
        # criterion lives entirely in the extra conditions
        return True
    raise InputError(f"unknown verdict direction {direction!r}")


def make_decay_report(
    suite_id,
    scales,
    norms,
    expected_bound,
    tolerance,
    environment=None,
    direction="upper",
    extra_pass=True,
):
    """Fit, apply the verdict rule for ``direction``, and bundle a report.

    ``extra_pass`` folds in side conditions (exactness residuals, audits)
    that the suite requires beyond the slope itself.
    """
    slope, r2, n_floored = fit_slope(scales, norms)
    env = dict(environment) if environment else {}
    env.setdefault("direction", direction)
    all_floored = n_floored == len(list(scales))
    ok = slope_verdict(slope, expected_bound, tolerance, direction, all_floored)
    if all_floored:
        env["all_points_floored"] = True
    return DecayReport(
        suite_id=suite_id,
        scales=list(scales),
        norms=[float(v) for v in norms],
        fitted_slope=slope,
        r_squared=r2,
        expected_bound=float(expected_bound),
        tolerance=float(tolerance),
        passed=bool(ok and extra_pass),
        environment=env,
        direction=direction,
        n_floored=n_floored,
    )


@dataclass
class DispersionReport:
    suite_id: str
    table: list  # rows {"h", "t", "sup", "normalized"}
    ratio: float
    fitted_slope: float
    expected_bound: float
    tolerance: float
    passed: bool
    environment: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "suite_id": self.suite_id,
            "table": self.table,
            "ratio": self.ratio,
            "fitted_slope": self.fitted_slope,
            "expected_bound": self.expected_bound,
            "tolerance": self.tolerance,
            "pass": bool(self.passed),
            "environment": self.environment,
        }

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            [
                "suite_id",
                "scale",
                "norm",
                "fitted_slope",
                "r_squared",
                "expected_bound",
                "tolerance",
                "pass",
            ]
        )
        for row in self.table:
            # scale column carries log2 h; norm carries the normalized sup
            writer.writerow(
                [
                    self.suite_id,
                    f"{np.log2(row['h']):.12g}",
                    f"{row['normalized']:.16e}",
                    f"{self.fitted_slope:.12g}",
                    "",
                    f"{self.expected_bound:.12g}",
                    f"{self.tolerance:.12g}",
                    str(bool(self.passed)).lower(),
                ]
            )
        return buf.getvalue()


def write_report(report, out_dir, fmt="json"):
    """Write <suite_id>.json and always a CSV mirror; returns the paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    base = os.path.join(out_dir, report.suite_id)
    if fmt not in ("json", "csv"):
        raise InputError(f"unknown report format {fmt!r}")
    if fmt == "json":
        with open(base + ".json", "w") as fh:
            json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths.append(base + ".json")
    with open(base + ".csv", "w") as fh:
        fh.write(report.to_csv())
    paths.append(base + ".csv")
    return paths
