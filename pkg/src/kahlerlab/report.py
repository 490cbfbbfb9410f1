"""Check reports and their canonical JSON form.

A CheckReport is the unit of verification output: one named check over some
samples, with residuals, a tolerance, and a pass flag that is always exactly
``max_residual <= tolerance``. Lower-bound checks (quantities that must stay
above a threshold) are encoded by storing the violation amount as the
residual with tolerance zero, so the same invariant applies.

Serialized reports are byte-deterministic for a fixed seed and environment:
keys are sorted, floats go through the shortest round-trip repr, and wall
times live in a separate ``timings`` block that comparisons may strip.
"""

import json
import platform
import sys
from dataclasses import dataclass, field

import numpy as np


@dataclass
class CheckReport:
    check_id: str
    subject: str
    residuals: list
    max_residual: float
    tolerance: float
    passed: bool
    n_samples: int = 0
    seed: int = None
    details: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def __post_init__(self):
        self.max_residual = float(self.max_residual)
        self.tolerance = float(self.tolerance)
        self.passed = bool(self.max_residual <= self.tolerance)

    @classmethod
    def from_residuals(cls, check_id, subject, residuals, tolerance,
                       n_samples=None, seed=None, details=None, wall_time=0.0):
        res = [float(r) for r in np.ravel(np.asarray(residuals, dtype=float))]
        mx = max(res) if res else 0.0
        return cls(check_id=check_id, subject=subject, residuals=res,
                   max_residual=mx, tolerance=tolerance, passed=(mx <= tolerance),
                   n_samples=len(res) if n_samples is None else n_samples,
                   seed=seed, details=details or {}, wall_time=wall_time)

    @classmethod
    def lower_bound(cls, check_id, subject, value, threshold,
                    n_samples=0, seed=None, details=None, wall_time=0.0):
        """Check that value >= threshold, encoded as a zero-tolerance residual."""
        viol = max(0.0, float(threshold) - float(value))
        det = dict(details or {})
        det.setdefault("value", float(value))
        det.setdefault("threshold", float(threshold))
        return cls(check_id=check_id, subject=subject, residuals=[viol],
                   max_residual=viol, tolerance=0.0, passed=(viol <= 0.0),
                   n_samples=n_samples, seed=seed, details=det,
                   wall_time=wall_time)

    def to_dict(self):
        return {
            "check_id": self.check_id,
            "subject": self.subject,
            "residuals": [float(r) for r in self.residuals],
            "max_residual": float(self.max_residual),
            "tolerance": float(self.tolerance),
            "passed": bool(self.passed),
            "n_samples": int(self.n_samples),
            "seed": None if self.seed is None else int(self.seed),
            "details": _jsonable(self.details),
        }

    def summary_line(self):
        mark = "PASS" if self.passed else "FAIL"
        return "%-4s %-28s %-22s max %.3e  tol %.3e  (n=%d)" % (
            mark, self.check_id, self.subject, self.max_residual,
            self.tolerance, self.n_samples)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (str, bool)) or obj is None:
        return obj
    return repr(obj)


def environment_versions():
    import numpy
    import scipy
    from . import __version__
    return {
        "package": __version__,
        "python": sys.version.split()[0],
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "platform": platform.system().lower(),
    }


def build_report(spec, seed, checks):
    """Assemble the full report dict: meta, checks, timings."""
    return {
        "meta": {
            "spec": spec,
            "seed": None if seed is None else int(seed),
            "versions": environment_versions(),
        },
        "checks": [c.to_dict() for c in checks],
        "timings": {"%03d:%s" % (i, c.check_id): float(c.wall_time)
                    for i, c in enumerate(checks)},
    }


def report_to_json(report, include_timings=True):
    """Canonical serialization; strip timings for byte comparisons."""
    obj = dict(report)
    if not include_timings:
        obj.pop("timings", None)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True)


def strip_timings(json_text):
    obj = json.loads(json_text)
    obj.pop("timings", None)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True)


def all_passed(checks):
    return all(c.passed for c in checks)
