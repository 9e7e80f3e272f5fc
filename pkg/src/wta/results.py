"""Result container shared by all two-sample tests."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

from scipy import stats


@dataclass(frozen=True)
class Contribution:
    time: int
    observed: float
    expected: float
    variance: float


@dataclass(frozen=True)
class TestResult:
    method: str
    z: float
    p_value: float
    contributions: tuple[Contribution, ...] = ()
    degenerate: bool = False
    extra: dict[str, Any] = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class

    @property
    def chi_square(self) -> float:
        return self.z * self.z

    def to_dict(self) -> dict[str, Any]:
        out = {
            "method": self.method,
            "z": self.z,
            "chi_square": self.chi_square,
            "p_value": self.p_value,
            "df": 1,
            "degenerate": self.degenerate,
            "contributions": [
                {"time": c.time, "observed": c.observed, "expected": c.expected,
                 "variance": c.variance}
                for c in self.contributions
            ],
        }
        out.update(self.extra)
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def two_sided_p(z: float) -> float:
    return float(2.0 * stats.norm.sf(abs(z)))


def z_test(method: str, contributions: list[Contribution]) -> TestResult:
    """Aggregate per-timepoint (O, E, V) into a Z statistic.

    A zero total variance means there is nothing to compare; the result is
    flagged degenerate with p = 1.
    """
    diff = math.fsum(c.observed - c.expected for c in contributions)
    var = math.fsum(c.variance for c in contributions)
    if var <= 0.0:
        return TestResult(method, 0.0, 1.0, tuple(contributions), degenerate=True)
    z = diff / math.sqrt(var)
    return TestResult(method, z, two_sided_p(z), tuple(contributions))
