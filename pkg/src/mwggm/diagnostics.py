"""Convergence and correctness diagnostics: effective sample size and the
two-simulator joint-distribution comparison (marginal-conditional draws vs
a successive-conditional chain)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import special

MIN_SAMPLES = 1000
Z_THRESHOLD = 4.0


def autocorrelation(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(x, size)
    acov = np.fft.irfft(spec * np.conj(spec), size)[:n]
    if acov[0] <= 0:
        return np.r_[1.0, np.zeros(n - 1)]
    return acov / acov[0]


def ess(x: np.ndarray) -> float:
    """Effective sample size with the initial monotone positive-sequence truncation."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    if np.ptp(x) == 0:
        return float(n)
    rho = autocorrelation(x)
    n_pairs = (n - 1) // 2
    pairs = rho[0:2 * n_pairs:2] + rho[1:2 * n_pairs:2]
    total = 0.0
    prev = math.inf
    for g in pairs:
        if g <= 0:
            break
        g = min(g, prev)
        total += g
        prev = g
    tau = max(-1.0 + 2.0 * total, 1.0 / n)
    return float(min(n / tau, n * math.log10(n))) if tau > 0 else float(n)


@dataclass
class StatisticResult:
    name: str
    z: float
    mean_marginal: float
    mean_successive: float
    ess_marginal: float
    ess_successive: float

    @property
    def passed(self) -> bool:
        return abs(self.z) < Z_THRESHOLD


def z_score(marginal: np.ndarray, successive: np.ndarray) -> tuple[float, float, float]:
    """Difference of means over its ESS-corrected standard error."""
    a = np.asarray(marginal, dtype=float)
    b = np.asarray(successive, dtype=float)
    ea, eb = ess(a), ess(b)
    var = a.var(ddof=1) / ea + b.var(ddof=1) / eb
    diff = a.mean() - b.mean()
    if var <= 0:
        return (0.0 if diff == 0 else math.copysign(math.inf, diff)), ea, eb
    return float(diff / math.sqrt(var)), ea, eb


@dataclass
class DiagnoseReport:
    results: list[StatisticResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[StatisticResult]:
        return [r for r in self.results if not r.passed]

    @property
    def expected_false_failures(self) -> float:
        """Expected number of |z| >= 4 among this many null statistics."""
        return len(self.results) * float(special.erfc(Z_THRESHOLD / math.sqrt(2.0)))

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "threshold": Z_THRESHOLD,
            "n_statistics": len(self.results),
            "expected_false_failures": self.expected_false_failures,
            "statistics": {r.name: {"z": r.z, "mean_marginal": r.mean_marginal,
                                    "mean_successive": r.mean_successive,
                                    "ess_marginal": r.ess_marginal,
                                    "ess_successive": r.ess_successive,
                                    "passed": r.passed} for r in self.results},
        }


def diagnose(marginal: Mapping[str, np.ndarray], successive: Mapping[str, np.ndarray]) -> DiagnoseReport:
    """Compare every statistic present in both trace sets."""
    names = [k for k in marginal if k in successive]
    if not names:
        raise ValueError("no common statistics to compare")
    results = []
    for name in names:
        a = np.asarray(marginal[name], dtype=float)
        b = np.asarray(successive[name], dtype=float)
        if min(a.size, b.size) < MIN_SAMPLES:
            raise ValueError(f"statistic {name!r} has fewer than {MIN_SAMPLES} samples")
        z, ea, eb = z_score(a, b)
        results.append(StatisticResult(name, z, float(a.mean()), float(b.mean()), ea, eb))
    return DiagnoseReport(results)
