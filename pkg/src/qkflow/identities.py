"""Randomized sweep of the algebraic identities and inequalities of S_k and Q_k.

Relative errors divide by the same expression evaluated on |lam| (every
product replaced by its absolute value), which bounds the size of each
partial sum and therefore the rounding error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import symfunc
from .symfunc import elementary, magnitude, pad

TINY = np.finfo(float).tiny

SUM_RULES = ("affine_jump", "deletion_split", "deleted_sum", "weighted_deleted_sum",
             "square_weighted_sum", "double_deletion_sum")
QUOTIENT_RULES = ("gradient_trace", "euler_relation", "gradient_second_moment")


@dataclass
class Result:
    name: str
    worst: float
    tol: float
    samples: int
    skipped: str = ""

    @property
    def passed(self) -> bool:
        return self.skipped != "" or self.worst <= self.tol

    def line(self) -> str:
        if self.skipped:
            return f"{self.name:<28} skipped: {self.skipped}"
        status = "ok" if self.passed else "FAIL"
        return f"{self.name:<28} max {self.worst:.3e}  tol {self.tol:.1e}  n={self.samples:<6} {status}"


def _rel(lhs, rhs, scale) -> float:
    return float(np.max(np.abs(lhs - rhs) / np.maximum(scale, TINY)))


def sum_rule_errors(lam: np.ndarray) -> dict[str, float]:
    """Worst relative error of the deleted-table identities over a batch, all k."""
    lam = np.asarray(lam, dtype=float)
    m, n = lam.shape
    a = np.abs(lam)
    s, sa = pad(elementary(lam)), pad(elementary(a))  # index l + 1
    d1, d1a = pad(symfunc.deleted_once(lam)), pad(symfunc.deleted_once(a))  # [.., i, l + 1]
    d2, d2a = symfunc.deleted_twice(lam), symfunc.deleted_twice(a)  # [.., i, j, l]
    off = (1.0 - np.eye(n))[None, :, :, None]
    out = dict.fromkeys(SUM_RULES, 0.0)
    for k in range(0, n + 1):
        sk = k + 1  # padded index of S_k
        # S_{k+1} is affine in lam_i with slope S_{k,i}
        bumped = lam[:, None, :] + np.eye(n)[None]
        jump = elementary(bumped)[..., k + 1] - s[:, None, sk + 1] if k + 1 <= n else 0.0 * d1[..., 0]
        scale = magnitude(np.abs(bumped))[..., k + 1] + sa[:, None, sk + 1] if k + 1 <= n else 1.0
        out["affine_jump"] = max(out["affine_jump"], _rel(jump, d1[..., sk], scale))
        # S_k = S_{k,i} + lam_i S_{k-1,i}
        out["deletion_split"] = max(out["deletion_split"], _rel(s[:, None, sk], d1[..., sk] + lam * d1[..., sk - 1],
                                                sa[:, None, sk] + d1a[..., sk] + a * d1a[..., sk - 1]))
        out["deleted_sum"] = max(out["deleted_sum"], _rel(d1[..., sk].sum(-1), (n - k) * s[:, sk],
                                                d1a[..., sk].sum(-1) + (n - k) * sa[:, sk]))
        out["weighted_deleted_sum"] = max(out["weighted_deleted_sum"], _rel((lam * d1[..., sk]).sum(-1), (k + 1) * s[:, sk + 1],
                                                (a * d1a[..., sk]).sum(-1) + (k + 1) * sa[:, sk + 1]))
        rhs5 = s[:, 2] * s[:, sk + 1] - (k + 2) * s[:, sk + 2]
        scale5 = (a * a * d1a[..., sk]).sum(-1) + sa[:, 2] * sa[:, sk + 1] + (k + 2) * sa[:, sk + 2]
        out["square_weighted_sum"] = max(out["square_weighted_sum"], _rel((lam * lam * d1[..., sk]).sum(-1), rhs5, scale5))
        if k < n:
            lhs6 = (d2[..., k] * off[..., 0]).sum(axis=1)  # sum over i != j
            scale6 = (d2a[..., k] * off[..., 0]).sum(axis=1) + (n - k - 1) * d1a[..., sk]
            out["double_deletion_sum"] = max(out["double_deletion_sum"], _rel(lhs6, (n - k - 1) * d1[..., sk], scale6))
    return out


def gradient_batch(lam: np.ndarray, k: int) -> np.ndarray:
    """dQ_k/dlam for a batch inside Gamma_{k+1}."""
    s = elementary(lam)
    d1 = pad(symfunc.deleted_once(lam))
    return (d1[..., k + 1] * s[:, None, k] - s[:, None, k + 1] * d1[..., k]) / s[:, None, k] ** 2


def quotient_rule_errors(lam: np.ndarray, k: int) -> dict[str, float]:
    """Trace, Euler and second-moment identities of dQ_k on a batch in Gamma_{k+1}."""
    n = lam.shape[1]
    a = np.abs(lam)
    s = pad(elementary(lam), 0, 2)
    g = gradient_batch(lam, k)
    ga = np.abs(g)
    q = s[:, k + 1] / s[:, k]
    out = {}
    out["euler_relation"] = _rel((lam * g).sum(-1), q, (a * ga).sum(-1) + np.abs(q))
    if k >= 1:
        ratio = s[:, k + 1] * s[:, k - 1] / s[:, k] ** 2
        rhs = (n - k) - (n - k + 1) * ratio
        out["gradient_trace"] = _rel(g.sum(-1), rhs, ga.sum(-1) + (n - k) + (n - k + 1) * np.abs(ratio))
    q_next = s[:, k + 2] / s[:, k + 1]
    rhs3 = (k + 1) * q * q - (k + 2) * q_next * q
    scale3 = (a * a * ga).sum(-1) + (k + 1) * q * q + (k + 2) * np.abs(q_next * q)
    out["gradient_second_moment"] = _rel((lam * lam * g).sum(-1), rhs3, scale3)
    return out


def newton_defects(lam: np.ndarray, k: int) -> np.ndarray:
    """Batched defect divided by its |lam| scale; non-negative up to rounding."""
    n = lam.shape[1]
    s, sa = elementary(lam), magnitude(lam)
    d = k * (n - k) * s[:, k] ** 2 - (k + 1) * (n - k + 1) * s[:, k - 1] * s[:, k + 1]
    scale = k * (n - k) * sa[:, k] ** 2 + (k + 1) * (n - k + 1) * sa[:, k - 1] * sa[:, k + 1]
    return d / np.maximum(scale, TINY)


def maclaurin_violation(lam: np.ndarray, l: int, k: int) -> float:
    """max of (Q_k - ratio * Q_l) / (ratio * Q_l) over a batch in Gamma_{k+1}; <= 0 expected."""
    n = lam.shape[1]
    s = elementary(lam)
    bound = symfunc.maclaurin_ratio(n, l, k) * s[:, l + 1] / s[:, l]
    return float(np.max((s[:, k + 1] / s[:, k] - bound) / bound))


def random_symmetric(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    b = rng.normal(size=(size, n, n))
    return 0.5 * (b + np.swapaxes(b, 1, 2))


def random_arrowhead(rng: np.random.Generator, n: int, k: int, size: int) -> np.ndarray:
    """Arrowhead matrices with negative (1,1) entry and spectrum in Gamma_{k+1}.

    A negative diagonal entry forces a negative eigenvalue, so k <= n - 2.
    """
    if not 0 <= k <= n - 2:
        raise ValueError(f"need 0 <= k <= n - 2, got n={n}, k={k}")
    out = []
    tries = 0
    while len(out) < size:
        tries += 1
        if tries > 1000 * size:
            raise RuntimeError("arrowhead sampling acceptance rate too low")
        a = np.diag(np.concatenate([[-rng.uniform(0.01, 0.5)], rng.uniform(0.5, 3.0, n - 1)]))
        a[0, 1:] = a[1:, 0] = rng.uniform(-0.5, 0.5, n - 1)
        lam = symfunc.eigenvalues(a)
        if symfunc.in_cone(lam, k + 1, rtol=1e-6):
            out.append(a)
    return np.array(out)


def _cases(n_max: int, kmin: int = 0):
    for n in range(1, n_max + 1):
        for k in range(kmin, n):
            yield n, k


def run_suite(seed: int = 0, n_max: int = 8, samples: int = 1000,
              log: Callable[[str], None] | None = None) -> list[Result]:
    """All sweeps; results in a fixed order so output is reproducible."""
    rng = np.random.default_rng(seed)
    results: list[Result] = []

    worst: dict[str, float] = {}
    count = 0
    for n in range(1, n_max + 1):
        lam = rng.uniform(-2.0, 2.0, size=(samples, n))
        for name, v in sum_rule_errors(lam).items():
            worst[name] = max(worst.get(name, 0.0), v)
        count += samples
    results += [Result(name, v, 1e-10, count) for name, v in worst.items()]

    worst = {}
    count = 0
    for n, k in _cases(n_max):
        lam = symfunc.random_cone_points(rng, n, k + 1, samples, margin=1e-3)
        for name, v in quotient_rule_errors(lam, k).items():
            worst[name] = max(worst.get(name, 0.0), v)
        count += samples
    for name in QUOTIENT_RULES:
        if name in worst:
            results.append(Result(name, worst[name], 1e-10, count))
        else:
            results.append(Result(name, 0.0, 1e-10, 0, skipped="needs k >= 1, so n >= 2"))

    if n_max >= 2:
        low, equal = 0.0, 0.0
        count = 0
        for n, k in _cases(n_max, kmin=1):
            lam = rng.uniform(-5.0, 5.0, size=(samples, n))
            low = min(low, float(np.min(newton_defects(lam, k))))
            eq = np.repeat(rng.uniform(-5.0, 5.0, size=(16, 1)), n, axis=1)
            equal = max(equal, float(np.max(np.abs(newton_defects(eq, k)))))
            count += samples
        results.append(Result("newton_defect", abs(low), 1e-12, count))
        results.append(Result("newton_equal_entries", equal, 1e-12, count))
        viol = -math.inf
        count = 0
        for n, k in _cases(n_max, kmin=1):
            lam = symfunc.random_cone_points(rng, n, k + 1, samples, margin=1e-6)
            for l in range(0, k + 1):
                viol = max(viol, maclaurin_violation(lam, l, k))
            count += samples
        results.append(Result("maclaurin_quotient", max(viol, 0.0), 1e-12, count))
    else:
        results.append(Result("newton_defect", 0.0, 1e-12, 0, skipped="needs n >= 2"))
        results.append(Result("newton_equal_entries", 0.0, 1e-12, 0, skipped="needs n >= 2"))
        results.append(Result("maclaurin_quotient", 0.0, 1e-12, 0, skipped="needs n >= 2"))

    worst_m = 0.0
    count = 0
    for n in range(1, min(n_max, 6) + 1):
        for b in random_symmetric(rng, n, -(-samples // min(n_max, 6))):
            for k in range(1, n + 1):
                brute = symfunc.principal_minor_sum(b, k)
                fast = symfunc.matrix_sym(b, k)
                scale = float(magnitude(symfunc.eigenvalues(b))[k])
                worst_m = max(worst_m, abs(fast - brute) / max(scale, TINY))
            count += 1
    results.append(Result("matrix_minor_sum", worst_m, 1e-9, count))

    worst_g = 0.0
    count = 0
    for n, k in _cases(n_max):
        for lam in symfunc.random_cone_points(rng, n, k + 1, max(1, samples // 10), margin=1e-2):
            worst_g = max(worst_g, gradient_fd_error(lam, k))
            count += 1
    results.append(Result("qk_gradient_fd", worst_g, 1e-6, count))

    if n_max >= 2:
        # arrowhead and concavity sweeps share the case list n <= 6, 1 <= k + 1 <= n - 1
        n_arrow = sum(1 for n, k in _cases(min(n_max, 6)) if k <= n - 2)
        failed = 0
        count = 0
        for n, k in _cases(min(n_max, 6)):
            if k > n - 2:
                continue
            for a in random_arrowhead(rng, n, k, -(-samples // n_arrow)):
                failed += not symfunc.structured_derivative_check(a, k).passed
                count += 1
        results.append(Result("arrowhead_derivatives", float(failed), 0.0, count))
        worst_c = 0.0
        count = 0
        for n, k in _cases(min(n_max, 6), kmin=1):
            for lam in symfunc.random_cone_points(rng, n, k + 1, -(-samples // n_arrow), margin=1e-2):
                worst_c = max(worst_c, symfunc.concavity_probe(lam, k) * float(np.max(np.abs(lam))))
                count += 1
        results.append(Result("concavity", worst_c, 1e-6, count))
    else:
        results.append(Result("arrowhead_derivatives", 0.0, 0.0, 0, skipped="needs n >= 2"))
        results.append(Result("concavity", 0.0, 1e-6, 0, skipped="needs n >= 2"))

    if log is not None:
        for r in results:
            log(r.line())
    return results


def gradient_fd_error(lam: np.ndarray, k: int, step: float = 1e-6) -> float:
    """Relative error of qk_gradient against central differences, normalized by |grad|_inf."""
    g = symfunc.qk_gradient(lam, k)
    delta = step * float(np.max(np.abs(lam)))
    eye = np.eye(lam.size) * delta
    fd = np.array([(symfunc.qk(lam + e, k) - symfunc.qk(lam - e, k)) / (2 * delta) for e in eye])
    return float(np.max(np.abs(fd - g)) / max(float(np.max(np.abs(g))), TINY))
