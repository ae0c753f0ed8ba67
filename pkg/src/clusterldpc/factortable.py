"""Sparse log-domain factor tables over binary variables.

Assignments are packed into int64 keys: bit ``i`` of a key is the value of
``scope[i]``. Scopes are kept in ascending variable order; absent keys
have probability exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

NEG_INF = -np.inf


class ZeroDivisionInTable(ArithmeticError):
    """A nonzero numerator was divided by a zero sepset state."""


@dataclass(frozen=True)
class SparseFactorTable:
    scope: tuple[int, ...]
    keys: np.ndarray
    logw: np.ndarray

    def __post_init__(self):
        scope = tuple(int(v) for v in self.scope)
        if len(set(scope)) != len(scope):
            raise ValueError(f"duplicate variables in scope {scope}")
        if list(scope) != sorted(scope):
            raise ValueError("scope must be in ascending variable order")
        if len(scope) > 62:
            raise ValueError("at most 62 variables per table")
        keys = np.asarray(self.keys, dtype=np.int64)
        logw = np.asarray(self.logw, dtype=np.float64)
        if keys.shape != logw.shape or keys.ndim != 1:
            raise ValueError("keys and logw must be 1-D and equally long")
        keep = logw > NEG_INF
        keys, logw = keys[keep], logw[keep]
        order = np.argsort(keys, kind="stable")
        keys, logw = keys[order], logw[order]
        if keys.size and (keys[0] < 0 or keys[-1] >= (1 << len(scope))):
            raise ValueError("key outside the scope's assignment range")
        if keys.size > 1 and np.any(np.diff(keys) == 0):
            raise ValueError("duplicate assignment keys")
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "logw", logw)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dense(cls, scope: Sequence[int], logw_dense) -> "SparseFactorTable":
        """``logw_dense[key]`` for every key in ``range(2**len(scope))``."""
        logw_dense = np.asarray(logw_dense, dtype=np.float64)
        if logw_dense.shape != (1 << len(scope),):
            raise ValueError("dense table has the wrong length")
        return cls(tuple(scope), np.arange(logw_dense.size, dtype=np.int64), logw_dense)

    @classmethod
    def uniform(cls, scope: Sequence[int]) -> "SparseFactorTable":
        return cls.from_dense(scope, np.zeros(1 << len(scope)))

    # -- views --------------------------------------------------------------

    def __len__(self) -> int:
        return int(self.keys.size)

    def to_dense(self) -> np.ndarray:
        out = np.full(1 << len(self.scope), NEG_INF)
        out[self.keys] = self.logw
        return out

    def assignment_bits(self) -> np.ndarray:
        """Entries x scope matrix of 0/1 values."""
        shifts = np.arange(len(self.scope), dtype=np.int64)
        return ((self.keys[:, None] >> shifts) & 1).astype(np.uint8)

    def log_normalizer(self) -> float:
        if not self.keys.size:
            raise ValueError("table has no nonzero entries")
        m = self.logw.max()
        return float(m + np.log(np.exp(self.logw - m).sum()))

    def normalized(self) -> "SparseFactorTable":
        return SparseFactorTable(self.scope, self.keys, self.logw - self.log_normalizer())

    def probabilities(self) -> np.ndarray:
        """Dense normalized probability vector indexed by key."""
        return np.exp(self.normalized().to_dense())

    def project_keys(self, sub_scope: Sequence[int]) -> np.ndarray:
        """Keys of this table's entries restricted to ``sub_scope`` (ascending)."""
        pos = {v: i for i, v in enumerate(self.scope)}
        out = np.zeros_like(self.keys)
        for j, v in enumerate(sub_scope):
            out |= ((self.keys >> pos[v]) & 1) << j
        return out


def parity_factor(variables: Iterable[int]) -> SparseFactorTable:
    """Indicator of even parity over ``variables``: 2**(k-1) entries of log-weight 0."""
    scope = tuple(sorted(set(int(v) for v in variables)))
    if not scope:
        raise ValueError("parity factor needs at least one variable")
    k = len(scope)
    allkeys = np.arange(1 << k, dtype=np.int64)
    popcount = np.zeros_like(allkeys)
    for i in range(k):
        popcount += (allkeys >> i) & 1
    keys = allkeys[popcount % 2 == 0]
    return SparseFactorTable(scope, keys, np.zeros(keys.size))


def _check_subset(sub: Sequence[int], scope: Sequence[int], what: str) -> None:
    missing = set(sub) - set(scope)
    if missing:
        raise ValueError(f"{what}: variables {sorted(missing)} not in scope {tuple(scope)}")


def marginalize(t: SparseFactorTable, keep: Iterable[int]) -> SparseFactorTable:
    """Sum out every variable not in ``keep`` (log-sum-exp per kept assignment)."""
    keep_scope = tuple(sorted(set(int(v) for v in keep)))
    _check_subset(keep_scope, t.scope, "marginalize")
    if keep_scope == t.scope:
        return t
    sub = t.project_keys(keep_scope)
    uk, inv = np.unique(sub, return_inverse=True)
    mx = np.full(uk.size, NEG_INF)
    np.maximum.at(mx, inv, t.logw)
    acc = np.zeros(uk.size)
    np.add.at(acc, inv, np.exp(t.logw - mx[inv]))
    return SparseFactorTable(keep_scope, uk, mx + np.log(acc))


def _lookup(sep: SparseFactorTable, target: SparseFactorTable) -> np.ndarray:
    """Sepset log-weights aligned to the target's entries."""
    return sep.to_dense()[target.project_keys(sep.scope)]


def multiply(target: SparseFactorTable, other: SparseFactorTable) -> SparseFactorTable:
    """Pointwise product with a table whose scope is a subset of the target's."""
    _check_subset(other.scope, target.scope, "multiply")
    return SparseFactorTable(target.scope, target.keys, target.logw + _lookup(other, target))


def divide(target: SparseFactorTable, other: SparseFactorTable) -> SparseFactorTable:
    """Pointwise quotient, 0/0 = 0, nonzero/0 raises."""
    _check_subset(other.scope, target.scope, "divide")
    d = _lookup(other, target)
    if np.any(d == NEG_INF):
        raise ZeroDivisionInTable(f"division by a zero state of {other.scope}")
    return SparseFactorTable(target.scope, target.keys, target.logw - d)


def absorb_ratio(target: SparseFactorTable, new_sep: SparseFactorTable,
                 old_sep: SparseFactorTable) -> SparseFactorTable:
    """``target * new_sep / old_sep``; states zeroed by ``new_sep`` are pruned."""
    if new_sep.scope != old_sep.scope:
        raise ValueError("new and old sepset beliefs must share a scope")
    _check_subset(new_sep.scope, target.scope, "absorb_ratio")
    num = _lookup(new_sep, target)
    den = _lookup(old_sep, target)
    live = num > NEG_INF
    if np.any(live & (den == NEG_INF)):
        bad = target.keys[live & (den == NEG_INF)][0]
        raise ZeroDivisionInTable(
            f"sepset {new_sep.scope}: old belief is zero where the new one is not (target key {bad})")
    logw = np.where(live, target.logw + num - np.where(live, den, 0.0), NEG_INF)
    return SparseFactorTable(target.scope, target.keys, logw)


@dataclass(frozen=True)
class CategoricalMessage:
    """Unnormalised log bit probabilities ``(log pi_0, log pi_1)`` for one variable."""

    var: int
    log_pi: tuple[float, float]

    def __post_init__(self):
        lp = (float(self.log_pi[0]), float(self.log_pi[1]))
        if np.isnan(lp).any() or (lp[0] == NEG_INF and lp[1] == NEG_INF):
            raise ValueError("categorical message must have at least one nonzero state")
        object.__setattr__(self, "log_pi", lp)

    @classmethod
    def uniform(cls, var: int) -> "CategoricalMessage":
        return cls(var, (0.0, 0.0))

    def probabilities(self) -> tuple[float, float]:
        a, b = self.log_pi
        m = max(a, b)
        p0, p1 = np.exp(a - m), np.exp(b - m)
        return p0 / (p0 + p1), p1 / (p0 + p1)

    def as_table(self) -> SparseFactorTable:
        return SparseFactorTable.from_dense((self.var,), np.array(self.log_pi))


def absorb_categorical(target: SparseFactorTable, new_msg: CategoricalMessage,
                       old_msg: CategoricalMessage) -> SparseFactorTable:
    if new_msg.var != old_msg.var:
        raise ValueError("messages refer to different variables")
    return absorb_ratio(target, new_msg.as_table(), old_msg.as_table())


def symmetric_kl(p: SparseFactorTable, q: SparseFactorTable) -> float:
    """``(KL(p||q) + KL(q||p)) / 2`` of the normalized tables.

    States absent from both contribute nothing; a state present in only one
    makes the divergence infinite.
    """
    if p.scope != q.scope:
        raise ValueError("symmetric_kl needs tables over the same scope")
    lp = p.normalized().to_dense()
    lq = q.normalized().to_dense()
    both = (lp > NEG_INF) & (lq > NEG_INF)
    if np.any((lp > NEG_INF) != (lq > NEG_INF)):
        return float("inf")
    d = lp[both] - lq[both]
    return float(0.5 * np.sum((np.exp(lp[both]) - np.exp(lq[both])) * d))

