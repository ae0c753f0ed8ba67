"""Hybrid VMP / LBU decoding with joint noise-precision estimation.

One iteration runs, in order: gamma -> bit-node moment installation,
bit-node -> parity-cluster categorical messages, LBU sepset updates toward
the large clusters, LBU updates back out, parity-cluster -> bit-node
expectation installation, and a rebuild of the gamma belief from the
stored prior plus every bit node's increment. Decoding stops once the
hard decisions satisfy every parity check and all sepsets are calibrated.

:class:`Decoder` runs the compiled kernel; :func:`decode_reference` runs the
same schedule on :class:`~clusterldpc.factortable.SparseFactorTable` objects
and exists to cross-check the kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import _kernel
from .clustergraph import BitAttachment, ClusterGraph, CodeGraph, MessageSchedule, compile_code
from .expfam import (
    CondGaussianBelief,
    GammaBelief,
    GammaMoments,
    gamma_moments,
    gamma_posterior,
    hybrid_child_to_parent_bit,
    hybrid_parent_to_child_bit,
    vmp_child_to_parent_gamma,
    vmp_parent_to_child_gamma,
)
from .factortable import (
    CategoricalMessage,
    SparseFactorTable,
    ZeroDivisionInTable,
    absorb_categorical,
    absorb_ratio,
    marginalize,
    parity_factor,
    symmetric_kl,
)
from .gf2code import ParityCheckMatrix, syndrome_ok


class UnnormalizableBelief(ArithmeticError):
    def __init__(self, cluster: int):
        self.cluster = cluster
        super().__init__(f"belief of cluster {cluster} has no nonzero state")


@dataclass(frozen=True)
class DecoderConfig:
    max_iter: int = 20
    calibration_tol: float = 1e-6
    deactivation_threshold: float = 1e-7
    deactivation: bool = True
    # known precision: moments are fixed and the gamma belief is not fed back
    fixed_precision: float | None = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.fixed_precision is not None and self.fixed_precision <= 0:
            raise ValueError("fixed_precision must be positive")


class TraceRecord(NamedTuple):
    iteration: int
    active_clusters: int
    gamma_mean: float
    syndrome_ok: bool


@dataclass
class DecodeResult:
    bits: np.ndarray
    converged: bool
    iterations: int
    posterior_gamma: GammaBelief
    per_bit_posteriors: np.ndarray  # (N, 2): P(b=0), P(b=1)
    trace: list[TraceRecord] = field(default_factory=list)


def _check_consistency(h: ParityCheckMatrix, graph: ClusterGraph, attachment: BitAttachment) -> None:
    if [frozenset(r) for r in h.row_support] != list(graph.clusters):
        raise ValueError("cluster graph does not match the parity-check rows")
    if len(attachment) != h.n_cols:
        raise ValueError(f"attachment covers {len(attachment)} bits, code has {h.n_cols}")
    for n in range(h.n_cols):
        j = attachment[n]
        if n not in graph.clusters[j]:
            raise ValueError(f"bit {n} attached to cluster {j}, which does not contain it")


class Decoder:
    """Precompiled decoder for one code; safe to reuse across packets."""

    def __init__(self, code: CodeGraph | ParityCheckMatrix):
        if isinstance(code, ParityCheckMatrix):
            code = compile_code(code)
        _check_consistency(code.h, code.graph, code.attachment)
        self.code = code
        g, sched = code.graph, code.schedule
        scopes = [tuple(sorted(c)) for c in g.clusters]
        factors = [parity_factor(s) for s in scopes]
        n_ent = [len(f) for f in factors]
        self.scopes = scopes
        self.ent_off = np.concatenate([[0], np.cumsum(n_ent)]).astype(np.int64)

        self.edges = g.edges
        self.edge_index = {e: i for i, e in enumerate(self.edges)}
        sep_scopes = [tuple(sorted(g.sepsets[e])) for e in self.edges]
        self.sep_scopes = sep_scopes
        self.sep_off = np.concatenate([[0], np.cumsum([1 << len(s) for s in sep_scopes])]).astype(np.int64)
        # port 2e / 2e+1 projects cluster lo / hi of edge e onto its sepset
        projs, proj_off = [], [0]
        for (a, b), sc in zip(self.edges, sep_scopes):
            for c in (a, b):
                p = factors[c].project_keys(sc)
                projs.append(p)
                proj_off.append(proj_off[-1] + p.size)
        self.proj = np.concatenate(projs).astype(np.int32) if projs else np.zeros(0, np.int32)
        self.proj_off = np.array(proj_off, dtype=np.int64)
        sep_size = np.diff(self.sep_off)

        def port(c, e):
            return 2 * e + (0 if c == self.edges[e][0] else 1)

        def sweep_plan(pairs, key):
            src = np.array([s for s, _ in pairs], dtype=np.int64)
            dst = np.array([d for _, d in pairs], dtype=np.int64)
            edg = np.array([self.edge_index[(min(s, d), max(s, d))] for s, d in pairs], dtype=np.int64)
            spoff = np.array([self.proj_off[port(s, e)] for s, e in zip(src, edg)], dtype=np.int64)
            dpoff = np.array([self.proj_off[port(d, e)] for d, e in zip(dst, edg)], dtype=np.int64)
            size = sep_size[edg].astype(np.int64)
            key = src if key == "src" else dst
            run, boff = [0], np.zeros(len(pairs), dtype=np.int64)
            for k in range(len(pairs)):
                if k > 0 and key[k] != key[k - 1]:
                    run.append(k)
                boff[k] = 0 if k == run[-1] else boff[k - 1] + size[k - 1]
            if pairs:
                run.append(len(pairs))
            return np.array(run, dtype=np.int64), src, dst, edg, spoff, dpoff, boff, size

        # inward runs share a destination, outward runs share a source
        self.inward = sweep_plan(sched.inward, "dst")
        self.outward = sweep_plan(sched.outward, "src")

        n = code.h.n_cols
        self.att = np.array(code.attachment.as_list(), dtype=np.int64)
        bitvals, bit_off = [], [0]
        for b in range(n):
            p = factors[self.att[b]].project_keys((b,))
            bitvals.append(p)
            bit_off.append(bit_off[-1] + p.size)
        self.bitval = np.concatenate(bitvals).astype(np.int32)
        self.bit_off = np.array(bit_off[:-1], dtype=np.int64)
        order = np.argsort(self.att, kind="stable")
        cl_sorted = self.att[order]
        starts = np.flatnonzero(np.r_[True, cl_sorted[1:] != cl_sorted[:-1]])
        self.bit_groups = (
            np.r_[starts, n].astype(np.int64), cl_sorted[starts].astype(np.int64), order.astype(np.int64),
            self.bit_off[order], 2 * np.arange(n, dtype=np.int64))
        # calibration: every port of each cluster, written beside its partner
        cal_ptr, cal_poff, cal_ooff, cal_size = [0], [], [], []
        incident = [[] for _ in range(g.n_clusters)]
        for e, (a, b) in enumerate(self.edges):
            incident[a].append(e)
            incident[b].append(e)
        for j in range(g.n_clusters):
            for e in incident[j]:
                cal_poff.append(self.proj_off[port(j, e)])
                cal_ooff.append(2 * self.sep_off[e] + (0 if j == self.edges[e][0] else sep_size[e]))
                cal_size.append(sep_size[e])
            cal_ptr.append(len(cal_poff))
        self.cal = tuple(np.array(v, dtype=np.int64) for v in (cal_ptr, cal_poff, cal_ooff, cal_size))
        rows = code.h.row_support
        self.h_ptr = np.concatenate([[0], np.cumsum([len(r) for r in rows])]).astype(np.int64)
        self.h_idx = np.array([c for r in rows for c in r], dtype=np.int64)

    @property
    def n(self) -> int:
        return self.code.h.n_cols

    def decode(self, received, prior: GammaBelief, cfg: DecoderConfig = DecoderConfig(),
               on_iteration: Callable[[TraceRecord], None] | None = None) -> DecodeResult:
        x = np.ascontiguousarray(received, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"expected {self.n} received values, got shape {x.shape}")
        if cfg.fixed_precision is None:
            learn, fe, fel = True, 1.0, 0.0
        else:
            gm = GammaMoments.point_mass(cfg.fixed_precision)
            learn, fe, fel = False, gm.e_gamma, gm.e_log_gamma
        (status, where, it, converged, bits, p1, post1, post2,
         tr_active, tr_mean, tr_synd) = _kernel.decode_packet(
            self.ent_off, self.sep_off, self.proj, *self.inward, *self.outward,
            self.att, self.bit_off, self.bitval, *self.bit_groups, *self.cal, self.h_ptr, self.h_idx,
            x, prior.eta1, prior.eta2, learn, fe, fel,
            cfg.max_iter, cfg.calibration_tol, cfg.deactivation_threshold, cfg.deactivation)
        if status == _kernel.ERR_ZERO_DIVISION:
            raise ZeroDivisionInTable(f"sepset division by zero while updating cluster {where}")
        if status == _kernel.ERR_UNNORMALIZABLE:
            raise UnnormalizableBelief(where)
        trace = [TraceRecord(i + 1, int(a), float(m), bool(s))
                 for i, (a, m, s) in enumerate(zip(tr_active, tr_mean, tr_synd))]
        if on_iteration is not None:
            for rec in trace:
                on_iteration(rec)
        return DecodeResult(
            bits=bits,
            converged=bool(converged),
            iterations=int(it),
            posterior_gamma=GammaBelief(post1, post2),
            per_bit_posteriors=np.column_stack([1.0 - p1, p1]),
            trace=trace,
        )


def decode(h: ParityCheckMatrix, graph: ClusterGraph, schedule: MessageSchedule,
           attachment: BitAttachment, prior: GammaBelief, received,
           cfg: DecoderConfig = DecoderConfig()) -> DecodeResult:
    large = frozenset(schedule.layers[0])
    return Decoder(CodeGraph(h, graph, schedule, attachment, large)).decode(received, prior, cfg)


# ---------------------------------------------------------------- reference


@dataclass
class DecoderState:
    cluster_beliefs: list[SparseFactorTable]
    sepset_beliefs: dict[tuple[int, int], SparseFactorTable]
    boundary_msgs: list[CategoricalMessage]
    bit_nodes: list[CondGaussianBelief]
    gamma_belief: GammaBelief
    active_flags: np.ndarray
    h: ParityCheckMatrix
    attachment: BitAttachment
    iter: int = 0

    @classmethod
    def initial(cls, code: CodeGraph, received, prior: GammaBelief) -> "DecoderState":
        g = code.graph
        gm = gamma_moments(prior)
        return cls(
            cluster_beliefs=[parity_factor(c) for c in g.clusters],
            sepset_beliefs={e: SparseFactorTable.uniform(sorted(s)).normalized() for e, s in g.sepsets.items()},
            boundary_msgs=[CategoricalMessage(n, (-np.log(2.0), -np.log(2.0))) for n in range(code.h.n_cols)],
            bit_nodes=[CondGaussianBelief(float(v), gm) for v in received],
            gamma_belief=prior,
            active_flags=np.ones(g.n_clusters, dtype=bool),
            h=code.h,
            attachment=code.attachment,
        )

    def hard_bits(self) -> np.ndarray:
        return np.array([1 if nd.p_b[1] > 0.5 else 0 for nd in self.bit_nodes], dtype=np.uint8)


def check_calibration(state: DecoderState, tol: float = 1e-6) -> bool:
    """All sepsets agree (symmetric KL <= tol) and the hard decisions are a codeword."""
    if not syndrome_ok(state.h, state.hard_bits()):
        return False
    for (a, b), sep in state.sepset_beliefs.items():
        ma = marginalize(state.cluster_beliefs[a], sep.scope)
        mb = marginalize(state.cluster_beliefs[b], sep.scope)
        if symmetric_kl(ma, mb) > tol:
            return False
    return True


def maybe_deactivate(new_sep: SparseFactorTable, old_sep: SparseFactorTable, threshold: float) -> bool:
    """True when the incoming change is too small to keep a cluster awake."""
    return symmetric_kl(new_sep, old_sep) < threshold


def _normalized_msg(m: CategoricalMessage) -> CategoricalMessage:
    a, b = m.log_pi
    z = np.logaddexp(a, b)
    return CategoricalMessage(m.var, (a - z, b - z))


def decode_reference(code: CodeGraph, received, prior: GammaBelief,
                     cfg: DecoderConfig = DecoderConfig()) -> tuple[DecodeResult, DecoderState]:
    """Table-level implementation of the same iteration as :class:`Decoder`."""
    st = DecoderState.initial(code, received, prior)
    thr, deact = cfg.deactivation_threshold, cfg.deactivation
    fixed = None if cfg.fixed_precision is None else GammaMoments.point_mass(cfg.fixed_precision)
    n_cl = code.graph.n_clusters
    changed = np.zeros(n_cl, dtype=bool)
    active = st.active_flags
    converged = False
    trace = []

    def sweep(pairs):
        for s, d in pairs:
            if deact and not active[s]:
                continue
            e = (min(s, d), max(s, d))
            old = st.sepset_beliefs[e]
            new = marginalize(st.cluster_beliefs[s], old.scope)
            if len(new) == 0:
                raise UnnormalizableBelief(s)
            new = new.normalized()
            if deact and not active[d] and maybe_deactivate(new, old, thr):
                continue
            kl = symmetric_kl(new, old)
            st.cluster_beliefs[d] = absorb_ratio(st.cluster_beliefs[d], new, old)
            st.sepset_beliefs[e] = new
            if kl >= thr:
                active[d] = changed[d] = True

    while st.iter < cfg.max_iter and not converged:
        n_active = int(active.sum()) if deact else n_cl
        # gamma -> bit nodes
        if fixed is None:
            st.bit_nodes = [vmp_parent_to_child_gamma(st.gamma_belief, nd) for nd in st.bit_nodes]
        else:
            st.bit_nodes = [CondGaussianBelief(nd.x, fixed, nd.p_b) for nd in st.bit_nodes]
        # bit nodes -> parity clusters
        for n, nd in enumerate(st.bit_nodes):
            j = st.attachment[n]
            new = _normalized_msg(hybrid_child_to_parent_bit(nd, n))
            old = st.boundary_msgs[n]
            kl = symmetric_kl(new.as_table(), old.as_table())
            if deact and not active[j] and kl < thr:
                continue
            st.cluster_beliefs[j] = absorb_categorical(st.cluster_beliefs[j], new, old)
            st.boundary_msgs[n] = new
            if kl >= thr:
                active[j] = changed[j] = True
        sweep(code.schedule.inward)
        sweep(code.schedule.outward)
        # parity clusters -> bit nodes
        for n, nd in enumerate(st.bit_nodes):
            j = st.attachment[n]
            m = marginalize(st.cluster_beliefs[j], (n,))
            if len(m) == 0:
                raise UnnormalizableBelief(j)
            st.bit_nodes[n] = hybrid_parent_to_child_bit(nd, m)
        post = gamma_posterior(prior, [vmp_child_to_parent_gamma(nd) for nd in st.bit_nodes])
        if fixed is None:
            st.gamma_belief = post
        st.iter += 1
        synd = syndrome_ok(st.h, st.hard_bits())
        trace.append(TraceRecord(st.iter, n_active, post.mean, synd))
        converged = synd and check_calibration(st, cfg.calibration_tol)
        if deact:
            active[:] = changed
            changed[:] = False
    p = np.array([nd.p_b for nd in st.bit_nodes])
    result = DecodeResult(st.hard_bits(), converged, st.iter, post, p, trace)
    return result, st
