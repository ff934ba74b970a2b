"""Multi-order matching between a probe group and a gallery group.

Candidate person-to-person matches become nodes of an association graph.
Hyperedges over 2 and 3 mutually conflict-free candidates carry subgroup
affinities, one global affinity is attached uniformly to every candidate,
and per-candidate inter-order terms reward candidates that score large and
similar across granularities.  A reweighted random walk diffuses a
probability vector over the candidates under a soft one-to-one constraint;
the final one-to-one mapping is read off with an exact assignment step.

Affinities are reciprocal feature distances gated by fused importance
weights psi(a, b) = (a + b) / (1 + |a - b|), each order normalized to unit
mass over its own hyperedges.  The fused group score combines the mean
affinity of reliably matched objects with a penalty on the importance of
unmatched objects on both sides.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .config import SolverConfig
from .errors import RuntimeFailure
from .importance import ImportanceMap
from .model import (
    LEVEL_GLOBAL,
    FeatureBundle,
    GroupObservation,
    Mapping,
    enumerate_granular_objects,
)

_FORBIDDEN = -1e30


def fused_pair_weight(a: float, b: float) -> float:
    """psi(a, b): large when both weights are large and close to each other."""
    return (a + b) / (1.0 + abs(a - b))


def inter_order_correlation(m_r: float, m_l: float) -> float:
    """Correlation of one candidate's accumulated scores in two orders."""
    return (m_r + m_l) / (1.0 + abs(m_r - m_l))


def global_score(f_p: np.ndarray, f_g: np.ndarray, eps_dist: float = 1e-6) -> float:
    """Reciprocal global feature distance (both global weights are 1)."""
    d = float(np.linalg.norm(np.asarray(f_p, float) - np.asarray(f_g, float)))
    return 1.0 / max(d, eps_dist)


def _psi_grid(wa: np.ndarray, wb: np.ndarray) -> np.ndarray:
    a = wa[:, None]
    b = wb[None, :]
    return (a + b) / (1.0 + np.abs(a - b))


def _normalized_family(values: np.ndarray) -> np.ndarray:
    """Importance family rescaled to mean 1.

    Weights are consumed relative to their in-image scale: the fused weight
    psi compares relative importance, so one granularity's raw magnitude
    (person counts, inverse distances) cannot drown the appearance signal,
    and the fixed unit weight of the global object stays commensurate.
    All-equal weights map to exactly 1 regardless of family size.
    """
    values = np.asarray(values, dtype=np.float64)
    total = values.sum()
    if total <= 0:
        return np.zeros(values.shape)  # zero importance stays zero (degenerate)
    return values * (values.size / total)


@dataclass
class _ConsumedWeights:
    """One side's importance families in matcher scale (unit-sum each)."""

    fine: np.ndarray
    medium: np.ndarray  # in bundle pair-key order
    coarse: np.ndarray  # in bundle triple-key order

    @classmethod
    def from_map(cls, weights: ImportanceMap, bundle: FeatureBundle) -> "_ConsumedWeights":
        return cls(
            fine=_normalized_family(weights.fine),
            medium=_normalized_family(
                np.asarray([weights.medium[k] for k in bundle.pair_keys])
            )
            if bundle.pair_keys
            else np.zeros(0),
            coarse=_normalized_family(
                np.asarray([weights.coarse[k] for k in bundle.triple_keys])
            )
            if bundle.triple_keys
            else np.zeros(0),
        )


def _subset_row_grid(keys, n: int, size: int) -> np.ndarray:
    grid = np.full((n,) * size, -1, dtype=np.int64)
    for row, key in enumerate(keys):
        for perm in itertools.permutations(key):
            grid[perm] = row
    return grid


@dataclass
class PairContext:
    """Geometry shared by every matching pass of one probe-gallery pair.

    Candidates, hyperedge index arrays and all feature distances depend only
    on the bundles and the pruning config, so the weight iteration reuses
    them across passes.
    """

    n_probe: int
    n_gallery: int
    cand_probe: np.ndarray
    cand_gallery: np.ndarray
    cand_index: dict[tuple[int, int], int]
    d1: np.ndarray  # (N_p, N_g) appearance distances
    d_global: float
    pair_idx: np.ndarray  # (E2, 2) candidate index pairs
    e2_prow: np.ndarray
    e2_grow: np.ndarray
    triple_idx: np.ndarray  # (E3, 3)
    e3_prow: np.ndarray
    e3_grow: np.ndarray
    d2: np.ndarray  # (P2, G2) pair-subgroup distances
    d3: np.ndarray  # (P3, G3) triple-subgroup distances
    p_pair_rows: np.ndarray
    g_pair_rows: np.ndarray
    p_triple_rows: np.ndarray
    g_triple_rows: np.ndarray
    pair_keys_p: tuple
    pair_keys_g: tuple
    triple_keys_p: tuple
    triple_keys_g: tuple


def prepare_pair(
    probe: FeatureBundle, gallery: FeatureBundle, cfg: SolverConfig | None = None
) -> PairContext:
    """Build the reusable geometry of one probe-gallery pair."""
    cfg = cfg or SolverConfig()
    n_p = probe.n_persons
    n_g = gallery.n_persons
    d1 = cdist(probe.person_appearance, gallery.person_appearance)

    if n_p * n_g <= 36 or cfg.prune_k >= n_g:
        cand = [(i, j) for i in range(n_p) for j in range(n_g)]
    else:
        cand = []
        for i in range(n_p):
            order = np.argsort(d1[i], kind="stable")[: cfg.prune_k]
            cand.extend((i, int(j)) for j in sorted(order))
    cp = np.fromiter((c[0] for c in cand), np.int64, len(cand))
    cg = np.fromiter((c[1] for c in cand), np.int64, len(cand))
    cand_index = {c: t for t, c in enumerate(cand)}
    n = len(cand)

    a, b = np.triu_indices(n, k=1)
    keep = (cp[a] != cp[b]) & (cg[a] != cg[b])
    pair_idx = np.stack([a[keep], b[keep]], axis=1) if keep.any() else np.zeros((0, 2), np.int64)

    p_pair_rows = _subset_row_grid(probe.pair_keys, n_p, 2)
    g_pair_rows = _subset_row_grid(gallery.pair_keys, n_g, 2)
    if len(pair_idx):
        e2_prow = p_pair_rows[cp[pair_idx[:, 0]], cp[pair_idx[:, 1]]]
        e2_grow = g_pair_rows[cg[pair_idx[:, 0]], cg[pair_idx[:, 1]]]
    else:
        e2_prow = np.zeros(0, np.int64)
        e2_grow = np.zeros(0, np.int64)

    if len(pair_idx) and n_p >= 3 and n_g >= 3:
        pa = pair_idx[:, 0][:, None]
        pb = pair_idx[:, 1][:, None]
        cc = np.arange(n)[None, :]
        ok = (
            (cc > pb)
            & (cp[pa] != cp[cc])
            & (cp[pb] != cp[cc])
            & (cg[pa] != cg[cc])
            & (cg[pb] != cg[cc])
        )
        ei, ci = np.nonzero(ok)
        triple_idx = np.column_stack([pair_idx[ei, 0], pair_idx[ei, 1], ci]).astype(np.int64)
    else:
        triple_idx = np.zeros((0, 3), np.int64)

    p_triple_rows = _subset_row_grid(probe.triple_keys, n_p, 3) if n_p >= 3 else np.zeros((1,) * 3, np.int64)
    g_triple_rows = _subset_row_grid(gallery.triple_keys, n_g, 3) if n_g >= 3 else np.zeros((1,) * 3, np.int64)
    if len(triple_idx):
        e3_prow = p_triple_rows[cp[triple_idx[:, 0]], cp[triple_idx[:, 1]], cp[triple_idx[:, 2]]]
        e3_grow = g_triple_rows[cg[triple_idx[:, 0]], cg[triple_idx[:, 1]], cg[triple_idx[:, 2]]]
    else:
        e3_prow = np.zeros(0, np.int64)
        e3_grow = np.zeros(0, np.int64)

    d2 = (
        cdist(probe.pair_features, gallery.pair_features)
        if len(probe.pair_keys) and len(gallery.pair_keys)
        else np.zeros((len(probe.pair_keys), len(gallery.pair_keys)))
    )
    d3 = (
        cdist(probe.triple_features, gallery.triple_features)
        if len(probe.triple_keys) and len(gallery.triple_keys)
        else np.zeros((len(probe.triple_keys), len(gallery.triple_keys)))
    )
    return PairContext(
        n_probe=n_p,
        n_gallery=n_g,
        cand_probe=cp,
        cand_gallery=cg,
        cand_index=cand_index,
        d1=d1,
        d_global=float(np.linalg.norm(probe.global_appearance - gallery.global_appearance)),
        pair_idx=pair_idx,
        e2_prow=e2_prow,
        e2_grow=e2_grow,
        triple_idx=triple_idx,
        e3_prow=e3_prow,
        e3_grow=e3_grow,
        d2=d2,
        d3=d3,
        p_pair_rows=p_pair_rows,
        g_pair_rows=g_pair_rows,
        p_triple_rows=p_triple_rows,
        g_triple_rows=g_triple_rows,
        pair_keys_p=probe.pair_keys,
        pair_keys_g=gallery.pair_keys,
        triple_keys_p=probe.triple_keys,
        triple_keys_g=gallery.triple_keys,
    )


@dataclass
class AssociationGraph:
    """Candidate matches plus intra-order and inter-order affinities.

    Hyperedges only connect candidates with pairwise-distinct probe indices
    and pairwise-distinct gallery indices; every normalized per-order score
    family sums to one over its hyperedge set.
    """

    ctx: PairContext
    orders: tuple[str, ...]
    unary: np.ndarray
    pair_scores: np.ndarray
    triple_scores: np.ndarray
    global_affinity: float
    order_marginals: dict[str, np.ndarray]
    inter_order: dict[tuple[str, str], np.ndarray]
    inter_sum: np.ndarray
    grid2: np.ndarray
    grid3: np.ndarray
    lambdas: dict[str, float]
    # similarities psi/d before hyperedge normalization, feeding the fused
    # group score, plus the consumed (unit-sum) importance families
    unary_raw: np.ndarray = None
    grid2_raw: np.ndarray = None
    grid3_raw: np.ndarray = None
    global_raw: float = 0.0
    probe_consumed: "_ConsumedWeights" = None
    gallery_consumed: "_ConsumedWeights" = None
    degenerate: bool = False

    @property
    def n_candidates(self) -> int:
        return len(self.unary)

    def candidate_pairs(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(self.ctx.cand_probe, self.ctx.cand_gallery)]


def build_association_graph(
    probe_bundle: FeatureBundle,
    gallery_bundle: FeatureBundle,
    probe_weights: ImportanceMap,
    gallery_weights: ImportanceMap,
    cfg: SolverConfig | None = None,
    ctx: PairContext | None = None,
) -> AssociationGraph:
    """Score all hyperedges of one pair under the current importance maps."""
    cfg = cfg or SolverConfig()
    ctx = ctx or prepare_pair(probe_bundle, gallery_bundle, cfg)
    n = len(ctx.cand_probe)
    eps = cfg.eps_dist

    cw_p = _ConsumedWeights.from_map(probe_weights, probe_bundle)
    cw_g = _ConsumedWeights.from_map(gallery_weights, gallery_bundle)

    fp = cw_p.fine[ctx.cand_probe]
    fg = cw_g.fine[ctx.cand_gallery]
    psi1 = (fp + fg) / (1.0 + np.abs(fp - fg))
    raw1 = psi1 / np.maximum(ctx.d1[ctx.cand_probe, ctx.cand_gallery], eps)
    total1 = raw1.sum()
    lam1 = 1.0 / total1 if total1 > 0 else 0.0
    unary = raw1 * lam1 * cfg.scale_fine

    grid2 = np.zeros_like(ctx.d2)
    grid2_raw = grid2
    pair_scores = np.zeros(0)
    lam2 = 0.0
    if cfg.order_enabled("medium") and len(ctx.pair_idx):
        grid2_raw = _psi_grid(cw_p.medium, cw_g.medium) / np.maximum(ctx.d2, eps)
        raw_e2 = grid2_raw[ctx.e2_prow, ctx.e2_grow]
        tot = raw_e2.sum()
        lam2 = 1.0 / tot if tot > 0 else 0.0
        pair_scores = raw_e2 * lam2 * cfg.scale_medium
        grid2 = grid2_raw * lam2 * cfg.scale_medium

    grid3 = np.zeros_like(ctx.d3)
    grid3_raw = grid3
    triple_scores = np.zeros(0)
    lam3 = 0.0
    if cfg.order_enabled("coarse") and len(ctx.triple_idx):
        grid3_raw = _psi_grid(cw_p.coarse, cw_g.coarse) / np.maximum(ctx.d3, eps)
        raw_e3 = grid3_raw[ctx.e3_prow, ctx.e3_grow]
        tot = raw_e3.sum()
        lam3 = 1.0 / tot if tot > 0 else 0.0
        triple_scores = raw_e3 * lam3 * cfg.scale_coarse
        grid3 = grid3_raw * lam3 * cfg.scale_coarse

    w_g = 0.0
    w_g_raw = 0.0
    if cfg.order_enabled("global"):
        w_g_raw = 1.0 / max(ctx.d_global, eps)
        w_g = cfg.scale_global * w_g_raw

    # per-candidate accumulated score in each order, normalized to unit sum
    marginals: dict[str, np.ndarray] = {}
    acc = unary.copy()
    tot = acc.sum()
    marginals["fine"] = acc / tot if tot > 0 else np.zeros(n)
    if cfg.order_enabled("medium"):
        acc = np.zeros(n)
        if len(pair_scores):
            acc += np.bincount(ctx.pair_idx[:, 0], pair_scores, minlength=n)
            acc += np.bincount(ctx.pair_idx[:, 1], pair_scores, minlength=n)
        tot = acc.sum()
        marginals["medium"] = acc / tot if tot > 0 else np.zeros(n)
    if cfg.order_enabled("coarse"):
        acc = np.zeros(n)
        if len(triple_scores):
            for col in range(3):
                acc += np.bincount(ctx.triple_idx[:, col], triple_scores, minlength=n)
        tot = acc.sum()
        marginals["coarse"] = acc / tot if tot > 0 else np.zeros(n)
    if cfg.order_enabled("global"):
        marginals["global"] = np.full(n, 1.0 / n) if w_g > 0 else np.zeros(n)

    inter: dict[tuple[str, str], np.ndarray] = {}
    inter_sum = np.zeros(n)
    if cfg.use_inter_order:
        names = [o for o in cfg.orders if o in marginals]
        for r, l in itertools.combinations(names, 2):
            mr = marginals[r]
            ml = marginals[l]
            vals = (mr + ml) / (1.0 + np.abs(mr - ml)) * cfg.scale_inter
            inter[(r, l)] = vals
            inter_sum = inter_sum + 2.0 * vals  # the objective sums ordered pairs

    degenerate = (
        unary.max(initial=0.0) <= 0.0
        and (len(pair_scores) == 0 or pair_scores.max() <= 0.0)
        and (len(triple_scores) == 0 or triple_scores.max() <= 0.0)
        and w_g <= 0.0
        and inter_sum.max(initial=0.0) <= 0.0
    )
    return AssociationGraph(
        ctx=ctx,
        orders=cfg.orders,
        unary=unary,
        pair_scores=pair_scores,
        triple_scores=triple_scores,
        global_affinity=w_g,
        order_marginals=marginals,
        inter_order=inter,
        inter_sum=inter_sum,
        grid2=grid2,
        grid3=grid3,
        lambdas={"fine": lam1, "medium": lam2, "coarse": lam3},
        unary_raw=raw1,
        grid2_raw=grid2_raw,
        grid3_raw=grid3_raw,
        global_raw=w_g_raw,
        probe_consumed=cw_p,
        gallery_consumed=cw_g,
        degenerate=degenerate,
    )


@njit(cache=True)
def _rrw_kernel(diag, flat, pa, pb, s2, ta, tb, tc, s3, cp, cg, n_p, n_g, beta, sk_iters, max_iters, tol):
    n = diag.shape[0]
    x = np.full(n, 1.0 / n)
    y = np.empty(n)
    mat = np.zeros((n_p, n_g))
    r = np.empty(n)
    for _ in range(max_iters):
        for t in range(n):
            y[t] = diag[t] * x[t] + flat[t]
        for e in range(pa.shape[0]):
            y[pa[e]] += s2[e] * x[pb[e]]
            y[pb[e]] += s2[e] * x[pa[e]]
        for e in range(ta.shape[0]):
            xa = x[ta[e]]
            xb = x[tb[e]]
            xc = x[tc[e]]
            se = s3[e]
            y[ta[e]] += se * xb * xc
            y[tb[e]] += se * xa * xc
            y[tc[e]] += se * xa * xb
        tot = 0.0
        for t in range(n):
            tot += y[t]
        if not np.isfinite(tot) or tot <= 0.0:
            return x, 1
        for t in range(n):
            y[t] /= tot

        # soft one-to-one constraint: alternating row/column normalization
        for i in range(n_p):
            for j in range(n_g):
                mat[i, j] = 0.0
        for t in range(n):
            mat[cp[t], cg[t]] = y[t]
        for _ in range(sk_iters):
            for i in range(n_p):
                s = 0.0
                for j in range(n_g):
                    s += mat[i, j]
                if s > 0.0:
                    for j in range(n_g):
                        mat[i, j] /= s
            for j in range(n_g):
                s = 0.0
                for i in range(n_p):
                    s += mat[i, j]
                if s > 0.0:
                    for i in range(n_p):
                        mat[i, j] /= s
        rtot = 0.0
        for t in range(n):
            r[t] = mat[cp[t], cg[t]]
            rtot += r[t]

        newtot = 0.0
        for t in range(n):
            rv = r[t] / rtot if rtot > 0.0 else 1.0 / n
            y[t] = (1.0 - beta) * y[t] + beta * rv
            newtot += y[t]
        delta = 0.0
        for t in range(n):
            y[t] /= newtot
            d = abs(y[t] - x[t])
            if d > delta:
                delta = d
            x[t] = y[t]
        if delta < tol:
            break
    return x, 0


def solve_rrw(graph: AssociationGraph, cfg: SolverConfig | None = None) -> tuple[np.ndarray, bool]:
    """Reweighted random walk over the association graph.

    Alternates an affinity diffusion step (unary scores on the diagonal,
    hyperedge scores propagated through the current probabilities, global
    and inter-order contributions as per-candidate additive mass) with a
    soft one-to-one reweighting, mixed in with the jump probability.
    Deterministic; all-zero affinities return the uniform vector with the
    degenerate flag set.
    """
    cfg = cfg or SolverConfig()
    ctx = graph.ctx
    n = graph.n_candidates
    if graph.degenerate:
        return np.full(n, 1.0 / n), True
    if n == 1:
        return np.ones(1), False

    flat = graph.inter_sum + graph.global_affinity / n
    pair_idx = ctx.pair_idx
    triple_idx = ctx.triple_idx
    s2 = graph.pair_scores if len(graph.pair_scores) else np.zeros(0)
    s3 = graph.triple_scores if len(graph.triple_scores) else np.zeros(0)
    pa = np.ascontiguousarray(pair_idx[:, 0]) if len(s2) else np.zeros(0, np.int64)
    pb = np.ascontiguousarray(pair_idx[:, 1]) if len(s2) else np.zeros(0, np.int64)
    ta = np.ascontiguousarray(triple_idx[:, 0]) if len(s3) else np.zeros(0, np.int64)
    tb = np.ascontiguousarray(triple_idx[:, 1]) if len(s3) else np.zeros(0, np.int64)
    tc = np.ascontiguousarray(triple_idx[:, 2]) if len(s3) else np.zeros(0, np.int64)
    x, status = _rrw_kernel(
        np.ascontiguousarray(graph.unary),
        np.ascontiguousarray(flat),
        pa, pb, np.ascontiguousarray(s2),
        ta, tb, tc, np.ascontiguousarray(s3),
        ctx.cand_probe, ctx.cand_gallery,
        ctx.n_probe, ctx.n_gallery,
        cfg.jump_prob, cfg.sinkhorn_iters, cfg.max_rw_iters, cfg.rw_tol,
    )
    if status == 1:
        return np.full(n, 1.0 / n), True
    return x, False


@lru_cache(maxsize=256)
def _injections(n_from: int, n_into: int) -> np.ndarray:
    """All injective assignments of range(n_from) into range(n_into)."""
    return np.asarray(list(itertools.permutations(range(n_into), n_from)), dtype=np.int64)


_TIE_WINDOW = 0.05  # relative margin below which assignment totals count as tied


def _first_within_tie(totals: np.ndarray) -> int:
    best = float(totals.max())
    if best <= 0.0:
        return int(np.argmax(totals))
    # injections whose probability mass is within the tie window of the
    # optimum count as ties and resolve to the lexicographically first one;
    # near-degenerate pairs would otherwise flip with tiny weight changes
    return int(np.argmax(totals >= best * (1.0 - _TIE_WINDOW)))


def extract_mapping(
    x: np.ndarray, graph: AssociationGraph, cfg: SolverConfig | None = None
) -> Mapping:
    """One-to-one mapping maximizing the summed candidate probability.

    Exhaustive over full injections of the smaller side for the group sizes
    this engine targets, exact rectangular assignment beyond that; ties
    (totals within a small relative window of the optimum) resolve to the
    lexicographically first assignment.  Persons whose candidates were all
    pruned stay unmatched.
    """
    cfg = cfg or SolverConfig()
    ctx = graph.ctx
    n_p, n_g = ctx.n_probe, ctx.n_gallery
    score = np.full((n_p, n_g), _FORBIDDEN)
    score[ctx.cand_probe, ctx.cand_gallery] = x

    if min(n_p, n_g) <= 4 or max(n_p, n_g) <= 6:
        if n_p <= n_g:
            inj = _injections(n_p, n_g)
            totals = score[np.arange(n_p)[None, :], inj].sum(axis=1)
            best = inj[_first_within_tie(totals)]
            pairs = [(i, int(best[i])) for i in range(n_p) if score[i, best[i]] > _FORBIDDEN / 2]
        else:
            inj = _injections(n_g, n_p)
            totals = score[inj, np.arange(n_g)[None, :]].sum(axis=1)
            best = inj[_first_within_tie(totals)]
            pairs = [(int(best[j]), j) for j in range(n_g) if score[best[j], j] > _FORBIDDEN / 2]
    else:
        rows, cols = linear_sum_assignment(score, maximize=True)
        pairs = [(int(i), int(j)) for i, j in zip(rows, cols) if score[i, j] > _FORBIDDEN / 2]
    return Mapping.from_pairs(pairs)


def objective_value(mapping: Mapping, graph: AssociationGraph, cfg: SolverConfig | None = None) -> float:
    """Total multi-order objective of a mapping on this graph.

    Sums the scores of every hyperedge fully contained in the mapping plus
    the per-candidate inter-order terms; the global potential counts once,
    and only for non-empty mappings.
    """
    ctx = graph.ctx
    sel = np.zeros(graph.n_candidates, dtype=bool)
    for cand in mapping:
        t = ctx.cand_index.get(cand.as_pair())
        if t is not None:
            sel[t] = True
    q = float(graph.unary[sel].sum() + graph.inter_sum[sel].sum())
    if len(graph.pair_scores):
        keep = sel[ctx.pair_idx[:, 0]] & sel[ctx.pair_idx[:, 1]]
        q += float(graph.pair_scores[keep].sum())
    if len(graph.triple_scores):
        keep = sel[ctx.triple_idx[:, 0]] & sel[ctx.triple_idx[:, 1]] & sel[ctx.triple_idx[:, 2]]
        q += float(graph.triple_scores[keep].sum())
    if len(mapping) > 0:
        q += graph.global_affinity
    return q


def _order_of_size(size: int) -> str:
    return {1: "fine", 2: "medium", 3: "coarse"}[size]


def _object_enabled(obj, cfg: SolverConfig) -> bool:
    if obj.level == LEVEL_GLOBAL:
        return cfg.order_enabled("global")
    return cfg.order_enabled(_order_of_size(obj.size))


def fused_matching_score(
    mapping: Mapping,
    probe_obs: GroupObservation,
    gallery_obs: GroupObservation,
    probe_weights: ImportanceMap,
    gallery_weights: ImportanceMap,
    graph: AssociationGraph,
    cfg: SolverConfig | None = None,
    lambda_r: float | None = None,
) -> tuple[float, float, float]:
    """Group similarity from matched and unmatched objects.

    Objects whose members are all matched count as reliably matched; the
    first term averages their pairwise similarities psi(a_p, a_g) / d_f
    against their mapped counterparts (the raw per-object-pair score, not
    the per-pair-normalized potential, so it is commensurate with the
    importance scale).  The second term penalizes the mean importance of
    unmatched objects on both sides, balanced by lambda_r.  Returns
    (score, matched_term, unmatched_penalty) with
    score = matched_term - lambda_r * unmatched_penalty.
    """
    cfg = cfg or SolverConfig()
    lam = cfg.lambda_r if lambda_r is None else lambda_r
    ctx = graph.ctx
    p2g = mapping.probe_to_gallery()
    matched_p = mapping.matched_probes()
    matched_g = mapping.matched_galleries()

    probe_objs = [o for o in enumerate_granular_objects(probe_obs) if _object_enabled(o, cfg)]
    gallery_objs = [o for o in enumerate_granular_objects(gallery_obs) if _object_enabled(o, cfg)]

    def _alpha(obj, consumed, pair_rows, triple_rows) -> float:
        # importance in matcher (unit-sum family) scale
        if obj.level == LEVEL_GLOBAL:
            return 1.0
        if obj.size == 1:
            return float(consumed.fine[obj.members[0]])
        if obj.size == 2:
            return float(consumed.medium[pair_rows[obj.members]])
        return float(consumed.coarse[triple_rows[obj.members]])

    def probe_alpha(obj) -> float:
        return _alpha(obj, graph.probe_consumed, ctx.p_pair_rows, ctx.p_triple_rows)

    def gallery_alpha(obj) -> float:
        return _alpha(obj, graph.gallery_consumed, ctx.g_pair_rows, ctx.g_triple_rows)

    matched_scores: list[float] = []
    unmatched_p: list[float] = []
    demoted_counterparts: set[tuple[int, ...]] = set()
    for obj in probe_objs:
        if obj.level == LEVEL_GLOBAL:
            fully = len(matched_p) == probe_obs.n_persons
            w = graph.global_raw
            similarity = graph.global_raw
        else:
            fully = all(m in matched_p for m in obj.members)
            w = 0.0
            similarity = 0.0
            if fully:
                counterpart = tuple(sorted(p2g[m] for m in obj.members))
                if obj.size == 1:
                    t = ctx.cand_index.get((obj.members[0], counterpart[0]))
                    w = float(graph.unary_raw[t]) if t is not None else 0.0
                    dist = float(ctx.d1[obj.members[0], counterpart[0]])
                elif obj.size == 2:
                    w = float(graph.grid2_raw[ctx.p_pair_rows[obj.members], ctx.g_pair_rows[counterpart]])
                    dist = float(ctx.d2[ctx.p_pair_rows[obj.members], ctx.g_pair_rows[counterpart]])
                else:
                    w = float(graph.grid3_raw[ctx.p_triple_rows[obj.members], ctx.g_triple_rows[counterpart]])
                    dist = float(ctx.d3[ctx.p_triple_rows[obj.members], ctx.g_triple_rows[counterpart]])
                similarity = 1.0 / max(dist, cfg.eps_dist)
        # a matched object stays reliable only while its plain feature
        # similarity clears the threshold; importance plays no role here
        if fully and similarity >= cfg.reliability_threshold:
            matched_scores.append(w)
        else:
            unmatched_p.append(probe_alpha(obj))
            if fully and obj.level != LEVEL_GLOBAL:
                demoted_counterparts.add(tuple(sorted(p2g[m] for m in obj.members)))

    unmatched_g = [
        gallery_alpha(obj)
        for obj in gallery_objs
        if any(m not in matched_g for m in obj.members)
        or (obj.level != LEVEL_GLOBAL and obj.members in demoted_counterparts)
    ]

    if not matched_scores:
        all_p = float(np.mean([probe_alpha(o) for o in probe_objs])) if probe_objs else 0.0
        all_g = float(np.mean([gallery_alpha(o) for o in gallery_objs])) if gallery_objs else 0.0
        penalty = all_p + all_g
        return -lam * penalty, 0.0, penalty

    matched_term = float(np.mean(matched_scores))
    penalty = 0.0
    if unmatched_p:
        penalty += float(np.mean(unmatched_p))
    if unmatched_g:
        penalty += float(np.mean(unmatched_g))
    return matched_term - lam * penalty, matched_term, penalty


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one probe-gallery pair."""

    mapping: Mapping
    objective: float
    fused_score: float
    matched_term: float
    unmatched_penalty: float
    per_order_scores: dict[str, float] = field(default_factory=dict)
    degenerate: bool = False

    def rescored(self, lambda_r: float) -> float:
        """Fused score under a different unmatched-term balance."""
        return self.matched_term - lambda_r * self.unmatched_penalty


def _per_order_breakdown(mapping: Mapping, graph: AssociationGraph) -> dict[str, float]:
    ctx = graph.ctx
    sel = np.zeros(graph.n_candidates, dtype=bool)
    for cand in mapping:
        t = ctx.cand_index.get(cand.as_pair())
        if t is not None:
            sel[t] = True
    out = {"fine": float(graph.unary[sel].sum())}
    if len(graph.pair_scores):
        keep = sel[ctx.pair_idx[:, 0]] & sel[ctx.pair_idx[:, 1]]
        out["medium"] = float(graph.pair_scores[keep].sum())
    else:
        out["medium"] = 0.0
    if len(graph.triple_scores):
        keep = sel[ctx.triple_idx[:, 0]] & sel[ctx.triple_idx[:, 1]] & sel[ctx.triple_idx[:, 2]]
        out["coarse"] = float(graph.triple_scores[keep].sum())
    else:
        out["coarse"] = 0.0
    out["global"] = graph.global_affinity if len(mapping) else 0.0
    out["inter"] = float(graph.inter_sum[sel].sum())
    return out


def match_pair(
    probe_obs: GroupObservation,
    gallery_obs: GroupObservation,
    probe_bundle: FeatureBundle,
    gallery_bundle: FeatureBundle,
    probe_weights: ImportanceMap,
    gallery_weights: ImportanceMap,
    cfg: SolverConfig | None = None,
    ctx: PairContext | None = None,
) -> MatchResult:
    """Full matching of one pair: graph, random walk, mapping, scores."""
    cfg = cfg or SolverConfig()
    if probe_obs.n_persons != probe_bundle.n_persons:
        raise RuntimeFailure("missing-features", f"bundle size mismatch for {probe_obs.image_id!r}")
    if gallery_obs.n_persons != gallery_bundle.n_persons:
        raise RuntimeFailure("missing-features", f"bundle size mismatch for {gallery_obs.image_id!r}")
    graph = build_association_graph(
        probe_bundle, gallery_bundle, probe_weights, gallery_weights, cfg, ctx
    )
    x, degenerate = solve_rrw(graph, cfg)
    mapping = extract_mapping(x, graph, cfg)
    objective = objective_value(mapping, graph, cfg)
    score, matched_term, penalty = fused_matching_score(
        mapping, probe_obs, gallery_obs, probe_weights, gallery_weights, graph, cfg
    )
    return MatchResult(
        mapping=mapping,
        objective=objective,
        fused_score=score,
        matched_term=matched_term,
        unmatched_penalty=penalty,
        per_order_scores=_per_order_breakdown(mapping, graph),
        degenerate=degenerate,
    )
