"""Brute-force oracles, used only for verification.

These deliberately share no algorithmic code with the production paths:
mappings are found by enumerating every injective assignment, and optimal
transport by enumerating the vertices of the transportation polytope
(spanning-tree bases with integer flows on lcm-scaled marginals).
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .config import SolverConfig
from .errors import RuntimeFailure
from .importance import ImportanceMap, assemble_importance, static_geometry
from .matcher import AssociationGraph, build_association_graph, objective_value
from .model import BoundingBox, FeatureBundle, GroupObservation, Mapping
from .descriptors import build_bundle

MAX_MAPPING_SIDE = 6
MAX_W1_SET = 4


def brute_force_mapping(
    probe_bundle: FeatureBundle,
    gallery_bundle: FeatureBundle,
    probe_weights: ImportanceMap,
    gallery_weights: ImportanceMap,
    cfg: SolverConfig | None = None,
    graph: AssociationGraph | None = None,
) -> tuple[Mapping, float]:
    """Exhaustive optimum of the matching objective over full injections.

    Enumerates every injective assignment of the smaller side into the
    larger on the unpruned association graph and returns the argmax with
    lexicographic tie-break.
    """
    cfg = cfg or SolverConfig()
    n_p = probe_bundle.n_persons
    n_g = gallery_bundle.n_persons
    if min(n_p, n_g) > MAX_MAPPING_SIDE:
        raise RuntimeFailure("instance-too-large", f"smaller side {min(n_p, n_g)} > {MAX_MAPPING_SIDE}")
    if graph is None:
        # keep every candidate so the enumeration domain is complete
        full_cfg = dataclasses.replace(cfg, prune_k=max(cfg.prune_k, n_g))
        graph = build_association_graph(
            probe_bundle, gallery_bundle, probe_weights, gallery_weights, full_cfg
        )
    best_mapping = None
    best_q = -math.inf
    if n_p <= n_g:
        for assign in itertools.permutations(range(n_g), n_p):
            mapping = Mapping.from_pairs((i, j) for i, j in enumerate(assign))
            q = objective_value(mapping, graph, cfg)
            if q > best_q:
                best_q = q
                best_mapping = mapping
    else:
        for assign in itertools.permutations(range(n_p), n_g):
            mapping = Mapping.from_pairs((i, j) for j, i in enumerate(assign))
            q = objective_value(mapping, graph, cfg)
            if q > best_q:
                best_q = q
                best_mapping = mapping
    return best_mapping, best_q


def _tree_flows_exact(cells: tuple, supplies: list[int], demands: list[int]) -> list[int] | None:
    """Integer flows on a candidate basis; None if not a spanning tree."""
    m = len(supplies)
    n = len(demands)
    adj: dict[int, list[tuple[int, int]]] = {k: [] for k in range(m + n)}
    for e, (i, j) in enumerate(cells):
        adj[i].append((m + j, e))
        adj[m + j].append((i, e))
    # connectivity check: a spanning tree touches every node
    seen = {0}
    stack = [0]
    while stack:
        node = stack.pop()
        for nxt, _ in adj[node]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    if len(seen) != m + n:
        return None
    remaining = list(supplies) + list(demands)
    degree = {k: len(adj[k]) for k in range(m + n)}
    flows = [0] * len(cells)
    solved = [False] * len(cells)
    for _ in range(len(cells)):
        leaf = next(k for k in range(m + n) if degree[k] == 1)
        node_edges = [(nxt, e) for nxt, e in adj[leaf] if not solved[e]]
        other, e = node_edges[0]
        flows[e] = remaining[leaf]
        remaining[other] -= remaining[leaf]
        remaining[leaf] = 0
        solved[e] = True
        degree[leaf] -= 1
        degree[other] -= 1
        adj[leaf] = [(nx, ee) for nx, ee in adj[leaf] if ee != e]
        adj[other] = [(nx, ee) for nx, ee in adj[other] if ee != e]
    return flows


def exhaustive_wasserstein(set_a: np.ndarray, set_b: np.ndarray) -> float:
    """Exact W1 between tiny uniform sets by explicit enumeration.

    Equal sizes: minimum over all permutations of the mean pairwise cost.
    Unequal sizes: enumerate all spanning-tree bases of the transportation
    polytope with lcm-scaled integer marginals and keep the cheapest
    feasible one.
    """
    a = np.atleast_2d(np.asarray(set_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(set_b, dtype=np.float64))
    m, n = a.shape[0], b.shape[0]
    if m > MAX_W1_SET or n > MAX_W1_SET:
        raise RuntimeFailure("instance-too-large", f"sets of {m} and {n} exceed {MAX_W1_SET}")
    dist = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    if m == n:
        best = math.inf
        for perm in itertools.permutations(range(n)):
            cost = sum(dist[i, perm[i]] for i in range(m)) / m
            best = min(best, cost)
        return best
    lcm = math.lcm(m, n)
    supplies = [lcm // m] * m
    demands = [lcm // n] * n
    all_cells = [(i, j) for i in range(m) for j in range(n)]
    best = math.inf
    for cells in itertools.combinations(all_cells, m + n - 1):
        flows = _tree_flows_exact(cells, supplies, demands)
        if flows is None or any(f < 0 for f in flows):
            continue
        cost = sum(f * dist[i, j] for f, (i, j) in zip(flows, cells)) / lcm
        best = min(best, cost)
    return best


@dataclass(frozen=True)
class RandomInstance:
    """A randomly generated probe-gallery pair for oracle comparisons."""

    probe_obs: GroupObservation
    gallery_obs: GroupObservation
    probe_bundle: FeatureBundle
    gallery_bundle: FeatureBundle
    probe_weights: ImportanceMap
    gallery_weights: ImportanceMap


def random_instance(
    rng: np.random.Generator,
    n_probe: int,
    n_gallery: int,
    dim: int = 8,
    image_size: tuple[int, int] = (1000, 1000),
) -> RandomInstance:
    """Random observations, features and importance maps for testing."""

    def make_obs(name: str, camera: str, count: int, gid: int) -> GroupObservation:
        boxes = []
        for _ in range(count):
            cx = rng.uniform(60, image_size[0] - 60)
            cy = rng.uniform(120, image_size[1] - 120)
            boxes.append(BoundingBox(cx - 25, cy - 60, 50, 120))
        return GroupObservation(
            image_id=name, camera_id=camera, group_id=gid, boxes=tuple(boxes), image_size=image_size
        )

    def make_bundle(obs: GroupObservation) -> FeatureBundle:
        persons = rng.normal(size=(obs.n_persons, dim))
        persons /= np.linalg.norm(persons, axis=1, keepdims=True)
        glob = rng.normal(size=dim)
        glob /= np.linalg.norm(glob)
        return build_bundle(obs, persons, glob)

    def make_weights(obs: GroupObservation) -> ImportanceMap:
        sal = rng.uniform(0.1, 1.0, obs.n_persons)
        pur = rng.uniform(0.1, 1.0, obs.n_persons)
        return assemble_importance(static_geometry(obs), sal / sal.sum(), pur / pur.sum())

    p_obs = make_obs("probe", "A", n_probe, 0)
    g_obs = make_obs("gallery", "B", n_gallery, 0)
    return RandomInstance(
        probe_obs=p_obs,
        gallery_obs=g_obs,
        probe_bundle=make_bundle(p_obs),
        gallery_bundle=make_bundle(g_obs),
        probe_weights=make_weights(p_obs),
        gallery_weights=make_weights(g_obs),
    )
