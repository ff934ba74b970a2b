import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from groupmatch.config import ImportanceConfig
from groupmatch.importance import (
    ImportanceMap,
    MatchSet,
    assemble_importance,
    build_match_sets,
    coarse_weight,
    equal_importance,
    initial_importance,
    iterate_weights,
    local_densities,
    local_density,
    medium_weight,
    pair_stability,
    purity_terms,
    saliency_terms,
    static_geometry,
    static_weight_fine,
    static_weights_fine,
    triangle_stability,
)
from groupmatch.model import Mapping

from conftest import bundle_for, observation_at


class TestLocalDensity:
    def test_two_persons_reciprocal_distance(self):
        obs = observation_at([(100, 300), (400, 300)])
        rho = local_densities(obs)
        assert rho[0] == pytest.approx(1.0 / 300.0)
        assert rho[1] == pytest.approx(1.0 / 300.0)

    def test_symmetric_layout_equal_densities(self):
        # equilateral triangle: all pairwise distances equal
        obs = observation_at([(300, 200), (500, 200), (400, 200 + 200 * math.sin(math.pi / 3))])
        rho = local_densities(obs)
        assert np.allclose(rho, rho[0])

    def test_single_person_convention(self):
        assert local_density(0, observation_at([(100, 100)])) == 1.0


class TestStaticWeightFine:
    def test_equal_densities_n3(self):
        obs = observation_at([(300, 200), (500, 200), (400, 200 + 200 * math.sin(math.pi / 3))])
        t1 = static_weights_fine(obs)
        assert np.allclose(t1, 2.0)

    def test_density_ratio_sum(self):
        # verify against the direct ratio-sum definition with computed densities
        obs = observation_at([(200, 200), (260, 200), (700, 700)])
        rho = local_densities(obs)
        t1 = static_weights_fine(obs)
        for i in range(3):
            expected = sum(rho[i] / rho[j] for j in range(3) if j != i)
            assert t1[i] == pytest.approx(expected)

    def test_two_persons(self):
        obs = observation_at([(100, 300), (500, 300)])
        assert static_weight_fine(0, obs) == pytest.approx(1.0)
        assert static_weight_fine(1, obs) == pytest.approx(1.0)

    def test_single_person(self):
        assert static_weight_fine(0, observation_at([(100, 100)])) == 1.0


class TestPairStability:
    def test_half_diagonal(self):
        # d_norm = 0.5 -> t2 ~ 2.0
        obs = observation_at([(100, 100), (100 + 0.5 * 500 * 0.6, 100 + 0.5 * 500 * 0.8)], image_size=(300, 400))
        assert pair_stability(0, 1, obs) == pytest.approx(1.0 / 0.500001, rel=1e-6)

    def test_coincident_centers_capped(self):
        obs = observation_at([(100, 100), (100, 100)])
        assert pair_stability(0, 1, obs) == pytest.approx(1e6)

    def test_symmetry(self):
        obs = observation_at([(123, 222), (432, 111)])
        assert pair_stability(0, 1, obs) == pair_stability(1, 0, obs)


class TestTriangleStability:
    def test_equilateral_is_one(self):
        s = 200.0
        obs = observation_at([(300, 200), (300 + s, 200), (300 + s / 2, 200 + s * math.sin(math.pi / 3))])
        assert triangle_stability(0, 1, 2, obs) == pytest.approx(1.0, abs=1e-9)

    def test_right_isoceles(self):
        obs = observation_at([(200, 200), (500, 200), (200, 500)])
        expected = math.exp(
            -2 * (abs(1.0 - math.sin(math.pi / 3)) + 2 * abs(math.sin(math.pi / 4) - math.sin(math.pi / 3)))
        )
        got = triangle_stability(0, 1, 2, obs)
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(0.4051, abs=1e-3)

    def test_collinear(self):
        obs = observation_at([(100, 300), (300, 300), (500, 300)])
        expected = math.exp(-2 * 3 * math.sin(math.pi / 3))
        assert triangle_stability(0, 1, 2, obs) == pytest.approx(expected, abs=1e-9)
        assert triangle_stability(0, 1, 2, obs) == pytest.approx(0.00552, abs=1e-4)

    def test_duplicate_centers_degenerate(self):
        obs = observation_at([(100, 300), (100, 300), (500, 300)])
        expected = math.exp(-2 * 3 * math.sin(math.pi / 3))
        assert triangle_stability(0, 1, 2, obs) == pytest.approx(expected, abs=1e-9)

    def test_range_and_permutation_invariance(self, rng):
        for _ in range(20):
            pts = [(float(x), float(y)) for x, y in rng.uniform(100, 900, size=(3, 2))]
            obs = observation_at(pts)
            vals = {
                triangle_stability(i, j, k, obs)
                for i, j, k in [(0, 1, 2), (2, 0, 1), (1, 2, 0), (2, 1, 0)]
            }
            v = vals.pop()
            assert not vals or all(abs(v - w) < 1e-12 for w in vals)
            assert 0.0 < v <= 1.0 + 1e-12


class TestSubgroupWeights:
    def test_medium_weight(self):
        assert medium_weight(np.array([1.0, 1.0]), 0, 1, 2.0) == pytest.approx(4.0)

    def test_coarse_weight(self):
        med = {(0, 1): 4.0, (1, 2): 4.0, (0, 2): 4.0}
        assert coarse_weight(med, 0, 1, 2, 1.0) == pytest.approx(13.0)
        assert coarse_weight(med, 2, 0, 1, 1.0) == pytest.approx(13.0)

    @given(st.permutations([0, 1, 2]))
    def test_permutation_invariance(self, perm):
        obs = observation_at([(150, 200), (420, 260), (610, 540)])
        imp = initial_importance(obs)
        i, j, k = perm
        a, b, c = sorted((i, j, k))
        assert imp.coarse[(a, b, c)] == imp.coarse[tuple(sorted(perm))]

    def test_assembled_map_values(self):
        obs = observation_at([(200, 200), (500, 200), (350, 500)])
        static = static_geometry(obs)
        imp = assemble_importance(static, np.full(3, 1.0), np.full(3, 1.0))
        for (i, j), val in imp.medium.items():
            assert val == pytest.approx(imp.fine[i] + imp.fine[j] + static.t2[(i, j)])
        for (i, j, k), val in imp.coarse.items():
            expected = imp.medium[(i, j)] + imp.medium[(j, k)] + imp.medium[(i, k)] + static.t3[(i, j, k)]
            assert val == pytest.approx(expected)


class TestImportanceMap:
    def test_global_weight_fixed(self):
        with pytest.raises(ValueError):
            ImportanceMap(fine=np.ones(2), medium={}, coarse={}, global_weight=2.0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ImportanceMap(fine=np.array([-0.1]), medium={}, coarse={})

    def test_initial_dynamic_is_two(self):
        # dynamic parts initialized to 1 each: alpha = t1 + 2
        obs = observation_at([(200, 200), (500, 200), (350, 500)])
        imp = initial_importance(obs)
        t1 = static_weights_fine(obs)
        assert np.allclose(imp.fine, t1 + 2.0)

    def test_of_members(self):
        obs = observation_at([(200, 200), (500, 200), (350, 500)])
        imp = initial_importance(obs)
        assert imp.of_members((1,)) == imp.fine[1]
        assert imp.of_members((0, 2)) == imp.medium[(0, 2)]
        assert imp.of_members((0, 1, 2)) == imp.coarse[(0, 1, 2)]


def match_set_of(person, vectors):
    ms = MatchSet(person=person)
    for k, v in enumerate(vectors):
        ms.add(np.asarray(v, dtype=float), f"img{k}", 0)
    return ms


class TestSaliency:
    def test_uniform_when_identical(self):
        obs = observation_at([(100, 100), (400, 400)])
        feats = np.array([[1.0, 0.0], [1.0, 0.0]])
        bundle = bundle_for(obs, feats)
        sets = [match_set_of(0, [[2.0, 0.0]]), match_set_of(1, [[2.0, 0.0]])]
        s = saliency_terms(bundle, sets)
        assert np.allclose(s, 0.5)

    def test_single_match_uses_it(self):
        obs = observation_at([(100, 100), (400, 400)])
        bundle = bundle_for(obs, np.array([[0.0, 0.0], [1.0, 0.0]]))
        sets = [match_set_of(0, [[2.0, 0.0]]), match_set_of(1, [[7.0, 0.0]])]
        s = saliency_terms(bundle, sets)
        # raw saliencies: 2 and 6 -> normalized (0.25, 0.75)
        assert np.allclose(s, [0.25, 0.75])
        assert s.sum() == pytest.approx(1.0, abs=1e-12)

    def test_median_neighbor_selection(self):
        obs = observation_at([(100, 100)])
        bundle = bundle_for(obs, np.array([[0.0]]))
        # |M| = 4 -> ceil(4/2) = 2nd nearest neighbor; distances 1,2,3,4 -> 2
        ms = match_set_of(0, [[1.0], [2.0], [3.0], [4.0]])
        s = saliency_terms(bundle, [ms])
        assert s[0] == pytest.approx(1.0)  # single person normalizes to 1

    def test_empty_set_takes_max_raw(self):
        obs = observation_at([(100, 100), (400, 400), (700, 700)])
        bundle = bundle_for(obs, np.zeros((3, 2)))
        sets = [
            match_set_of(0, [[1.0, 0.0]]),  # raw 1
            match_set_of(1, [[3.0, 0.0]]),  # raw 3
            MatchSet(person=2),  # empty -> raw 3 (max)
        ]
        s = saliency_terms(bundle, sets)
        assert np.allclose(s, [1 / 7, 3 / 7, 3 / 7])

    def test_all_empty_uniform(self):
        obs = observation_at([(100, 100), (400, 400)])
        bundle = bundle_for(obs, np.zeros((2, 2)))
        s = saliency_terms(bundle, [MatchSet(person=0), MatchSet(person=1)])
        assert np.allclose(s, 0.5)


class TestPurity:
    def test_identical_sets_uniform(self):
        sets = [match_set_of(0, [[0.0, 0.0]]), match_set_of(1, [[0.0, 0.0]])]
        p, seen = purity_terms(sets)
        assert np.allclose(p, 0.5)  # all raw terms zero -> uniform
        assert seen == 0.0

    def test_singleton_distance(self):
        sets = [
            match_set_of(0, [[0.0, 0.0]]),
            match_set_of(1, [[3.0, 4.0]]),
            match_set_of(2, [[0.0, 0.0]]),
        ]
        p, seen = purity_terms(sets)
        assert seen == pytest.approx(5.0)
        # raw sums: p0 = 0 + 5, p1 = 5 + 5, p2 = 5 + 0 -> normalized
        assert np.allclose(p, [5 / 20, 10 / 20, 5 / 20])
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_empty_uses_fallback(self):
        sets = [match_set_of(0, [[0.0]]), MatchSet(person=1)]
        p, _ = purity_terms(sets, empty_fallback=7.0)
        assert np.allclose(p, 0.5)  # both raw terms are the fallback

    def test_single_person(self):
        p, seen = purity_terms([match_set_of(0, [[1.0]])])
        assert p[0] == 1.0
        assert seen == 0.0


class TestBuildMatchSets:
    def test_counts_and_sources(self):
        probes = [observation_at([(100, 100), (400, 400)], image_id="p0", camera="A")]
        galleries = [
            observation_at([(100, 100), (400, 400)], image_id=f"g{k}", camera="B") for k in range(3)
        ]
        bundles = {o.image_id: bundle_for(o, np.eye(2) * (1 + i)) for i, o in enumerate(probes + galleries)}
        mappings = {
            ("p0", "g0"): Mapping.from_pairs([(0, 0), (1, 1)]),
            ("p0", "g1"): Mapping.from_pairs([(0, 1)]),
            ("p0", "g2"): Mapping.from_pairs([(1, 0)]),
        }
        probe_sets = build_match_sets(probes, bundles, mappings, side="probe")["p0"]
        assert len(probe_sets[0]) == 2  # matched in g0 and g1
        assert len(probe_sets[1]) == 2  # matched in g0 and g2
        gallery_sets = build_match_sets(galleries, bundles, mappings, side="gallery")
        assert len(gallery_sets["g0"][0]) == 1
        assert len(gallery_sets["g1"][0]) == 0  # gallery person 0 of g1 never matched

    def test_duplicate_source_rejected(self):
        ms = MatchSet(person=0)
        ms.add(np.zeros(2), "img", 0)
        with pytest.raises(ValueError):
            ms.add(np.ones(2), "img", 1)


class TestIterateWeights:
    def _setup(self):
        probe = observation_at([(200, 200), (600, 600)], image_id="p", camera="A")
        gallery = observation_at([(210, 205), (590, 610)], image_id="g", camera="B")
        feats_p = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        feats_g = np.array([[0.9, 0.1, 0.0], [0.1, 0.9, 0.0]])
        bundles = {"p": bundle_for(probe, feats_p), "g": bundle_for(gallery, feats_g)}
        return probe, gallery, bundles

    def _matcher(self, bundles):
        from groupmatch.config import SolverConfig
        from groupmatch.matcher import match_pair

        cfg = SolverConfig()

        def run(p, g, wp, wg):
            return match_pair(p, g, bundles[p.image_id], bundles[g.image_id], wp, wg, cfg)

        return run

    def test_max_iter_zero_returns_initialization(self):
        probe, gallery, bundles = self._setup()
        out = iterate_weights([probe], [gallery], bundles, self._matcher(bundles), max_iter=0)
        assert out.iterations == 0
        assert out.results == {}
        expected = initial_importance(probe)
        assert np.allclose(out.weights["p"].fine, expected.fine)

    def test_infinite_tol_single_iteration(self):
        probe, gallery, bundles = self._setup()
        out = iterate_weights([probe], [gallery], bundles, self._matcher(bundles), tol=math.inf)
        assert out.iterations == 1
        assert out.converged

    def test_identical_groups_converge_by_second_iteration(self):
        probe, gallery, bundles = self._setup()
        out = iterate_weights([probe], [gallery], bundles, self._matcher(bundles), max_iter=5, tol=1e-9)
        assert out.converged
        assert out.iterations <= 3
        # one gallery image: every probe person matched once
        assert ("p", "g") in out.results
        assert len(out.results[("p", "g")].mapping) == 2

    def test_deterministic(self):
        probe, gallery, bundles = self._setup()
        out1 = iterate_weights([probe], [gallery], bundles, self._matcher(bundles))
        out2 = iterate_weights([probe], [gallery], bundles, self._matcher(bundles))
        assert np.array_equal(out1.weights["p"].fine, out2.weights["p"].fine)
        assert out1.results[("p", "g")].fused_score == out2.results[("p", "g")].fused_score


class TestEqualImportance:
    def test_all_ones(self):
        obs = observation_at([(100, 100), (300, 300), (600, 600)])
        imp = equal_importance(obs)
        assert np.allclose(imp.fine, 1.0)
        assert all(v == 1.0 for v in imp.medium.values())
        assert all(v == 1.0 for v in imp.coarse.values())
