import numpy as np
import pytest
from hypothesis import given, strategies as st

from groupmatch.model import (
    BoundingBox,
    FeatureBundle,
    GranularObject,
    GroupObservation,
    Mapping,
    MatchCandidate,
    enumerate_granular_objects,
)

from conftest import observation_at


def comb(n, k):
    from math import comb as c

    return c(n, k)


class TestBoundingBox:
    def test_center(self):
        assert BoundingBox(10, 20, 30, 40).center == (25.0, 40.0)

    @pytest.mark.parametrize("w,h", [(0, 10), (10, 0), (-1, 5)])
    def test_rejects_empty_extent(self, w, h):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, w, h)


class TestGroupObservation:
    def test_rejects_empty_boxes(self):
        with pytest.raises(ValueError):
            GroupObservation("i", "c", 0, (), (100, 100))

    def test_rejects_box_outside_image(self):
        with pytest.raises(ValueError):
            GroupObservation("i", "c", 0, (BoundingBox(90, 0, 20, 20),), (100, 100))

    def test_diagonal(self):
        obs = observation_at([(100, 100)], image_size=(300, 400))
        assert obs.diagonal == pytest.approx(500.0)


class TestGranularObjects:
    def test_three_person_counts(self):
        obs = observation_at([(100, 100), (200, 200), (300, 300)])
        objs = enumerate_granular_objects(obs)
        assert len(objs) == 8  # 3 fine + 3 medium + 1 coarse + 1 global
        assert sum(o.level == "fine" for o in objs) == 3
        assert sum(o.level == "medium" for o in objs) == 3
        assert sum(o.level == "coarse" for o in objs) == 1
        assert sum(o.level == "global" for o in objs) == 1

    def test_single_person_degenerate(self):
        objs = enumerate_granular_objects(observation_at([(100, 100)]))
        assert [o.level for o in objs] == ["fine", "global"]

    def test_four_person_counts(self):
        obs = observation_at([(100 * i, 100 * i) for i in range(1, 5)])
        objs = enumerate_granular_objects(obs)
        assert sum(o.level == "fine" for o in objs) == 4
        assert sum(o.level == "medium" for o in objs) == 6
        assert sum(o.level == "coarse" for o in objs) == 4
        assert sum(o.level == "global" for o in objs) == 1

    def test_two_person_pair_is_coarse_level(self):
        objs = enumerate_granular_objects(observation_at([(100, 100), (200, 200)]))
        levels = [o.level for o in objs]
        assert levels == ["fine", "fine", "coarse", "global"]

    @given(st.integers(min_value=1, max_value=8))
    def test_count_formula(self, n):
        obs = observation_at([(60 + 100 * i, 300) for i in range(n)])
        objs = enumerate_granular_objects(obs)
        expected = comb(n, 1) + comb(n, 2) + (comb(n, 3) if n >= 3 else 0) + 1
        assert len(objs) == expected
        # subsets are deduplicated and canonical
        assert len({(o.level, o.members) for o in objs}) == len(objs)
        for o in objs:
            assert list(o.members) == sorted(set(o.members))

    def test_rejects_bad_members(self):
        with pytest.raises(ValueError):
            GranularObject("fine", (1, 2))
        with pytest.raises(ValueError):
            GranularObject("medium", (2, 1))
        with pytest.raises(ValueError):
            GranularObject("coarse", (0, 1, 2, 3))


class TestMapping:
    def test_one_to_one_enforced(self):
        with pytest.raises(ValueError):
            Mapping.from_pairs([(0, 1), (0, 2)])
        with pytest.raises(ValueError):
            Mapping.from_pairs([(0, 1), (1, 1)])

    def test_sorted_and_equal(self):
        m1 = Mapping.from_pairs([(1, 0), (0, 1)])
        m2 = Mapping.from_pairs([(0, 1), (1, 0)])
        assert m1 == m2
        assert [c.as_pair() for c in m1] == [(0, 1), (1, 0)]

    def test_lookup_helpers(self):
        m = Mapping.from_pairs([(0, 2), (1, 0)])
        assert m.probe_to_gallery() == {0: 2, 1: 0}
        assert m.matched_probes() == {0, 1}
        assert m.matched_galleries() == {0, 2}

    def test_rejects_negative_candidate(self):
        with pytest.raises(ValueError):
            MatchCandidate(-1, 0)


class TestFeatureBundle:
    def test_dimension_checks(self):
        with pytest.raises(ValueError):
            FeatureBundle(
                person_appearance=np.ones((2, 4)),
                edge_spatial={(0, 1): np.ones(3)},
                subgroup_appearance={(0, 1): np.ones(5)},  # wrong appearance dim
                subgroup_spatial={(0, 1): np.ones(3)},
                global_appearance=np.ones(4),
            )
        with pytest.raises(ValueError):
            FeatureBundle(
                person_appearance=np.ones((2, 4)),
                edge_spatial={(0, 1): np.ones(3)},
                subgroup_appearance={(0, 1): np.ones(4)},
                subgroup_spatial={(0, 1): np.ones(2)},  # spatial dims disagree
                global_appearance=np.ones(4),
            )

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            FeatureBundle(
                person_appearance=np.array([[np.nan, 0.0]]),
                edge_spatial={},
                subgroup_appearance={},
                subgroup_spatial={},
                global_appearance=np.zeros(2),
            )

    def test_arrays_are_frozen(self):
        fb = FeatureBundle(
            person_appearance=np.ones((1, 2)),
            edge_spatial={},
            subgroup_appearance={},
            subgroup_spatial={},
            global_appearance=np.ones(2),
        )
        with pytest.raises(ValueError):
            fb.person_appearance[0, 0] = 5.0
