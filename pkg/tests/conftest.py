import hypothesis
import numpy as np
import pytest

from groupmatch.descriptors import build_bundle
from groupmatch.model import BoundingBox, GroupObservation

hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.load_profile("ci")


def observation_at(centers, image_size=(1000, 1000), image_id="img", camera="A", group_id=0):
    """Observation with person boxes centered at the given pixel positions."""
    boxes = []
    for cx, cy in centers:
        boxes.append(BoundingBox(cx - 25.0, cy - 60.0, 50.0, 120.0))
    return GroupObservation(
        image_id=image_id,
        camera_id=camera,
        group_id=group_id,
        boxes=tuple(boxes),
        image_size=image_size,
    )


def bundle_for(obs, features, global_feature=None):
    """Bundle from explicit per-person vectors (rows of ``features``)."""
    features = np.asarray(features, dtype=np.float64)
    if global_feature is None:
        global_feature = features.mean(axis=0)
    return build_bundle(obs, features, np.asarray(global_feature, dtype=np.float64))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
