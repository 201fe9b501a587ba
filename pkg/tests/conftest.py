import numpy as np
import pytest

from trackguard.vehicle import VehicleParams
from trackguard.track import Track, TrackSegment


@pytest.fixture(scope="session")
def params():
    return VehicleParams()


def make_default_track():
    """Oval with an S-chicane in one straight; closes exactly by construction.

    Chicane: arcs (+c, theta), (-c, 2*theta), (+c, theta) advance the pose by
    4*sin(theta)/c with zero net heading and lateral offset, so it replaces
    that much straight length.
    """
    c_turn = 1.0
    c_chi = 1.25
    theta = np.pi / 4
    straight = 3.0
    advance = 4 * np.sin(theta) / c_chi
    lead = (straight - advance) / 2
    segs = [
        TrackSegment(0.0, straight),
        TrackSegment(c_turn, np.pi / c_turn),
        TrackSegment(0.0, lead),
        TrackSegment(c_chi, theta / c_chi),
        TrackSegment(-c_chi, 2 * theta / c_chi),
        TrackSegment(c_chi, theta / c_chi),
        TrackSegment(0.0, lead),
        TrackSegment(c_turn, np.pi / c_turn),
    ]
    return Track(segs, half_width=0.30, start_pose=(0.0, 0.0, 0.0), closed=True)


@pytest.fixture(scope="session")
def track():
    return make_default_track()


@pytest.fixture(scope="session")
def ring_track():
    """Unit-radius circle, four identical arcs."""
    segs = [TrackSegment(1.0, np.pi / 2)] * 4
    return Track(segs, half_width=0.30, closed=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
