import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmloop import geo
from mmloop.errors import ConfigError, ExtrapolationError, InsufficientDataError, InvalidInputError

pyproj = pytest.importorskip("pyproj")

SYDNEY = (-33.8886, 151.1873)


def traj_from(xy, t=None, heading=None):
    xy = np.asarray(xy, dtype=float)
    t = np.arange(len(xy), dtype=float) if t is None else t
    return geo.Trajectory("r", t, xy[:, 0], xy[:, 1], heading, "56S")


class TestUtm:
    def test_zone_origin(self):
        for zone in (1, 31, 56):
            e, n, label = geo.latlon_to_utm(0.0, geo.central_meridian(zone))
            assert e[0] == pytest.approx(500000.0, abs=1e-6)
            assert n[0] == pytest.approx(0.0, abs=1e-6)
            assert label == f"{zone}N"

    def test_sydney_against_pyproj(self):
        pose = geo.utm_convert(geo.GeoFix(0.0, *SYDNEY))
        assert pose.zone == "56S"
        assert math.isnan(pose.heading)
        tr = pyproj.Transformer.from_crs("EPSG:4326", "EPSG:32756", always_xy=True)
        e, n = tr.transform(SYDNEY[1], SYDNEY[0])
        assert abs(pose.easting - e) < 0.5
        assert abs(pose.northing - n) < 0.5

    def test_random_points_against_pyproj(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            lat = rng.uniform(-80, 80)
            lon = rng.uniform(-179, 179)
            e, n, zone = geo.latlon_to_utm(lat, lon)
            number, south = geo.parse_zone(zone)
            epsg = (32700 if south else 32600) + number
            pe, pn = pyproj.Transformer.from_crs("EPSG:4326", f"EPSG:{epsg}", always_xy=True).transform(lon, lat)
            assert abs(e[0] - pe) < 0.5 and abs(n[0] - pn) < 0.5

    def test_latitude_step_near_sydney(self):
        a = geo.utm_convert(geo.GeoFix(0, SYDNEY[0], SYDNEY[1]))
        b = geo.utm_convert(geo.GeoFix(0, SYDNEY[0] + 0.001, SYDNEY[1]))
        assert b.northing - a.northing == pytest.approx(110.9, abs=0.5)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-83.9, 83.9), st.floats(-180, 180))
    def test_round_trip_under_a_centimetre(self, lat, lon):
        e, n, zone = geo.latlon_to_utm(lat, lon)
        la, lo = geo.utm_to_latlon(e, n, zone)
        e2, n2, _ = geo.latlon_to_utm(la, lo, zone)
        assert math.hypot(e2[0] - e[0], n2[0] - n[0]) < 0.01

    def test_out_of_band_latitude(self):
        with pytest.raises(InvalidInputError):
            geo.utm_convert(geo.GeoFix(0, 84.0, 10.0))
        with pytest.raises(InvalidInputError):
            geo.GeoFix(0, 91.0, 0.0)

    def test_deterministic(self):
        a = geo.latlon_to_utm([-33.9, -33.8], [151.1, 151.2])
        b = geo.latlon_to_utm([-33.9, -33.8], [151.1, 151.2])
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


class TestHeading:
    @pytest.mark.parametrize("end,expected", [((1, 0), 0.0), ((0, 1), math.pi / 2), ((1, 1), math.pi / 4)])
    def test_direction_of_travel(self, end, expected):
        tr = geo.heading_from_track(traj_from([(0, 0), end]))
        assert tr.heading[0] == pytest.approx(expected)
        assert tr.heading[1] == tr.heading[0]

    def test_short_steps_keep_last_heading(self):
        tr = geo.heading_from_track(traj_from([(0, 0), (1, 0), (1.01, 0.02), (1.01, 1.0)]))
        assert tr.heading[1] == pytest.approx(0.0)
        assert tr.heading[2] == pytest.approx(math.pi / 2)

    def test_single_fix_rejected(self):
        with pytest.raises(InsufficientDataError):
            geo.heading_from_track(traj_from([(0, 0)]))

    def test_timestamps_must_increase(self):
        with pytest.raises(InvalidInputError):
            traj_from([(0, 0), (1, 0)], t=np.array([1.0, 1.0]))


class TestInterpolation:
    def test_midpoint(self):
        tr = geo.Trajectory("r", [0.0, 2.0], [0.0, 10.0], [0.0, 0.0], [0.0, 0.0], "56S")
        assert geo.interpolate_pose(tr, 1.0).easting == 5.0

    def test_knots_are_exact(self):
        rng = np.random.default_rng(1)
        t = np.cumsum(rng.uniform(0.1, 1.0, 50))
        tr = geo.Trajectory("r", t, rng.normal(0, 1e5, 50), rng.normal(0, 1e6, 50),
                            rng.uniform(-np.pi, np.pi, 50), "56S")
        e, n, h, inside = geo.interpolate_poses(tr, t)
        assert inside.all()
        assert np.array_equal(e, tr.easting) and np.array_equal(n, tr.northing)

    def test_heading_takes_short_arc(self):
        tr = geo.Trajectory("r", [0.0, 1.0], [0.0, 0.0], [0.0, 0.0], [-3.0, 3.0], "56S")
        h = geo.interpolate_pose(tr, 0.5).heading
        assert abs(abs(h) - math.pi) < 1e-9

    def test_extrapolation_refused(self):
        tr = geo.Trajectory("r", [0.0, 1.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0], "56S")
        with pytest.raises(ExtrapolationError):
            geo.interpolate_pose(tr, 1.5)
        _, _, _, inside = geo.interpolate_poses(tr, [-0.1, 0.5, 1.0, 1.1])
        assert inside.tolist() == [False, True, True, False]


def brute_greedy(e, n, h, d_p, gate):
    acc = []
    for i in range(len(e)):
        if all(math.hypot(e[i] - e[j], n[i] - n[j]) >= d_p
               or geo.heading_difference(h[i], h[j]) >= gate for j in acc):
            acc.append(i)
    return acc


class TestPlaces:
    def test_collinear(self):
        tr = traj_from([(x, 0) for x in range(13)], heading=np.zeros(13))
        places = geo.discretize_places(tr, 5.0)
        assert [p.pose.easting for p in places] == [0.0, 5.0, 10.0]
        assert [p.place_id for p in places] == [0, 1, 2]

    def test_single_and_empty(self):
        assert len(geo.discretize_places(traj_from([(3, 4)], heading=[0.0]), 5.0)) == 1
        assert geo.discretize_places(geo.Trajectory("r", [], [], [], [], "56S"), 5.0) == []

    def test_reverse_heading_is_another_place(self):
        tr = traj_from([(0, 0), (0, 0.0)], t=np.array([0.0, 1.0]), heading=np.array([0.0, math.pi]))
        assert len(geo.discretize_places(tr, 5.0)) == 2

    def test_matches_brute_force_and_separation(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            k = rng.integers(1, 200)
            e = np.cumsum(rng.normal(0.8, 1.5, k))
            n = np.cumsum(rng.normal(0.0, 1.5, k))
            h = rng.uniform(-np.pi, np.pi, k)
            tr = geo.Trajectory("r", np.arange(k, dtype=float), e, n, h, "56S")
            places = geo.discretize_places(tr, 5.0)
            assert [p.source_timestamp for p in places] == [float(i) for i in brute_greedy(e, n, h, 5.0, math.pi / 2)]
            pe, pn, ph = geo.place_arrays(places)
            for i in range(len(places)):
                for j in range(i):
                    assert (math.hypot(pe[i] - pe[j], pn[i] - pn[j]) >= 5.0
                            or geo.heading_difference(ph[i], ph[j]) >= math.pi / 2)

    def test_assign_samples_examples(self):
        places = [geo.Place(0, geo.MetricPose(0.0, 0.0, 0.0), 0.0)]
        samples = [(0, geo.MetricPose(3.0, 0.0, 0.1), 10),
                   (0, geo.MetricPose(11.0, 0.0, 0.0), 11),
                   (0, geo.MetricPose(0.0, 5.0, math.pi), 12),
                   (0, geo.MetricPose(10.0, 0.0, 0.0), 13)]
        mapping, unassigned = geo.assign_samples(places, samples, 10.0)
        assert mapping == {0: [10, 13]}
        assert unassigned == [11, 12]


class TestSplit:
    def places_on_line(self, k, spacing=5.0):
        return [geo.Place(i, geo.MetricPose(i * spacing, 0.0, 0.0), float(i)) for i in range(k)]

    def test_partition_and_buffer_oracle(self):
        places = self.places_on_line(20)
        s = geo.split_places(places, 0.5, 5.0, seed=3)
        assert s.train | s.test | s.buffer == set(range(20))
        assert not (s.train & s.test) and not (s.train & s.buffer) and not (s.test & s.buffer)
        for t in s.test:
            for r in s.train:
                assert abs(t - r) * 5.0 >= 5.0

    def test_zero_buffer(self):
        s = geo.split_places(self.places_on_line(20), 0.5, 0.0, seed=1)
        assert s.buffer == set()

    def test_deterministic_and_seeded(self):
        p = self.places_on_line(40)
        assert geo.split_places(p, 0.6, 10.0, seed=4) == geo.split_places(p, 0.6, 10.0, seed=4)

    def test_bad_fraction(self):
        with pytest.raises(ConfigError):
            geo.split_places(self.places_on_line(5), 1.0, 5.0)

    def test_random_instances(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            k = int(rng.integers(5, 80))
            pts = rng.uniform(0, 200, (k, 2))
            places = [geo.Place(i, geo.MetricPose(x, y, 0.0), float(i)) for i, (x, y) in enumerate(pts)]
            s = geo.split_places(places, float(rng.uniform(0.2, 0.8)), 10.0, seed=int(rng.integers(100)))
            assert len(s.train) + len(s.test) + len(s.buffer) == k
            for t in s.test:
                for r in s.train:
                    assert np.hypot(*(pts[t] - pts[r])) >= 10.0
