import numpy as np
import pytest

from voxtrace import fixtures
from voxtrace.integrate import (PathTracerConfig, Ray, Scene,
                                estimate_majorant, free_flight_batch,
                                path_trace_batch, path_trace_sample, ray_cast,
                                ray_cast_batch, ray_span, sample_free_flight,
                                transmittance_analytic)
from voxtrace.optics import OpticalProperties, TransferFunction
from voxtrace.rng import LaneRng, RngStream
from voxtrace.volume import make_synthetic_volume

E1 = float(np.exp(-1.0))
SLAB_TARGET = 1.0 - E1  # closed form (q/sigma)(1 - e^(-sigma D)) with q=sigma=D=1


def _slab_lanes(n, seed, origin=(-1.0, 0.5, 0.5)):
    org = np.tile(origin, (n, 1))
    d = np.tile([1.0, 0.0, 0.0], (n, 1))
    lanes = LaneRng(seed, 0, np.zeros(n, dtype=np.int64), np.arange(n))
    return org, d, lanes


# -- analytic transmittance ---------------------------------------------------

def test_transmittance_values():
    assert transmittance_analytic(0.5, 2.0) == pytest.approx(E1, rel=1e-12)
    assert transmittance_analytic(3.0, 0.0) == 1.0
    assert transmittance_analytic(0.0, 123.0) == 1.0
    with pytest.raises(ValueError):
        transmittance_analytic(-1.0, 1.0)


# -- ray caster ---------------------------------------------------------------

def test_ray_cast_slab_closed_form():
    scene = fixtures.emissive_slab_scene()
    L = ray_cast(scene, fixtures.slab_axis_ray(),
                 PathTracerConfig(step_count_raycast=256))
    assert L[0] == pytest.approx(SLAB_TARGET, rel=0.01)


def test_ray_cast_vacuum_returns_env():
    scene = Scene(fixtures.slab_volume(), fixtures.vacuum_tf(),
                  fixtures.constant_env(2.5))
    L = ray_cast(scene, fixtures.slab_axis_ray(), PathTracerConfig())
    assert np.all(L == 2.5)
    # a ray that misses the box entirely
    L = ray_cast(scene, Ray((0.0, 10.0, 10.0), (1.0, 0.0, 0.0)),
                 PathTracerConfig())
    assert np.all(L == 2.5)


def test_ray_cast_first_order_convergence():
    scene = fixtures.emissive_slab_scene()
    errs = []
    for steps in (64, 128, 256, 512):
        L = ray_cast(scene, fixtures.slab_axis_ray(),
                     PathTracerConfig(step_count_raycast=steps))
        errs.append(abs(L[0] - SLAB_TARGET))
    assert errs[0] > errs[1] > errs[2] > errs[3]
    for a, b in zip(errs, errs[1:]):
        assert a / b > 1.6  # at least first-order decay per doubling


def test_ray_cast_shading_off_matches_sigma_s_zero():
    # emissive slab has sigma_s == 0, so the shading term must not fire
    scene = fixtures.emissive_slab_scene()
    on = ray_cast(scene, fixtures.slab_axis_ray(),
                  PathTracerConfig(raycast_shading=True))
    off = ray_cast(scene, fixtures.slab_axis_ray(),
                   PathTracerConfig(raycast_shading=False))
    assert np.array_equal(on, off)


# -- free flight --------------------------------------------------------------

def test_free_flight_vacuum_always_escapes():
    scene = Scene(fixtures.slab_volume(), fixtures.vacuum_tf(),
                  fixtures.constant_env(1.0))
    r = sample_free_flight(scene, fixtures.slab_axis_ray(), 10.0,
                           RngStream(1))
    assert not r.collided and r.props is None


def test_free_flight_escape_fraction_bernoulli_ci():
    scene = fixtures.absorber_slab_scene()
    n = 1_000_000
    org, d, lanes = _slab_lanes(n, seed=21)
    t, coll = free_flight_batch(scene, org, d, np.full(n, 1.0),
                                np.full(n, 2.25), lanes)
    p = 1.0 - coll.mean()
    ci = 4.0 * np.sqrt(E1 * (1 - E1) / n)
    assert abs(p - E1) <= ci


@pytest.mark.parametrize("mult", [2.0, 4.0])
def test_free_flight_majorant_invariance(mult):
    base = fixtures.absorber_slab_scene()
    inflated = Scene(fixtures.slab_volume(), fixtures.absorber_tf(),
                     fixtures.constant_env(1.0), majorant=base.majorant * mult)
    n = 1_000_000
    org, d, lanes = _slab_lanes(n, seed=22)
    _, coll = free_flight_batch(inflated, org, d, np.full(n, 1.0),
                                np.full(n, 2.25), lanes)
    p = 1.0 - coll.mean()
    ci = 4.0 * np.sqrt(E1 * (1 - E1) / n)
    assert abs(p - E1) <= ci


def test_free_flight_scalar_collision_reports_props():
    scene = fixtures.absorber_slab_scene()
    rng = RngStream(7, pixel=3, sample=9)
    hits = 0
    for s in range(200):
        rng2 = RngStream(7, pixel=3, sample=s)
        r = sample_free_flight(scene, fixtures.slab_axis_ray(), 10.0, rng2)
        if r.collided:
            hits += 1
            assert 1.0 <= r.t <= 2.25
            assert r.props.sigma_t > 0.0
    assert 0 < hits < 200


# -- majorant estimation ------------------------------------------------------

def test_majorant_vacuum_is_zero():
    assert estimate_majorant(fixtures.slab_volume(), fixtures.vacuum_tf()) == 0.0


def test_majorant_constant_volume():
    data = np.full((4, 4, 4), 0.5)
    from voxtrace.volume import ScalarVolume
    vol = ScalarVolume((4, 4, 4), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0), data,
                       (0.5, 0.5))
    tf = fixtures.absorber_tf(2.0)
    # extremum at the control point (sigma_t=2) dominates the data value
    assert estimate_majorant(vol, tf, 1.0) == 2.0
    assert estimate_majorant(vol, tf, 3.0) == 6.0


def test_majorant_attained_at_data_extreme():
    vol = fixtures.slab_volume()  # contains value 1.0
    tf = fixtures.absorber_tf(2.0)
    assert estimate_majorant(vol, tf, 1.0) == 2.0


def test_scene_rejects_majorant_below_bound():
    with pytest.raises(ValueError):
        Scene(fixtures.slab_volume(), fixtures.absorber_tf(),
              fixtures.constant_env(1.0), majorant=0.5)


# -- path tracer --------------------------------------------------------------

def test_path_trace_vacuum_is_exact_env():
    scene = Scene(fixtures.slab_volume(), fixtures.vacuum_tf(),
                  fixtures.constant_env(1.0))
    out = path_trace_sample(scene, fixtures.slab_axis_ray(),
                            PathTracerConfig(), RngStream(1))
    assert np.all(out == 1.0)


def test_path_trace_pure_absorber_matches_beer_lambert():
    scene = fixtures.absorber_slab_scene()
    n = 200_000
    org, d, lanes = _slab_lanes(n, seed=31)
    out = path_trace_batch(scene, org, d, PathTracerConfig(), lanes)
    m = out[:, 0].mean()
    se = out[:, 0].std(ddof=1) / np.sqrt(n)
    assert abs(m - E1) <= 4.0 * se


def test_path_trace_emissive_slab_matches_ray_cast_target():
    scene = fixtures.emissive_slab_scene()
    n = 200_000
    org, d, lanes = _slab_lanes(n, seed=32)
    out = path_trace_batch(scene, org, d, PathTracerConfig(), lanes)
    m = out[:, 0].mean()
    se = out[:, 0].std(ddof=1) / np.sqrt(n)
    assert abs(m - SLAB_TARGET) <= 4.0 * se


def test_path_trace_scalar_equals_batch_lane():
    scene = fixtures.absorber_slab_scene()
    ray = fixtures.slab_axis_ray()
    a = path_trace_sample(scene, ray, PathTracerConfig(), RngStream(5, 0, 17, 3))
    org = np.tile([-1.0, 0.5, 0.5], (3, 1))
    d = np.tile([1.0, 0.0, 0.0], (3, 1))
    lanes = LaneRng(5, 0, np.array([2, 17, 40]), np.array([0, 3, 7]))
    out = path_trace_batch(scene, org, d, PathTracerConfig(), lanes)
    assert np.array_equal(a, out[1])


def test_path_trace_deterministic_across_batch_composition():
    scene = fixtures.sphere_scene()
    lo, hi = scene.volume.bbox
    c = (lo + hi) / 2.0
    org = np.tile([c[0], c[1], -10.0], (6, 1))
    d = np.tile([0.0, 0.0, 1.0], (6, 1))
    lanes_a = LaneRng(9, 0, np.arange(6), np.zeros(6, dtype=np.int64))
    out_a = path_trace_batch(scene, org, d, PathTracerConfig(), lanes_a)
    lanes_b = LaneRng(9, 0, np.array([3]), np.array([0]))
    out_b = path_trace_batch(scene, org[:1], d[:1], PathTracerConfig(), lanes_b)
    assert np.array_equal(out_a[3], out_b[0])


def test_throughput_bounded_in_debug_mode():
    scene = fixtures.sphere_scene(density_scale=0.5)
    n = 20_000
    org = np.tile([-5.0, 15.5, 15.5], (n, 1))
    d = np.tile([1.0, 0.0, 0.0], (n, 1))
    lanes = LaneRng(41, 0, np.zeros(n, dtype=np.int64), np.arange(n))
    cfg = PathTracerConfig(use_nee=False, max_bounces=16,
                           debug_throughput_checks=True)
    out = path_trace_batch(scene, org, d, cfg, lanes)
    assert out.max() <= scene.env.radiance.max() + 1e-12


def test_scatter_free_equivalence_with_ray_cast():
    # sigma_s == 0 scene: emissive-absorbing sphere in a constant env
    vol = make_synthetic_volume("sphere", (16, 16, 16), (1.0, 1.0, 1.0))
    scene = Scene(vol, fixtures.emissive_tf(), fixtures.constant_env(0.5))
    rs = np.random.RandomState(8)
    n_rays, n_samp = 16, 4000
    lo, hi = vol.bbox
    for k in range(n_rays):
        target = lo + rs.rand(3) * (hi - lo)
        origin = np.array([-10.0, 7.5 + rs.randn(), 7.5 + rs.randn()])
        d = target - origin
        d /= np.linalg.norm(d)
        rc_1024 = ray_cast_batch(scene, origin[None], d[None],
                                 PathTracerConfig(step_count_raycast=1024))[0, 0]
        rc_512 = ray_cast_batch(scene, origin[None], d[None],
                                PathTracerConfig(step_count_raycast=512))[0, 0]
        disc = abs(rc_1024 - rc_512) + 1e-6
        org = np.tile(origin, (n_samp, 1))
        dd = np.tile(d, (n_samp, 1))
        lanes = LaneRng(100 + k, 0, np.zeros(n_samp, dtype=np.int64),
                        np.arange(n_samp))
        out = path_trace_batch(scene, org, dd, PathTracerConfig(), lanes)
        m = out[:, 0].mean()
        se = out[:, 0].std(ddof=1) / np.sqrt(n_samp)
        assert abs(m - rc_1024) <= 4.0 * se + disc, \
            f"ray {k}: pt={m:.5f} rc={rc_1024:.5f} se={se:.5f} disc={disc:.5f}"


def test_nee_consistency_on_thin_shell():
    scene = fixtures.shell_scene()
    n = 60_000
    org = np.tile([-20.0, 15.5, 15.5], (n, 1))
    d = np.tile([1.0, 0.0, 0.0], (n, 1))
    means, ses = [], []
    for seed, nee in ((51, True), (52, False)):
        lanes = LaneRng(seed, 0, np.zeros(n, dtype=np.int64), np.arange(n))
        out = path_trace_batch(scene, org, d, PathTracerConfig(use_nee=nee),
                               lanes)
        means.append(out[:, 0].mean())
        ses.append(out[:, 0].std(ddof=1) / np.sqrt(n))
    se = float(np.hypot(*ses))
    assert abs(means[0] - means[1]) <= 4.0 * se


def test_ray_span_misses_and_clamps():
    vol = fixtures.slab_volume()
    t0, t1, hit = ray_span(vol, np.array([[-1.0, 0.5, 0.5]]),
                           np.array([[1.0, 0.0, 0.0]]))
    assert hit[0] and t0[0] == pytest.approx(1.0) and t1[0] == pytest.approx(2.25)
    # inside the box: entry clamps to zero
    t0, t1, hit = ray_span(vol, np.array([[0.6, 0.5, 0.5]]),
                           np.array([[1.0, 0.0, 0.0]]))
    assert hit[0] and t0[0] == 0.0
    _, _, hit = ray_span(vol, np.array([[-1.0, 5.0, 0.5]]),
                         np.array([[1.0, 0.0, 0.0]]))
    assert not hit[0]


def test_config_validation():
    with pytest.raises(ValueError):
        PathTracerConfig(max_bounces=0)
    with pytest.raises(ValueError):
        PathTracerConfig(rr_start_bounce=10, max_bounces=5)
    with pytest.raises(ValueError):
        PathTracerConfig(rr_min_survival=0.0)
    with pytest.raises(ValueError):
        PathTracerConfig(step_count_raycast=8)
