import numpy as np
import pytest
from hypothesis import given, strategies as st

from rehab_platform.posturography import (
    CASES,
    FootLayout,
    LoadCellFrame,
    LoadCellStream,
    TABLE1_PRESSURE,
    TABLE3_MEAN,
    UPPER_CAPACITY_N,
    UndefinedCopError,
    barycentric_lower,
    case_profile,
    center_of_mass,
    center_of_pressure,
    detect_reaction,
    events_table,
    heel_share,
    lower_cell_positions,
    pressure_ratios,
    region_ordering,
    synthesize_loads,
    table1_frame,
)

R_LOW = 0.25
weights = st.lists(st.floats(0.0, 500.0), min_size=3, max_size=3).filter(lambda w: sum(w) > 1e-3)


def test_com_equal_weights_is_origin():
    assert np.abs(center_of_mass([100.0, 100.0, 100.0], R_LOW)).max() < 1e-12


def test_com_single_cell_is_vertex():
    assert np.allclose(center_of_mass([50.0, 0.0, 0.0], R_LOW), [0.0, R_LOW], atol=1e-15)
    for k, vertex in enumerate(lower_cell_positions(R_LOW)):
        w = np.zeros(3)
        w[k] = 7.0
        assert np.array_equal(center_of_mass(w, R_LOW), vertex)


def test_com_two_base_cells():
    assert np.allclose(center_of_mass([0.0, 30.0, 30.0], R_LOW), [0.0, -R_LOW / 2])


def test_com_unloaded():
    assert center_of_mass([0.0, 0.0, 0.0]) is None


@given(weights)
def test_com_inside_triangle(w):
    com = center_of_mass(w, R_LOW)
    bary = barycentric_lower(com, R_LOW)
    assert np.all(bary >= 0) and bary.sum() == pytest.approx(1.0)


@given(weights, st.floats(0.01, 100.0))
def test_com_scale_invariant(w, k):
    assert np.allclose(center_of_mass(np.array(w) * k, R_LOW), center_of_mass(w, R_LOW))


@given(weights)
def test_com_mirrors_with_cells(w):
    a = center_of_mass(w, R_LOW)
    b = center_of_mass([w[0], w[2], w[1]], R_LOW)
    assert np.allclose([a[0], a[1]], [-b[0], b[1]], atol=1e-12)


def test_cop_fixture():
    assert center_of_pressure(10.0, 0.0, 500.0, h=0.03) == pytest.approx(0.02)
    assert center_of_pressure(0.03 * 40.0, 40.0, 500.0) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(UndefinedCopError):
        center_of_pressure(10.0, 0.0, 0.0)


def test_table1_pressures_recovered():
    layout = FootLayout()
    ratios = pressure_ratios(table1_frame(layout), layout)
    for side in ("left", "right"):
        got = [ratios[side][z] for z in ("toes", "metatarsals", "middle", "heel")]
        assert np.abs(np.array(got) - TABLE1_PRESSURE[side]).max() < 1e-9


def test_pressure_zero_and_linear():
    layout = FootLayout()
    zero = pressure_ratios(LoadCellFrame(0.0, np.zeros(8), np.zeros(3)), layout)
    assert all(v == 0.0 for v in zero["left"].values())
    upper = np.arange(1.0, 9.0)
    one = pressure_ratios(LoadCellFrame(0.0, upper, np.zeros(3)), layout)
    two = pressure_ratios(LoadCellFrame(0.0, 2 * upper, np.zeros(3)), layout)
    for side in ("left", "right"):
        for zone in one[side]:
            assert two[side][zone] == pytest.approx(2 * one[side][zone])


def test_pressure_mirror_left_right():
    layout = FootLayout()
    upper = np.arange(1.0, 9.0)
    swapped = np.concatenate([upper[4:], upper[:4]])
    a = pressure_ratios(LoadCellFrame(0.0, upper, np.zeros(3)), layout)
    b = pressure_ratios(LoadCellFrame(0.0, swapped, np.zeros(3)), layout)
    assert a["left"] == b["right"] and a["right"] == b["left"]


def test_saturation_flags():
    upper = np.full(8, 10.0)
    upper[3] = UPPER_CAPACITY_N + 1
    frame = LoadCellFrame(0.0, upper, [0.0, 400.0, 0.0])
    assert frame.saturated_upper == [4]
    assert frame.saturated_lower == [10]
    assert pressure_ratios(frame, FootLayout())["saturated"] == [4]


def test_frame_validation():
    with pytest.raises(ValueError):
        LoadCellFrame(0.0, -np.ones(8), np.zeros(3))
    with pytest.raises(ValueError):
        LoadCellFrame(0.0, np.ones(7), np.zeros(3))


def test_layout_rails():
    layout = FootLayout.from_anthropometrics("women")
    assert layout.foot_length == pytest.approx(0.2362)
    pos = layout.cell_positions()
    assert np.allclose(pos[3], [-layout.half_stance, layout.heel_y])
    assert np.allclose(pos[7], [layout.half_stance, layout.heel_y])
    with pytest.raises(ValueError):
        FootLayout(foot_length=0.40)


def test_case1_ordering_and_heel_share():
    stream = synthesize_loads("static-1", duration=20.0, seed=1)
    mean = stream.mean_frame().upper
    order = region_ordering(mean)
    assert set(order[:2]) == {4, 8}
    assert order[-1] == 7
    assert order == region_ordering(TABLE3_MEAN[0])
    assert heel_share(mean) == pytest.approx(0.5, abs=0.01)


def test_case2_shifts_forward():
    base = synthesize_loads("static-1", duration=10.0).mean_frame().upper
    fwd = synthesize_loads("static-2", duration=10.0).mean_frame().upper
    for region in (1, 2, 5, 6):
        assert fwd[region - 1] > base[region - 1]
    back = synthesize_loads("static-3", duration=10.0).mean_frame().upper
    assert heel_share(back) > heel_share(base)


def test_case_profiles_sum_to_one():
    for case in ("static-1", "static-2", "static-3"):
        frac, _ = case_profile(case)
        assert frac.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("case", CASES)
def test_synthesis_is_deterministic_and_consistent(case):
    a = synthesize_loads(case, duration=2.0, seed=5)
    b = synthesize_loads(case, duration=2.0, seed=5)
    assert np.array_equal(a.upper, b.upper) and np.array_equal(a.lower, b.lower)
    assert np.allclose(a.upper.sum(axis=1), a.lower.sum(axis=1))
    layout = FootLayout()
    for k in (0, len(a) // 2):
        centroid = a.upper[k] @ layout.cell_positions() / a.upper[k].sum()
        assert np.allclose(center_of_mass(a.lower[k]), centroid)


def test_inversion_loads_right_foot():
    stream = synthesize_loads("dynamic-inver", duration=4.0)
    mid = stream.upper[len(stream) // 2]
    assert mid[4:].sum() / mid.sum() == pytest.approx(0.7, abs=0.05)
    start = stream.upper[0]
    assert start[4:].sum() / start.sum() == pytest.approx(0.5, abs=0.05)


def test_stream_csv_roundtrip(tmp_path):
    stream = synthesize_loads("static-2", duration=0.5)
    path = tmp_path / "frames.csv"
    stream.to_csv(path)
    back = LoadCellStream.from_csv(path)
    assert np.array_equal(back.upper, stream.upper)
    assert np.array_equal(back.t, stream.t)
    assert path.read_text().splitlines()[0].startswith("t[s],u1[N]")


def _step_signal(rate, stimuli, latencies, duration, rng=None, noise=0.0):
    t = np.arange(int(duration * rate)) / rate
    x = np.full((len(t), 3), 100.0)
    for stim, lat in zip(stimuli, latencies):
        x[t >= stim + lat - 1e-9, 1] += 20.0
    if rng is not None:
        x += rng.normal(0, noise, x.shape)
    return t, x


def test_reaction_latency_recovered(rng):
    t, x = _step_signal(100.0, [2.0], [0.35], 5.0, rng, noise=0.05)
    (event,) = detect_reaction(t, x, [2.0])
    assert abs(event.latency - 0.35) <= 0.01
    assert event.channel == 1


def test_reaction_two_stimuli():
    t, x = _step_signal(100.0, [2.0, 7.0], [0.3, 0.45], 10.0)
    first, second = detect_reaction(t, x, [2.0, 7.0])
    assert first.latency == pytest.approx(0.3, abs=0.01)
    assert second.latency == pytest.approx(0.45, abs=0.01)
    assert second.latency / first.latency == pytest.approx(1.5, abs=0.06)


def test_flat_signal_has_no_response():
    t = np.arange(500) / 100.0
    (event,) = detect_reaction(t, np.ones((500, 2)), [2.0])
    assert not event.responded
    assert np.isnan(events_table([event])[0, 2])


@given(st.floats(-1e3, 1e3))
def test_reaction_offset_invariant(offset):
    t, x = _step_signal(100.0, [2.0], [0.35], 4.0)
    assert detect_reaction(t, x + offset, [2.0]) == detect_reaction(t, x, [2.0])


def test_reaction_needs_baseline():
    t = np.arange(100) / 100.0
    with pytest.raises(ValueError):
        detect_reaction(t, np.ones(100), [0.0])
