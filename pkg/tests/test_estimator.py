import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from glmbpitch.estimator import (
    SILENCE_FLOOR,
    Correlogram,
    EncodingTemplate,
    FrameParams,
    SubbandPitchEstimator,
    correlogram,
    encode,
    estimate_file,
    extract_pitches,
    find_local_peaks,
    frame_count,
    half_wave_rectify,
    is_harmonic_related,
    nac,
    nac_frames,
)
from glmbpitch.evaluation import synth_harmonic

FS = 16000
FRAME = FrameParams.from_pitch_range(FS, 60.0, 500.0, 10.0)
signals = hnp.arrays(np.float64, st.integers(1, 300), elements=st.floats(-10, 10))


def nac_loops(x, d_max):
    """Direct double-loop NAC: shortened numerator, full-frame energy."""
    x = np.asarray(x, float) - np.mean(x)
    n = x.size
    energy = sum(v * v for v in x)
    if energy <= SILENCE_FLOOR * n:
        return np.zeros(d_max + 1)
    return np.array([sum(x[k] * x[k + d] for k in range(n - d)) / energy for d in range(d_max + 1)])


# -- frame parameters ---------------------------------------------------------

def test_frame_params_defaults():
    assert (FRAME.n_corr, FRAME.n_step, FRAME.d_min, FRAME.d_max) == (534, 160, 32, 267)
    assert FRAME.threshold == 0.125
    assert FRAME.n_corr / FS * 1000 == pytest.approx(33.3, abs=0.1)


@pytest.mark.parametrize("kw", [dict(threshold=0.0), dict(threshold=1.0), dict(mode="both")])
def test_frame_params_validation(kw):
    base = dict(n_corr=534, n_step=160, d_min=32, d_max=267)
    with pytest.raises(ValueError):
        FrameParams(**{**base, **kw})


def test_template_taps():
    taps = EncodingTemplate().taps
    assert taps.size == 11 and taps[5] == 1.0
    np.testing.assert_allclose(taps, taps[::-1])
    np.testing.assert_allclose(taps, np.exp(-np.abs(np.arange(-5, 6))))


# -- rectification and peaks --------------------------------------------------

def test_rectify_examples():
    np.testing.assert_array_equal(half_wave_rectify([1, -1, 0.5]), [1, 0, 0.5])
    np.testing.assert_array_equal(half_wave_rectify([-1, -2]), [0, 0])


@given(signals)
def test_rectify_idempotent_and_nonnegative(x):
    r = half_wave_rectify(x)
    assert np.all(r >= 0)
    np.testing.assert_array_equal(half_wave_rectify(r), r)


def test_peak_examples():
    assert find_local_peaks([0, 1, 2, 1, 0, 3, 0]) == [(2, 2.0), (5, 3.0)]
    assert find_local_peaks([0, 1, 2, 3]) == [(3, 3.0)]
    assert find_local_peaks([0, 2, 2, 1]) == [(1, 2.0)]
    assert find_local_peaks(np.zeros(5)) == []
    with pytest.raises(ValueError):
        find_local_peaks([1, -1])


def peaks_loop(x):
    out, i = [], 0
    while i < len(x):
        if x[i] > 0:
            j = i
            while j < len(x) and x[j] > 0:
                j += 1
            seg = list(x[i:j])
            k = seg.index(max(seg))
            out.append((i + k, float(x[i + k])))
            i = j
        else:
            i += 1
    return out


@given(signals)
def test_peaks_match_loop_oracle(x):
    r = half_wave_rectify(x)
    assert find_local_peaks(r) == peaks_loop(r)


def test_peak_spacing_of_150hz_sine():
    x = half_wave_rectify(np.sin(2 * np.pi * 150 * np.arange(4000) / FS))
    idx = np.array([i for i, _ in find_local_peaks(x)])
    assert np.all(np.abs(np.diff(idx) - FS / 150) <= 1)


# -- encoding -------------------------------------------------------------------

def test_encode_single_impulse():
    x = np.zeros(40)
    x[20] = 2.5
    y = encode(x)
    np.testing.assert_allclose(y[15:26], 2.5 * EncodingTemplate().taps)
    assert np.all(y[:15] == 0) and np.all(y[26:] == 0)
    assert np.all(encode(np.zeros(10)) == 0)
    assert encode(np.zeros(0)).size == 0


def test_encode_two_peaks_do_not_overlap():
    x = np.zeros(60)
    x[10], x[30] = 1.0, 3.0
    y = encode(x)
    taps = EncodingTemplate().taps
    np.testing.assert_allclose(y[5:16], taps)
    np.testing.assert_allclose(y[25:36], 3 * taps)


@given(signals)
def test_encode_length_preserved(x):
    assert encode(half_wave_rectify(x)).size == x.size


# -- NAC -------------------------------------------------------------------------

@given(hnp.arrays(np.float64, 60, elements=st.floats(-5, 5)))
def test_nac_matches_loop_oracle(x):
    frame = FrameParams(n_corr=60, n_step=10, d_min=5, d_max=40)
    np.testing.assert_allclose(nac(x, frame, 0), nac_loops(x, 40), atol=1e-9)


@given(hnp.arrays(np.float64, 60, elements=st.floats(-5, 5)))
def test_nac_bounded_and_normalized(x):
    frame = FrameParams(n_corr=60, n_step=10, d_min=5, d_max=40)
    a = nac(x, frame, 0)
    assert np.all(np.abs(a) <= 1 + 1e-12)
    if np.ptp(x) > 1e-6:
        assert a[0] == pytest.approx(1.0, abs=1e-12)


def test_nac_zero_frame_is_zero():
    assert np.all(nac(np.zeros(534), FRAME, 0) == 0)
    assert np.all(nac(np.full(534, 3.0), FRAME, 0) == 0)  # constant: zero after mean removal


def test_nac_frame_must_fit():
    with pytest.raises(ValueError):
        nac(np.zeros(600), FRAME, 1)


def test_nac_frames_consistent_with_single_frame():
    x = np.random.default_rng(1).standard_normal(2000)
    all_frames = nac_frames(x, FRAME)
    assert all_frames.shape == (frame_count(2000, FRAME), 268)
    for j in range(all_frames.shape[0]):
        np.testing.assert_allclose(all_frames[j], nac(x, FRAME, j), atol=1e-12)


@pytest.mark.parametrize("d0", [40, 80, 106, 150, 250])
def test_periodic_train_peaks_at_period(d0):
    x = np.zeros(534 + 300)
    x[7::d0] = 1.0
    y = encode(x)
    a = nac(y, FRAME, 0)
    window = a[FRAME.d_min:FRAME.d_max + 1]
    assert FRAME.d_min + int(np.argmax(window)) == d0
    if 2 * d0 <= FRAME.d_max:
        assert a[2 * d0] < a[d0]


# -- correlogram ------------------------------------------------------------------

def test_correlogram_mean(rng):
    v = rng.uniform(-1, 1, (18, 268))
    np.testing.assert_allclose(correlogram(v).values, v.sum(axis=0) / 18, atol=1e-12)
    same = np.tile(v[0], (5, 1))
    np.testing.assert_allclose(correlogram(same).values, v[0])
    with_zero = np.vstack([v[:17], np.zeros(268)])
    np.testing.assert_allclose(correlogram(with_zero).values, v[:17].mean(axis=0) * 17 / 18)


# -- pitch extraction -------------------------------------------------------------

def _corr(peaks, n=300):
    c = np.zeros(n)
    for d, s in peaks.items():
        c[d] = s
    return c


def test_extract_no_peak_above_threshold():
    out = extract_pitches(_corr({100: 0.12, 150: 0.1}), FRAME, FS)
    assert out.estimates == () and len(out) == 0


def test_extract_single_peak():
    out = extract_pitches(_corr({100: 0.5}), FRAME, FS)
    assert out.estimates == (160.0,) and out.peak_strengths == (0.5,)


def test_extract_threshold_inclusive():
    assert extract_pitches(_corr({100: 0.125}), FRAME, FS).estimates == (160.0,)


def test_subharmonic_pruned_in_multi_mode():
    multi = FrameParams(534, 160, 32, 267, mode="multi")
    out = extract_pitches(_corr({100: 0.8, 200: 0.4}), multi, FS)
    assert out.estimates == (160.0,)
    out = extract_pitches(_corr({100: 0.8, 170: 0.4}), multi, FS)
    assert out.estimates == (160.0, FS / 170)


def test_plateau_resolves_to_smallest_delay():
    c = _corr({100: 0.5, 101: 0.5})
    assert extract_pitches(c, FRAME, FS).estimates == (160.0,)


def test_correlogram_object_input():
    c = Correlogram(frame_index=3, values=_corr({100: 0.5})[20:], d_min=20)
    out = extract_pitches(c, FRAME, FS)
    assert out.frame_index == 3 and out.estimates == (160.0,)
    assert out.time == pytest.approx(3 * 160 / FS)


def test_harmonic_relation():
    assert is_harmonic_related(100, 200)
    assert is_harmonic_related(300, 100)
    assert is_harmonic_related(100, 209)
    assert not is_harmonic_related(100, 150)
    assert not is_harmonic_related(100, 104)


@pytest.mark.parametrize("mode", ["single", "multi"])
@given(c=hnp.arrays(np.float64, 300, elements=st.floats(-1, 1)), t_high=st.floats(0.05, 0.9),
       gap=st.floats(0.0, 0.5))
def test_threshold_semantics(mode, c, t_high, gap):
    t_low = max(0.01, t_high - gap)
    hi = extract_pitches(c, FrameParams(534, 160, 32, 267, threshold=t_high, mode=mode), FS)
    lo = extract_pitches(c, FrameParams(534, 160, 32, 267, threshold=t_low, mode=mode), FS)
    assert all(s >= t_high for s in hi.peak_strengths)
    assert all(FS / 267 <= f <= FS / 32 for f in hi.estimates)
    assert set(hi.estimates) <= set(lo.estimates)


# -- end to end ---------------------------------------------------------------------

def test_estimate_file_short_and_silent(bank):
    _, filters = bank
    assert estimate_file(np.zeros(320), filters, FRAME) == []
    frames = estimate_file(np.zeros(4000), filters, FRAME)
    assert len(frames) == frame_count(4000, FRAME) and all(len(m) == 0 for m in frames)
    with pytest.raises(ValueError):
        estimate_file(np.zeros(4000), filters, FRAME, fs=8000)


def test_harmonic_signal_every_frame_within_five_percent(bank):
    _, filters = bank
    x = synth_harmonic(np.full(80, 150.0), 8)
    frames = estimate_file(x, filters, FRAME)
    assert frames
    assert all(len(m) == 1 and abs(m.estimates[0] - 150) / 150 <= 0.05 for m in frames)
    assert frames[2].time == pytest.approx(2 * 0.01)


def test_two_speaker_mixture_multi_mode(bank):
    _, filters = bank
    n = 100
    # equal power inside the analysed band: 8 harmonics of 120 Hz vs 5 of 220 Hz lie below 1270 Hz
    a = 0.79 * synth_harmonic(np.full(n, 120.0), 8)
    b = synth_harmonic(np.full(n, 220.0), 5)
    frames = estimate_file(a + b, filters, FrameParams(534, 160, 32, 267, mode="multi"))
    both = [
        any(abs(f - 120) / 120 <= 0.05 for f in m.estimates)
        and any(abs(f - 220) / 220 <= 0.05 for f in m.estimates)
        for m in frames
    ]
    assert np.mean(both) >= 0.8


def test_sklearn_wrapper():
    est = SubbandPitchEstimator(threshold=0.2).fit()
    assert est.get_params()["threshold"] == 0.2
    x = synth_harmonic(np.full(20, 200.0), 6)
    acs = est.transform(x)
    meas = est.predict(x)
    assert acs.shape == (len(meas), 268)
    assert est.transform(np.zeros(10)).shape == (0, 268)
    np.testing.assert_allclose(est.frame_times(3), [0, 0.01, 0.02])


def test_wrapper_requires_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        SubbandPitchEstimator().predict(np.zeros(1000))
