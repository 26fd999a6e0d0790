import math
import warnings

import numpy as np
import pytest
from scipy.special import ndtr

from quantest.errors import ValidationError
from quantest.quantizer import make_resistor_ladder, make_uniform, quantize
from quantest.signal import (
    NoiseModel,
    Record,
    SineParams,
    generate_record,
    make_rng,
    near_rational,
    read_record,
    read_record_codes,
    sidecar_path,
    sine_value,
    write_record,
)


def test_sine_value_examples():
    assert sine_value(SineParams(1.0, 0.25, 0.0), 1) == pytest.approx(1.0, abs=1e-15)
    assert sine_value(SineParams(0.5, 0.3712, 0.0), 0) == 0.0
    v = sine_value(SineParams(1.0, 0.723457, 0.4876), 3)
    assert v == pytest.approx(math.sin(2 * math.pi * 0.723457 * 3 + 0.4876), abs=1e-12)
    assert -1 <= v <= 1


def test_sine_value_large_index_uses_fractional_part():
    # 2*pi*lam*n loses digits for large n; <lam n> keeps them
    p = SineParams(1.0, 0.1234, 0.0)
    n = 10**9 + 7
    frac = (1234 * n % 10000) / 10000
    assert sine_value(p, n) == pytest.approx(math.sin(2 * math.pi * frac), abs=1e-6)


def test_noiseless_zero_amplitude():
    m = make_resistor_ladder(6, seed=2)
    rec = generate_record(SineParams(0.0, 0.1234), NoiseModel(0.0), m, 200, seed=0)
    assert np.all(rec.codes == quantize(m, 0.0))


def test_same_seed_same_record():
    m = make_uniform(8)
    p = SineParams(0.7, 0.1234, 0.2)
    a = generate_record(p, NoiseModel(0.01), m, 5000, seed=42)
    b = generate_record(p, NoiseModel(0.01), m, 5000, seed=42)
    c = generate_record(p, NoiseModel(0.01), m, 5000, seed=43)
    np.testing.assert_array_equal(a.codes, b.codes)
    assert not np.array_equal(a.codes, c.codes)


def test_pcg64_stream_is_the_noise_source():
    m = make_uniform(16, 1e-4)
    rec = generate_record(SineParams(0.0, 0.1234), NoiseModel(0.5), m, 1000, seed=7)
    eta = 0.5 * np.random.Generator(np.random.PCG64(7)).standard_normal(1000)
    np.testing.assert_array_equal(rec.codes, quantize(m, eta))


def test_histogram_matches_cell_probabilities():
    m = make_uniform(2)
    delta = m.step
    p = SineParams(0.9, 0.723457, 0.4876)
    sigma = 0.12 * delta
    N = 106777
    rec = generate_record(p, NoiseModel(sigma), m, N, seed=5)
    x = 0.9 * np.sin(2 * np.pi * np.mod(0.723457 * np.arange(N), 1.0) + 0.4876)
    edges = np.concatenate(([-np.inf], m.transitions, [np.inf]))
    cells = ndtr((edges[None, 1:] - x[:, None]) / sigma) - ndtr((edges[None, :-1] - x[:, None]) / sigma)
    expected = cells.sum(axis=0)
    # sum of independent Bernoullis: variance sum p(1-p)
    se = np.sqrt((cells * (1 - cells)).sum(axis=0))
    observed = np.bincount(rec.codes, minlength=4)
    assert np.all(np.abs(observed - expected) <= 3 * se + 1e-9)


def test_noise_moments_large_n():
    m = make_uniform(16, 1e-4)
    sigma = 0.5
    N = 10**6
    rec = generate_record(SineParams(0.0, 0.1234), NoiseModel(sigma), m, N, seed=123)
    eta = m.output_levels[rec.codes] / sigma  # within 2e-4 of the draws
    mean = eta.mean()
    c = eta - mean
    var = np.mean(c**2)
    skew = np.mean(c**3) / var**1.5
    kurt = np.mean(c**4) / var**2
    assert abs(mean) < 5 / math.sqrt(N)
    assert abs(var - 1) < 5 * math.sqrt(2 / N) + 1e-3
    assert abs(skew) < 5 * math.sqrt(6 / N)
    assert abs(kurt - 3) < 5 * math.sqrt(24 / N)


def test_noiseless_codes_stay_inside():
    m = make_uniform(4)
    rec = generate_record(SineParams(0.5, 0.1234), NoiseModel(0.0), m, 3000, seed=0)
    assert rec.codes.min() > 0 and rec.codes.max() < 15


def test_rational_frequency_warns():
    m = make_uniform(4)
    with pytest.warns(RuntimeWarning, match="1/4"):
        generate_record(SineParams(0.5, 0.25), NoiseModel(0.01), m, 100, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        generate_record(SineParams(0.5, 0.1234567), NoiseModel(0.01), m, 100, seed=0)


def test_near_rational():
    assert near_rational(0.25).denominator == 4
    assert near_rational(1 / 3 + 5e-7).denominator == 3
    assert near_rational(math.sqrt(2) - 1) is None


def test_make_rng_is_pcg64():
    assert isinstance(make_rng(3).bit_generator, np.random.PCG64)


def test_record_validation():
    m = make_uniform(2)
    with pytest.raises(ValidationError):
        Record(np.array([0, 4]), m)
    with pytest.raises(ValidationError):
        Record(np.array([0.5, 1.0]), m)
    with pytest.raises(ValidationError):
        Record(np.array([], dtype=int), m)


def test_noise_model_validation():
    with pytest.raises(ValidationError):
        NoiseModel(-1.0)
    with pytest.raises(ValidationError):
        NoiseModel(0.1, kind="uniform")


def test_record_file_round_trip(tmp_path):
    m = make_resistor_ladder(8, seed=3)
    rec = generate_record(SineParams(0.8, 0.1234, 0.1), NoiseModel(0.002), m, 500, seed=9)
    path = tmp_path / "rec.csv"
    side = write_record(path, rec, include_transitions=True)
    assert side == sidecar_path(path)
    back = read_record(path)
    np.testing.assert_array_equal(back.codes, rec.codes)
    assert back.quantizer == m
    assert back.noise.sigma == 0.002
    assert back.params == rec.params
    first = path.read_bytes()
    write_record(path, rec, include_transitions=True)
    assert path.read_bytes() == first


def test_record_file_errors(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("n,code\n0,1\n1,x\n")
    with pytest.raises(ValidationError, match=":3"):
        read_record_codes(p)
    p.write_text("n,code\n0,1\n2,1\n")
    with pytest.raises(ValidationError, match=":3"):
        read_record_codes(p)
    p.write_text("index,value\n")
    with pytest.raises(ValidationError, match=":1"):
        read_record_codes(p)
