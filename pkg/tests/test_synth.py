import pytest

from dlmsgd.dlms import DateTime, encode_reading
from dlmsgd.synth import (
    READINGS_PER_DAY,
    HouseholdProfile,
    generate_fleet,
    generate_stream,
    household_seed,
    random_profile,
)


def test_deterministic():
    p = HouseholdProfile(seed=5)
    assert generate_stream(p, count=200) == generate_stream(p, count=200)
    assert generate_stream(p, count=50) != generate_stream(HouseholdProfile(seed=6), count=50)
    assert household_seed(2020, 0) == household_seed(2020, 0) != household_seed(2020, 1)


def test_stream_shape():
    rs = generate_stream(HouseholdProfile(seed=1), DateTime(2020, 3, 1), 2 * READINGS_PER_DAY)
    assert len(rs) == 192
    assert all(b.log_id == a.log_id + 1 for a, b in zip(rs, rs[1:]))
    assert all(b.timestamp == a.timestamp.shifted(15) for a, b in zip(rs, rs[1:]))
    assert rs[96].timestamp == DateTime(2020, 3, 2)
    for name in ("a14", "r12", "r34"):
        vals = [getattr(r, name) for r in rs]
        assert vals == sorted(vals)
    assert all(r.a23 == 0 for r in rs)
    assert all(len(encode_reading(r)) == 49 for r in rs)


def test_generation_only_in_daylight():
    rs = generate_stream(HouseholdProfile(seed=2, has_generation=True), count=READINGS_PER_DAY)
    night = [b.a23 - a.a23 for a, b in zip(rs, rs[1:]) if b.timestamp.hour < 6]
    day = [b.a23 - a.a23 for a, b in zip(rs, rs[1:]) if 10 <= b.timestamp.hour < 14]
    assert not any(night) and all(d > 0 for d in day)


def test_fleet():
    fleet = generate_fleet(3, days=2, seed=9)
    assert [len(s) for s in fleet] == [192, 192, 192]
    assert fleet == generate_fleet(3, days=2, seed=9)
    assert len(generate_fleet(1, months=0.5)[0]) == 15 * READINGS_PER_DAY


def test_profile_validation():
    with pytest.raises(ValueError):
        HouseholdProfile(seed=0, noise_w=-1)
    with pytest.raises(ValueError):
        HouseholdProfile(seed=0, reactive_fraction=1.5)
    with pytest.raises(ValueError):
        generate_stream(HouseholdProfile(seed=0), count=0)
    assert random_profile(1, generation_share=1.0).has_generation
    assert not random_profile(1, generation_share=0.0).has_generation
