import pytest

from ubama.checks import SUITES, run_suites


def test_every_suite_passes_with_enough_cases():
    results = run_suites()
    assert {r.name for r in results} == set(SUITES)
    for r in results:
        assert r.ok, (r.name, r.failures[:3])
        assert r.passed >= 200


def test_subset_and_unknown_names():
    assert [r.name for r in run_suites(["shrink"], cases=5)] == ["shrink"]
    with pytest.raises((KeyError, ValueError)):
        run_suites(["nope"])
