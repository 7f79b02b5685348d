import typing

import pytest

from gridcast import lstm
from gridcast.exception import ConfigException
from gridcast.gradcheck import TOLERANCE, GradCheckCase, check, random_cases
from gridcast.lstm import CellGradients
from gridcast.types import Architecture, CellVariant


@pytest.fixture
def corrupted_backward(monkeypatch: pytest.MonkeyPatch) -> None:
    original = lstm.cell_backward

    def corrupted(*args: typing.Any, **kwargs: typing.Any) -> CellGradients:
        back = original(*args, **kwargs)
        back.params["W_ix"] = back.params["W_ix"] * 1.5
        return back

    monkeypatch.setattr("gridcast.lstm.cell_backward", corrupted)


@pytest.mark.parametrize("variant", list(CellVariant))
@pytest.mark.parametrize("architecture", list(Architecture))
def test_default_case_passes(variant: CellVariant, architecture: Architecture) -> None:
    report = check(GradCheckCase(variant=variant, architecture=architecture))
    assert report.passed
    assert report.max_error < TOLERANCE
    assert report.lines()[-1].startswith("PASS")


def test_report_lists_every_tensor() -> None:
    report = check(GradCheckCase(layers=2, units=3, steps=4))
    assert 2 * 12 + 2 == len(report.errors)
    assert "layer1.W_um" in report.errors
    assert len(report.errors) + 1 == len(report.lines())


def test_oversized_case_is_rejected() -> None:
    with pytest.raises(ConfigException) as e:
        check(GradCheckCase(units=17, steps=11))
    assert 2 == len(e.value.errors)


@pytest.mark.usefixtures("corrupted_backward")
def test_corrupted_backward_is_caught() -> None:
    report = check(GradCheckCase())
    assert not report.passed
    assert report.errors["layer0.W_ix"] > TOLERANCE
    assert report.errors["W_y"] < TOLERANCE
    assert report.lines()[-1].startswith("FAIL")


@pytest.mark.usefixtures("corrupted_backward")
def test_corrupted_backward_is_caught_through_the_handoff() -> None:
    report = check(GradCheckCase(architecture=Architecture.S2S))
    assert not report.passed
    assert report.errors["encoder.layer0.W_ix"] > TOLERANCE


def test_random_cases() -> None:
    cases = list(random_cases(12, seed=3))
    assert cases == list(random_cases(12, seed=3))
    assert 12 == len(cases)
    assert all(not case.problems() for case in cases)
    assert {c.layers for c in cases} <= {1, 2, 3}
    assert {c.units for c in cases} <= {2, 4, 8}
    assert {c.steps for c in cases} <= {1, 5, 10}
    assert [CellVariant.STANDARD, CellVariant.PAPER_VERBATIM] * 6 == [
        c.variant for c in cases
    ]


def test_small_random_cases_pass() -> None:
    for case in random_cases(3, seed=1):
        assert check(case).passed, case
