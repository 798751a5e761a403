import logging
import math

import pytest

from qwork_pipeline.utils.errors import PipelineStageError, TruncationError
from qwork_pipeline.utils.general import log_timing, stage
from qwork_pipeline.utils.units import UnitSystem


def test_one_microsecond_at_300_khz():
    units = UnitSystem(300.0)
    assert units.time_from_us(1.0) == pytest.approx(1.885, abs=1e-3)
    assert units.time_to_us(units.time_from_us(20.0)) == pytest.approx(20.0)
    assert units.freq_from_khz(150.0) == 0.5
    assert units.freq_to_khz(0.222775) == pytest.approx(66.8325)


def test_beta_from_mean_phonon_number():
    units = UnitSystem(300.0)
    assert units.beta_from_mean_phonon(1.0) == pytest.approx(math.log(2.0))
    n_bar = 2.0
    beta = units.beta_from_mean_phonon(n_bar)
    assert 1.0 / math.expm1(beta) == pytest.approx(n_bar)
    with pytest.raises(ValueError):
        units.beta_from_mean_phonon(0.0)
    with pytest.raises(ValueError):
        UnitSystem(-1.0)


def test_stage_tags_errors():
    with pytest.raises(PipelineStageError) as info:
        with stage("propagate"):
            raise TruncationError("edge", population=1e-3)
    assert info.value.stage == "propagate"
    assert isinstance(info.value.__cause__, TruncationError)
    with pytest.raises(PipelineStageError) as outer:
        with stage("outer"):
            with stage("inner"):
                raise ValueError("bad")
    assert outer.value.stage == "inner"


def test_log_timing(caplog):
    @log_timing
    def square(x):
        return x * x

    with caplog.at_level(logging.INFO):
        assert square(3) == 9
    assert "timing : square" in caplog.text


def test_log_timing_passes_exceptions_through(caplog):
    @log_timing
    def fail():
        raise ValueError("bad")

    with caplog.at_level(logging.INFO), pytest.raises(ValueError):
        fail()
    assert "timing : fail" not in caplog.text
