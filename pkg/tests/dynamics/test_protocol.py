import dataclasses

import numpy as np
import pytest

from qwork_pipeline.dynamics.protocol import (
    Constant,
    QuenchSchedule,
    TanhSwitch,
    eval_schedule,
    format_schedule,
    parse_schedule,
    repeated_tanh,
    reverse_schedule,
    scale_schedule,
    single_tanh,
)
from qwork_pipeline.utils.errors import (
    ScheduleDomainError,
    ScheduleSemanticError,
    ScheduleSyntaxError,
)


@dataclasses.dataclass
class SyntaxCase:
    text: str
    line: int
    column: int


syntax_cases = [
    SyntaxCase(text="tanh 0 1 dur=2", line=1, column=1),
    SyntaxCase(text="const 0 dur=1;\n  wobble 1", line=2, column=3),
    SyntaxCase(text="const 0 dur=1 $", line=1, column=15),
    SyntaxCase(text="const 0 dur=1 dur=2", line=1, column=15),
    SyntaxCase(text="tanh 0 1 T=1 speed=2", line=1, column=14),
    SyntaxCase(text="const dur=1", line=1, column=7),
    SyntaxCase(text="   ", line=1, column=4),
]


@dataclasses.dataclass
class SemanticCase:
    text: str
    segment: int


semantic_cases = [
    SemanticCase(text="const 0 dur=1; const 1 dur=1", segment=2),
    SemanticCase(text="const 0 dur=-1", segment=1),
    SemanticCase(text="const 0 dur=1; tanh 0 1 T=0", segment=2),
    SemanticCase(text="tanh 0 1 T=1; tanh 1 0 T=1; const 0.5 dur=2", segment=3),
]


def test_single_tanh_endpoints_and_duration():
    s = single_tanh(0.0, 0.165, 1.885)
    assert s.total_quench_time == pytest.approx(8 * 1.885)
    assert eval_schedule(s, 0.0) == 0.0
    assert eval_schedule(s, s.total_quench_time) == pytest.approx(0.165, abs=1e-15)
    assert eval_schedule(s, 0.5 * s.total_quench_time) == pytest.approx(0.0825)
    values = eval_schedule(s, np.linspace(0, s.total_quench_time, 101))
    assert np.all(np.diff(values) > 0)


def test_eval_schedule_vectorised_shape():
    s = parse_schedule("const 0.2 dur=1; tanh 0.2 0.4 T=0.5")
    t = np.linspace(0, s.total_quench_time, 12).reshape(3, 4)
    assert eval_schedule(s, t).shape == (3, 4)
    assert isinstance(eval_schedule(s, 0.5), float)


@pytest.mark.parametrize("t", [-1e-9, 5.0 + 1e-9, float("nan")])
def test_eval_schedule_domain(t):
    s = parse_schedule("const 1 dur=5")
    with pytest.raises(ScheduleDomainError):
        eval_schedule(s, t)


def test_reverse_schedule():
    s = parse_schedule("const 0 dur=1; tanh 0 0.5 T=0.3 dur=2; const 0.5 dur=0.5")
    r = reverse_schedule(s)
    t = np.linspace(0, s.total_quench_time, 57)
    np.testing.assert_allclose(
        eval_schedule(r, t), eval_schedule(s, s.total_quench_time - t), atol=1e-14
    )
    assert r.lambda_i == s.lambda_f
    assert r.lambda_f == s.lambda_i


@pytest.mark.parametrize(
    "text",
    [
        "const 0 dur=1; tanh 0 0.5 T=0.3 dur=2; const 0.5 dur=0.5",
        "tanh 0 1 T=1.885 dur=15.08",
        "tanh 0 1 T=0.05 dur=0.4; tanh 1 0 T=10 dur=80; tanh 0 1 T=0.05 dur=0.4",
    ],
)
def test_reverse_schedule_twice_is_identity(text):
    s = parse_schedule(text)
    twice = reverse_schedule(reverse_schedule(s))
    t = np.linspace(0, s.total_quench_time, 1000)
    np.testing.assert_allclose(eval_schedule(twice, t), eval_schedule(s, t), atol=1e-12)


def test_parse_schedule_grammar():
    s = parse_schedule("const 0 dur=1;\n tanh 0 .5 T=2e-1 dur=2 ;; const 5e-1 dur=1")
    assert s.segments == (
        Constant(0.0, 1.0),
        TanhSwitch(0.0, 0.5, 0.2, 2.0),
        Constant(0.5, 1.0),
    )
    np.testing.assert_allclose(s.boundaries, [0.0, 1.0, 3.0, 4.0])


def test_format_schedule_reads_back():
    s = repeated_tanh(0.0, 0.165, 37.7, 0.0565, cycles=2)
    text = format_schedule(s)
    assert parse_schedule(text).segments == s.segments
    assert str(s) == text


@pytest.mark.parametrize("case", syntax_cases)
def test_parse_schedule_syntax_errors(case: SyntaxCase):
    with pytest.raises(ScheduleSyntaxError) as e:
        parse_schedule(case.text)
    assert (e.value.line, e.value.column) == (case.line, case.column)


@pytest.mark.parametrize("case", semantic_cases)
def test_parse_schedule_semantic_errors(case: SemanticCase):
    with pytest.raises(ScheduleSemanticError) as e:
        parse_schedule(case.text)
    assert e.value.segment == case.segment


def test_empty_schedule_rejected():
    with pytest.raises(ScheduleSemanticError):
        QuenchSchedule(())


@pytest.mark.parametrize("cycles", [0, 1, 2, 3])
def test_repeated_tanh_structure(cycles):
    s = repeated_tanh(0.0, 1.0, t_slow=20.0, t_fast=0.03, cycles=cycles)
    assert len(s.segments) == 2 * cycles + 1
    assert s.lambda_i == 0.0
    assert s.lambda_f == pytest.approx(1.0, abs=1e-15)
    assert s.shortest_switching_time == 0.03
    expected = 8 * (20.0 * cycles + 0.03 * (cycles + 1))
    assert s.total_quench_time == pytest.approx(expected)


def test_scale_schedule():
    s = single_tanh(0.0, 1.0, 1.0)
    scaled = scale_schedule(s, value_scale=0.165, time_scale=1.885)
    assert scaled.total_quench_time == pytest.approx(8 * 1.885)
    t = np.linspace(0, 8.0, 33)
    np.testing.assert_allclose(
        eval_schedule(scaled, 1.885 * t), 0.165 * eval_schedule(s, t), atol=1e-15
    )
    with pytest.raises(ValueError):
        scale_schedule(s, time_scale=0.0)
