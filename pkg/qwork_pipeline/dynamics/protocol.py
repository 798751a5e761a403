"""Quench schedules lambda(t): construction, evaluation, reversal and a text format.

Schedule grammar, one segment per ';'-separated clause::

    const <value> dur=<time>
    tanh <start> <end> T=<time> [dur=<time>]

Whitespace (including newlines) is insignificant. A tanh segment without an
explicit ``dur`` lasts 8T.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np

from qwork_pipeline.utils.errors import (
    ScheduleDomainError,
    ScheduleSemanticError,
    ScheduleSyntaxError,
)

logger = logging.getLogger(__name__)

TANH_DURATION_FACTOR = 8.0
CONTINUITY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Constant:
    value: float
    duration: float

    @property
    def start_value(self) -> float:
        return self.value

    @property
    def end_value(self) -> float:
        return self.value

    def evaluate(self, tau: np.ndarray) -> np.ndarray:
        return np.full(np.shape(tau), float(self.value))

    def reversed(self) -> "Constant":
        return self

    def scaled(self, value_scale: float, time_scale: float) -> "Constant":
        return Constant(self.value * value_scale, self.duration * time_scale)

    def problems(self) -> list[str]:
        if not np.isfinite(self.value):
            return [f"value must be finite, got {self.value}"]
        if not self.duration > 0:
            return [f"duration must be positive, got {self.duration}"]
        return []


@dataclass(frozen=True)
class TanhSwitch:
    """Switch from `start` to `end` along (1 + tanh((t - d/2)/T))/2.

    The curve is rescaled affinely so that it takes the values `start` and `end`
    exactly at t = 0 and t = d.
    """

    start: float
    end: float
    T: float
    duration: float | None = None

    def __post_init__(self):
        if self.duration is None:
            object.__setattr__(self, "duration", TANH_DURATION_FACTOR * self.T)

    @property
    def start_value(self) -> float:
        return self.start

    @property
    def end_value(self) -> float:
        return self.end

    def _profile(self, tau):
        centered = np.asarray(tau, dtype=float) - 0.5 * self.duration
        return 0.5 * (1.0 + np.tanh(centered / self.T))

    def evaluate(self, tau: np.ndarray) -> np.ndarray:
        s0 = self._profile(0.0)
        s1 = self._profile(self.duration)
        fraction = (self._profile(tau) - s0) / (s1 - s0)
        return self.start * (1.0 - fraction) + self.end * fraction

    def reversed(self) -> "TanhSwitch":
        return TanhSwitch(self.end, self.start, self.T, self.duration)

    def scaled(self, value_scale: float, time_scale: float) -> "TanhSwitch":
        return TanhSwitch(
            self.start * value_scale,
            self.end * value_scale,
            self.T * time_scale,
            self.duration * time_scale,
        )

    def problems(self) -> list[str]:
        issues = []
        if not (np.isfinite(self.start) and np.isfinite(self.end)):
            issues.append("start and end values must be finite")
        if not self.T > 0:
            issues.append(f"switching time T must be positive, got {self.T}")
        if not self.duration > 0:
            issues.append(f"duration must be positive, got {self.duration}")
        return issues


Segment = Union[Constant, TanhSwitch]


@dataclass(frozen=True)
class QuenchSchedule:
    """Ordered segments making up lambda(t) on [0, t_Q]."""

    segments: tuple[Segment, ...]
    boundaries: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segments = tuple(self.segments)
        if not segments:
            raise ScheduleSemanticError("a schedule needs at least one segment", 1)
        object.__setattr__(self, "segments", segments)
        for i, seg in enumerate(segments, start=1):
            issues = seg.problems()
            if issues:
                raise ScheduleSemanticError("; ".join(issues), i)
        values = [v for seg in segments for v in (seg.start_value, seg.end_value)]
        tolerance = CONTINUITY_TOLERANCE * (max(values) - min(values))
        for i in range(1, len(segments)):
            jump = abs(segments[i].start_value - segments[i - 1].end_value)
            if jump > tolerance:
                raise ScheduleSemanticError(
                    f"discontinuity at junction: previous segment ends at "
                    f"{segments[i - 1].end_value!r}, this one starts at "
                    f"{segments[i].start_value!r}",
                    i + 1,
                )
        durations = np.array([seg.duration for seg in segments], dtype=float)
        boundaries = np.concatenate([[0.0], np.cumsum(durations)])
        boundaries.setflags(write=False)
        object.__setattr__(self, "boundaries", boundaries)

    @property
    def total_quench_time(self) -> float:
        return float(self.boundaries[-1])

    @property
    def lambda_i(self) -> float:
        return float(eval_schedule(self, 0.0))

    @property
    def lambda_f(self) -> float:
        return float(eval_schedule(self, self.total_quench_time))

    @property
    def shortest_switching_time(self) -> float:
        times = [seg.T for seg in self.segments if isinstance(seg, TanhSwitch)]
        return min(times) if times else float("inf")

    def __str__(self) -> str:
        return format_schedule(self)


def eval_schedule(s: QuenchSchedule, t):
    """
    Value of the schedule at time(s) t.

    Parameters
    ----------
    s : QuenchSchedule
    t : float or array_like
        Times in [0, t_Q].

    Returns
    -------
    float or np.ndarray
        Matches the shape of `t`.

    Raises
    ------
    ScheduleDomainError
        If any t lies outside [0, t_Q].
    """
    times = np.asarray(t, dtype=float)
    t_q = s.total_quench_time
    if np.any(times < 0) or np.any(times > t_q) or np.any(np.isnan(times)):
        raise ScheduleDomainError(
            f"schedule evaluated outside [0, {t_q!r}] : "
            f"min t = {np.min(times)!r}, max t = {np.max(times)!r}"
        )
    flat = np.atleast_1d(times)
    index = np.clip(
        np.searchsorted(s.boundaries, flat, side="right") - 1, 0, len(s.segments) - 1
    )
    out = np.empty_like(flat)
    for i, seg in enumerate(s.segments):
        mask = index == i
        if np.any(mask):
            out[mask] = seg.evaluate(flat[mask] - s.boundaries[i])
    if times.ndim == 0:
        return float(out[0])
    return out.reshape(times.shape)


def reverse_schedule(s: QuenchSchedule) -> QuenchSchedule:
    """Time-reversed schedule r with r(t) = s(t_Q - t)."""
    return QuenchSchedule(tuple(seg.reversed() for seg in reversed(s.segments)))


def scale_schedule(
    s: QuenchSchedule, value_scale: float = 1.0, time_scale: float = 1.0
) -> QuenchSchedule:
    """Multiply all values by `value_scale` and all times by `time_scale`."""
    if not time_scale > 0:
        raise ValueError(f"time_scale must be positive, got {time_scale}")
    return QuenchSchedule(
        tuple(seg.scaled(value_scale, time_scale) for seg in s.segments)
    )


def single_tanh(
    start: float, end: float, T: float, duration: float | None = None
) -> QuenchSchedule:
    return QuenchSchedule((TanhSwitch(start, end, T, duration),))


def repeated_tanh(
    low: float, high: float, t_slow: float, t_fast: float, cycles: int = 2
) -> QuenchSchedule:
    """
    Repeated slow/fast switching between `low` and `high`, ending at `high`.

    Each cycle is a slow up-switch followed by a fast down-switch; a final fast
    up-switch ends the quench. Every segment lasts 8 of its own switching times.
    """
    if cycles < 0:
        raise ValueError(f"cycles must be >= 0, got {cycles}")
    segments: list[Segment] = []
    for _ in range(cycles):
        segments.append(TanhSwitch(low, high, t_slow))
        segments.append(TanhSwitch(high, low, t_fast))
    segments.append(TanhSwitch(low, high, t_fast))
    return QuenchSchedule(tuple(segments))


def format_schedule(s: QuenchSchedule) -> str:
    """Text form of a schedule; `parse_schedule` reads it back exactly."""
    clauses = []
    for seg in s.segments:
        if isinstance(seg, Constant):
            clauses.append(f"const {seg.value!r} dur={seg.duration!r}")
        else:
            clauses.append(
                f"tanh {seg.start!r} {seg.end!r} T={seg.T!r} dur={seg.duration!r}"
            )
    return "; ".join(clauses)


_TOKEN_SPEC = [
    ("NUMBER", r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"),
    ("NAME", r"[A-Za-z_]\w*"),
    ("EQUALS", r"="),
    ("SEMI", r";"),
    ("NEWLINE", r"\n"),
    ("SKIP", r"[ \t\r]+"),
    ("MISMATCH", r"."),
]
_TOKEN_RE = re.compile(
    "|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_SPEC)
)

TokenKind = Literal["NUMBER", "NAME", "EQUALS", "SEMI", "END"]


@dataclass(frozen=True)
class _Token:
    kind: TokenKind
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, line_start = 1, 0
    for match in _TOKEN_RE.finditer(text):
        kind = match.lastgroup
        column = match.start() - line_start + 1
        if kind == "NEWLINE":
            line += 1
            line_start = match.end()
        elif kind == "SKIP":
            continue
        elif kind == "MISMATCH":
            raise ScheduleSyntaxError(
                f"unexpected character {match.group()!r}", line, column
            )
        else:
            tokens.append(_Token(kind, match.group(), line, column))
    tokens.append(_Token("END", "", line, len(text) - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def expect(self, kind: TokenKind, what: str) -> _Token:
        token = self.current
        if token.kind != kind:
            found = token.text or "end of input"
            raise ScheduleSyntaxError(
                f"expected {what}, found {found!r}", token.line, token.column
            )
        self.pos += 1
        return token

    def number(self, what: str) -> float:
        return float(self.expect("NUMBER", what).text)

    def options(self, allowed: set[str]) -> dict[str, float]:
        values: dict[str, float] = {}
        while self.current.kind == "NAME":
            key = self.current
            if key.text not in allowed:
                raise ScheduleSyntaxError(
                    f"unknown option {key.text!r}, expected one of {sorted(allowed)}",
                    key.line,
                    key.column,
                )
            if key.text in values:
                raise ScheduleSyntaxError(
                    f"duplicate option {key.text!r}", key.line, key.column
                )
            self.pos += 1
            self.expect("EQUALS", "'='")
            values[key.text] = self.number(f"a number for {key.text}")
        return values

    def segment(self) -> Segment:
        keyword = self.expect("NAME", "'const' or 'tanh'")
        if keyword.text == "const":
            value = self.number("a constant value")
            opts = self.options({"dur"})
            if "dur" not in opts:
                raise ScheduleSyntaxError(
                    "const segment requires dur=<time>", keyword.line, keyword.column
                )
            return Constant(value, opts["dur"])
        if keyword.text == "tanh":
            start = self.number("a start value")
            end = self.number("an end value")
            opts = self.options({"T", "dur"})
            if "T" not in opts:
                raise ScheduleSyntaxError(
                    "tanh segment requires T=<time>", keyword.line, keyword.column
                )
            return TanhSwitch(start, end, opts["T"], opts.get("dur"))
        raise ScheduleSyntaxError(
            f"unknown segment kind {keyword.text!r}", keyword.line, keyword.column
        )

    def schedule(self) -> list[Segment]:
        segments = []
        while self.current.kind != "END":
            if self.current.kind == "SEMI":
                self.pos += 1
                continue
            segments.append(self.segment())
            if self.current.kind not in ("SEMI", "END"):
                token = self.current
                raise ScheduleSyntaxError(
                    f"expected ';' between segments, found {token.text!r}",
                    token.line,
                    token.column,
                )
        if not segments:
            token = self.current
            raise ScheduleSyntaxError("empty schedule", token.line, token.column)
        return segments


def parse_schedule(text: str) -> QuenchSchedule:
    """
    Parse a schedule description.

    Raises
    ------
    ScheduleSyntaxError
        With the line and column of the offending token.
    ScheduleSemanticError
        With the 1-based index of the offending segment (non-positive
        durations, discontinuous junctions).
    """
    segments = _Parser(text).schedule()
    return QuenchSchedule(tuple(segments))
