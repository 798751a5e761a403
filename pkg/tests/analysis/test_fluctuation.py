import dataclasses
import json
import math

import numpy as np
import pytest

from qwork_pipeline.analysis.fluctuation import (
    CrooksPoint,
    crooks_points,
    exact_delta_f,
    fit_crooks,
    jarzynski_check,
    write_fit,
)
from qwork_pipeline.analysis.workdist import (
    Peak,
    PeakSet,
    brute_force_lines,
    peaks_from_lines,
)
from qwork_pipeline.dynamics.fockspace import build_hamiltonian, gibbs_state
from qwork_pipeline.dynamics.propagator import propagate
from qwork_pipeline.dynamics.protocol import repeated_tanh, scale_schedule, single_tanh
from qwork_pipeline.utils.errors import (
    DegenerateFitError,
    FitDomainError,
    InvalidStateError,
    NoOverlapError,
)

G = 0.165
EPS = 0.25
DIM = 96
US = 1.885  # one microsecond at a 300 kHz trap frequency

QUENCH_SHAPES = {
    "single_tanh": single_tanh(0.0, 1.0, 1.0 * US),
    "repeated_tanh": repeated_tanh(
        0.0, 1.0, t_slow=20.0 * US, t_fast=0.03 * US, cycles=2
    ),
}


@dataclasses.dataclass
class Case:
    quench: str
    n_bar: float

    @property
    def beta(self) -> float:
        return math.log1p(1.0 / self.n_bar)


cases = [Case(quench, n_bar) for quench in QUENCH_SHAPES for n_bar in (0.5, 1.0, 2.0)]


@pytest.fixture(scope="module")
def hamiltonians():
    return build_hamiltonian(1.0, 0.0, 0.0, DIM), build_hamiltonian(1.0, G, EPS, DIM)


@pytest.fixture(scope="module")
def propagators():
    # one evolution per quench, shared by all temperatures
    evolutions = {}
    for name, shape in QUENCH_SHAPES.items():
        lam = scale_schedule(shape, value_scale=G)
        eps = scale_schedule(shape, value_scale=EPS)
        evolutions[name] = propagate(lam, epsilon_schedule=eps, dim=DIM)
    return evolutions


def _peaks(W_list, amplitudes, direction, reference=0.0, dW=1e-3) -> PeakSet:
    peaks = tuple(
        Peak(W, a, int(round(W - reference))) for W, a in zip(W_list, amplitudes)
    )
    return PeakSet(peaks, direction, reference, dW)


@pytest.mark.parametrize("case", cases, ids=lambda c: f"{c.quench}-nbar{c.n_bar}")
def test_discrete_crooks_theorem(case: Case, hamiltonians, propagators):
    H_i, H_f = hamiltonians
    U = propagators[case.quench]
    rho_i = gibbs_state(H_i, case.beta)
    rho_f = gibbs_state(H_f, case.beta)
    delta_f = exact_delta_f(H_i, H_f, case.beta)
    forward = peaks_from_lines(
        brute_force_lines(U, H_i, H_f, rho_i), "forward", min_weight=1e-6
    )
    backward = peaks_from_lines(
        brute_force_lines(U.dagger, H_f, H_i, rho_f), "backward", min_weight=1e-6
    )
    points = crooks_points(forward, backward, position_tolerance=1e-6)
    assert len(points) >= 3
    for p in points:
        assert p.ratio == pytest.approx(math.exp(case.beta * (p.W - delta_f)), rel=1e-9)
    fit = fit_crooks(points)
    assert fit.beta_hat == pytest.approx(case.beta, rel=1e-8)
    assert fit.delta_f_hat == pytest.approx(delta_f, rel=1e-8)


@pytest.mark.parametrize("g", [0.165, 0.8, 1.2])
def test_crooks_relation_for_sudden_displacements(g):
    # for large g the tallest backward line is not at -W of the tallest forward line
    beta = math.log(2.0)
    shape = single_tanh(0.0, 1.0, 0.01)
    U = propagate(
        scale_schedule(shape, value_scale=g),
        epsilon_schedule=scale_schedule(shape, value_scale=EPS),
        dim=DIM,
    )
    H_i = build_hamiltonian(1.0, 0.0, 0.0, DIM)
    H_f = build_hamiltonian(1.0, g, EPS, DIM)
    rho_i, rho_f = gibbs_state(H_i, beta), gibbs_state(H_f, beta)
    delta_f = exact_delta_f(H_i, H_f, beta)
    assert delta_f == pytest.approx(EPS - g**2, abs=1e-10)
    forward = peaks_from_lines(
        brute_force_lines(U, H_i, H_f, rho_i), "forward", min_weight=1e-6
    )
    backward = peaks_from_lines(
        brute_force_lines(U.dagger, H_f, H_i, rho_f), "backward", min_weight=1e-6
    )
    mirrored = [
        p for p in forward.peaks if any(abs(p.W + q.W) < 1e-6 for q in backward.peaks)
    ]
    points = crooks_points(forward, backward, position_tolerance=1e-6)
    assert len(points) == len(mirrored) >= 3
    for p in points:
        assert p.ratio == pytest.approx(math.exp(beta * (p.W - delta_f)), rel=1e-9)
    fit = fit_crooks(points)
    assert fit.beta_hat == pytest.approx(beta, rel=1e-8)
    assert fit.delta_f_hat == pytest.approx(delta_f, rel=1e-8, abs=1e-10)


@pytest.mark.parametrize("case", cases, ids=lambda c: f"{c.quench}-nbar{c.n_bar}")
def test_jarzynski_equality(case: Case, hamiltonians, propagators):
    H_i, H_f = hamiltonians
    rho_i = gibbs_state(H_i, case.beta)
    lhs, rhs = jarzynski_check(propagators[case.quench], H_i, H_f, rho_i, case.beta)
    assert abs(lhs / rhs - 1.0) < 1e-8


@pytest.mark.parametrize("n_bar", [0.5, 1.0, 2.0])
def test_exact_delta_f_of_a_displacement(hamiltonians, n_bar):
    H_i, H_f = hamiltonians
    beta = math.log1p(1.0 / n_bar)
    assert exact_delta_f(H_i, H_f, beta) == pytest.approx(EPS - G**2, abs=1e-10)


def test_jarzynski_rejects_non_gibbs_state(hamiltonians, propagators):
    H_i, H_f = hamiltonians
    rho = gibbs_state(H_i, 1.0)
    with pytest.raises(InvalidStateError):
        jarzynski_check(propagators["single_tanh"], H_i, H_f, rho, math.log(2.0))


def test_crooks_points_pairs_opposite_orders():
    fwd = _peaks(
        [-0.8, 0.2, 1.2, 2.2], [0.05, 0.8, 0.1, 0.01], "forward", reference=0.2
    )
    bwd = _peaks([-1.2, -0.2, 0.8], [0.03, 0.9, 0.2], "backward", reference=-0.2)
    points = crooks_points(fwd, bwd)
    assert [p.order for p in points] == [-1, 0, 1]
    assert points.dropped == 1
    assert points.points[0].ratio == pytest.approx(0.05 / 0.2)
    assert points.points[2].log_ratio == pytest.approx(math.log(0.1 / 0.03))


def test_crooks_points_requires_matching_positions():
    fwd = _peaks([0.2, 1.2], [0.8, 0.1], "forward", reference=0.2)
    bwd = _peaks([-1.25, -0.25], [0.1, 0.8], "backward", reference=-0.25)
    with pytest.raises(NoOverlapError):
        crooks_points(fwd, bwd, position_tolerance=0.01)
    assert len(crooks_points(fwd, bwd, position_tolerance=0.1)) == 2


def test_crooks_points_empty():
    fwd = _peaks([0.2], [0.8], "forward", reference=0.2)
    with pytest.raises(NoOverlapError):
        crooks_points(fwd, PeakSet((), "backward", 0.0))


def test_crooks_points_pairs_by_position_when_references_differ():
    # each set labels its own tallest line as order 0
    fwd = _peaks(
        [-0.8, 0.2, 1.2, 2.2], [0.3, 0.4, 0.2, 0.1], "forward", reference=0.2
    )
    bwd = _peaks(
        [-2.2, -1.2, -0.2, 0.8], [0.05, 0.15, 0.3, 0.5], "backward", reference=0.8
    )
    points = crooks_points(fwd, bwd)
    assert len(points) == 4
    assert points.dropped == 0
    assert [p.order for p in points] == [-1, 0, 1, 2]
    assert [p.amplitude_backward for p in points] == [0.5, 0.3, 0.15, 0.05]


def test_fit_crooks_recovers_line():
    beta, delta_f = 0.693, 0.2228
    W = np.array([-1.7772, -0.7772, 0.2228, 1.2228, 2.2228])
    points = [
        CrooksPoint(
            W=w, ratio=math.exp(beta * (w - delta_f)), log_ratio=beta * (w - delta_f)
        )
        for w in W
    ]
    fit = fit_crooks(points)
    assert fit.A == pytest.approx(beta)
    assert fit.B == pytest.approx(beta * delta_f)
    assert fit.delta_f_hat == pytest.approx(delta_f)
    assert fit.residual < 1e-12
    weighted = fit_crooks(points, weighted=True)
    assert weighted.beta_hat == pytest.approx(beta)


@pytest.mark.parametrize("c", [1e-3, 0.5, 3.7])
def test_fit_crooks_rescaled_amplitudes_shift_only_the_intercept(c):
    fwd = _peaks(
        [-0.7772, 0.2228, 1.2228], [0.07, 0.85, 0.08], "forward", reference=0.2228
    )
    bwd = _peaks(
        [-1.2228, -0.2228, 0.7772], [0.03, 0.82, 0.15], "backward", reference=-0.2228
    )
    scaled = PeakSet(
        tuple(Peak(p.W, c * p.amplitude, p.order) for p in bwd.peaks),
        "backward",
        -0.2228,
        1e-3,
    )
    fit = fit_crooks(crooks_points(fwd, bwd))
    rescaled = fit_crooks(crooks_points(fwd, scaled))
    assert rescaled.A == pytest.approx(fit.A, rel=1e-12)
    assert rescaled.B == pytest.approx(fit.B + math.log(c), abs=1e-12)


def test_fit_crooks_errors():
    one = [CrooksPoint(W=0.2, ratio=1.0, log_ratio=0.0)]
    with pytest.raises(DegenerateFitError):
        fit_crooks(one)
    same_w = one + [CrooksPoint(W=0.2, ratio=1.1, log_ratio=math.log(1.1))]
    with pytest.raises(DegenerateFitError):
        fit_crooks(same_w)
    with pytest.raises(FitDomainError):
        fit_crooks(one + [CrooksPoint(W=1.2, ratio=0.0, log_ratio=-math.inf)])


def test_write_fit(tmp_path):
    points = [
        CrooksPoint(W=w, ratio=math.exp(0.7 * w - 0.15), log_ratio=0.7 * w - 0.15)
        for w in (-0.8, 0.2, 1.2)
    ]
    write_fit(fit_crooks(points), tmp_path / "crooks_fit.json", extra={"seed": 3})
    with open(tmp_path / "crooks_fit.json") as f:
        data = json.load(f)
    assert data["beta_hat"] == pytest.approx(0.7)
    assert data["seed"] == 3
    assert len(data["points"]) == 3
