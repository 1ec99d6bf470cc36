"""Built-in property suite used as an install smoke test.

Each check returns a :class:`PropertyResult`; :func:`run_properties` runs
them all and the CLI prints one line per result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .controller import ControlWeights, lqr_gain, one_step_cost
from .harness import Scenario, run_trial, window_mask
from .observers import DESCENT_SIGN, descent_sign_check
from .phasor import I2, rot_exact, rot_small
from .plant import CavityParams, exact_propagator, system_matrix


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def rotation_identities(n: int = 200, seed: int = 0) -> PropertyResult:
    """Composition, orthogonality, unit determinant and small-angle order."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for a, b in rng.uniform(-math.pi, math.pi, size=(n, 2)):
        ra, rb = rot_exact(a), rot_exact(b)
        worst = max(worst,
                    np.abs(ra @ rb - rot_exact(a + b)).max(),
                    np.abs(ra.T @ ra - I2).max(),
                    abs(np.linalg.det(ra) - 1.0))
    # I + theta*J differs from R(theta) by O(theta^2)
    theta = 1e-3
    small_err = np.abs(rot_small(theta) - rot_exact(theta)).max()
    ok = worst <= 1e-12 and small_err <= theta ** 2
    return PropertyResult("rotation_identities", ok,
                          f"max identity residual {worst:.2e}, small-angle error {small_err:.2e} at 1e-3 rad")


def euler_fill_error(params: CavityParams, delta_omega: float = 0.0, fill_duration: float = 325e-6,
                     drive=(1.0, 0.0)) -> float:
    """Max deviation of iterated Euler from the exact response over one fill.

    The cavity starts empty under a constant drive; the exact trajectory is
    ``x_ss + expm(t*A)(x0 - x_ss)``.  The deviation is relative to the
    steady-state field magnitude.
    """
    n = round(fill_duration / params.ts)
    a_c = delta_omega * np.array([[0.0, -1.0], [1.0, 0.0]]) - params.omega_half * I2
    u = np.asarray(drive, dtype=float)
    x_ss = -np.linalg.solve(a_c, params.omega_half * u)
    a_d = system_matrix(params, delta_omega)
    b_d = params.ts * params.omega_half * I2
    x = np.zeros(2)
    worst = 0.0
    for k in range(1, n + 1):
        x = a_d @ x + b_d @ u
        exact = x_ss - exact_propagator(params, delta_omega, k * params.ts) @ x_ss
        worst = max(worst, float(np.linalg.norm(x - exact)))
    return worst / float(np.linalg.norm(x_ss))


def euler_convergence(params: CavityParams | None = None, delta_omega: float = 2 * math.pi * 500
                      ) -> PropertyResult:
    """Halving ts must roughly halve the Euler error (first order)."""
    params = params or CavityParams()
    coarse = euler_fill_error(params, delta_omega)
    fine = euler_fill_error(replace(params, ts=params.ts / 2), delta_omega)
    ratio = coarse / fine
    ok = 1.8 <= ratio <= 2.2
    return PropertyResult("euler_vs_exponential", ok,
                          f"fill error {coarse:.3e} at ts={params.ts:g}, {fine:.3e} at ts/2, ratio {ratio:.3f}")


def noise_free_exactness(scenario: Scenario | None = None, backend=None) -> PropertyResult:
    """Perfect model and no noise: the flattop field equals the reference."""
    scenario = scenario or Scenario.quiet()
    worst = 0.0
    for variant in ("proposed", "standard"):
        rec = run_trial(0, scenario, variant, backend=backend)
        mask = window_mask(scenario.macropulse, rec.t, "flattop")
        worst = max(worst, float(rec.tracking_error()[mask].max()))
    return PropertyResult("noise_free_exactness", worst <= 1e-9, f"max flattop tracking error {worst:.2e}")


def descent_sign(sign: float = DESCENT_SIGN, n_points: int = 20, seed: int = 0) -> PropertyResult:
    ok = descent_sign_check(sign, n_points, seed)
    return PropertyResult("detuning_descent_sign", bool(ok.all()),
                          f"{int(ok.sum())}/{n_points} operating points descend with sign {sign:+g}")


def lqr_optimality(n_pairs: int = 100, n_perturb: int = 50, seed: int = 0,
                   weights: ControlWeights | None = None) -> PropertyResult:
    """The one-step LQR command is a minimizer of the one-step cost."""
    weights = weights or ControlWeights()
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(n_pairs):
        a = rng.normal(size=(2, 2))
        b = rng.normal(size=(2, 2))
        while abs(np.linalg.det(b)) < 1e-3:
            b = rng.normal(size=(2, 2))
        e = rng.normal(size=2)
        u_opt = -lqr_gain(a, b, weights) @ e
        base = one_step_cost(u_opt, e, a, b, weights)
        for du in rng.normal(size=(n_perturb, 2)) * rng.uniform(1e-6, 1.0):
            worst = min(worst, one_step_cost(u_opt + du, e, a, b, weights) - base)
    return PropertyResult("lqr_one_step_optimality", worst >= -1e-12,
                          f"min cost increase {worst:.3e} over {n_pairs * n_perturb} perturbations")


def run_properties(scenario: Scenario | None = None, descent: float = DESCENT_SIGN,
                   backend=None) -> list[PropertyResult]:
    scenario = scenario or Scenario()
    quiet = Scenario.quiet(cavity=scenario.cavity, weights=scenario.weights,
                           proposed_gains=scenario.proposed_gains, standard_gains=scenario.standard_gains,
                           macropulse=scenario.macropulse, options=scenario.options)
    return [
        rotation_identities(),
        euler_convergence(scenario.cavity),
        noise_free_exactness(quiet, backend=backend),
        descent_sign(descent),
        lqr_optimality(weights=scenario.weights),
    ]
