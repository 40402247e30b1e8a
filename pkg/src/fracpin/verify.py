"""Executable certificates for the explicit sub- and super-solutions.

A construction is certified by evaluating its pointwise defect

    margin(x) = A u(x) - W'(u(x))/eps

with the direct singular-integral operator (local second-difference self
term) at every node outside explicit exclusion zones: the pinning discs and
the non-smooth crossover points of the construction, where the viscosity
inequality is carried by the down-jump rule instead.  The quadrature budget
is calibrated on a control field with known zero margin (the periodized
cell solution itself) evaluated the same way, so a certificate never claims
more accuracy than the grid delivers.

Front-speed bounds come from the transport term: a super-solution may
translate its fronts inward at speed V while

    |log eps| * c_eps * eps * V * |u'(x)| <= -margin(x)

at its active interface nodes, so the largest certified V is a lower bound
for the true front speed.  The glued sub-solution needs at least the speed
that covers its negative margins, giving the upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np

from .cells import solve_periodic_cell
from .errors import ValidationError
from .grids import Field, PeriodicGrid
from .interface import modified_interface
from .obstacles import ObstacleSet, make_obstacles, project_constraint
from .operators import DEFAULT_SIGMA, half_laplacian_direct
from .potentials import calibrated_potential, profile
from .evolution import EvolutionParams, Stepper


@dataclass
class Certificate:
    construction: str
    params: dict
    margins: np.ndarray = dfield(repr=False)
    evaluated: np.ndarray = dfield(repr=False)
    min_margin: float = 0.0
    max_margin: float = 0.0
    argmin_x: float = 0.0
    argmax_x: float = 0.0
    bound: float = 0.0
    budget: float = 0.0
    passed: bool = False
    extra: dict = dfield(default_factory=dict)

    def to_manifest(self) -> dict:
        return {"construction": self.construction, "params": self.params,
                "min_margin": self.min_margin, "max_margin": self.max_margin,
                "argmin_x": self.argmin_x, "argmax_x": self.argmax_x,
                "bound": self.bound, "budget": self.budget, "passed": self.passed,
                "extra": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                          for k, v in self.extra.items()}}


def _macro_setup(eps: float, d: float, n_gaps: int, grid_per_eps: int):
    """Commensurate macro circle with obstacles on the pitch-d lattice."""
    h = eps / grid_per_eps
    per = int(round(d / h))
    if abs(per * h - d) > 1e-9 * d:
        raise ValidationError("d must be a multiple of eps/grid_per_eps")
    n = per * n_gaps
    grid = PeriodicGrid((n * h,), n)
    obs = make_obstacles(grid, "grid", d, eps, seed=0)
    return grid, obs, per


def _periodic_cell_on_macro(grid: PeriodicGrid, obs: ObstacleSet, eps: float,
                            M: float, sigma: float):
    """Blow-up cell solution replicated over every obstacle period."""
    d = obs.meta["d"]
    per = int(round(d / grid.spacing[0]))
    cell = solve_periodic_cell(d / eps, R=1.0, M=M, n=per, sigma=sigma)
    centers = np.sort(obs.centers[:, 0])
    i_center = int(round((centers[0] + grid.lengths[0] / 2) / grid.spacing[0]))
    idx = (np.arange(grid.n) - i_center + per // 2) % per
    return Field(grid, cell.field.values[idx]), cell


def _margin(field: Field, eps: float, sigma: float, potential) -> np.ndarray:
    aw = half_laplacian_direct(field, sigma=sigma, second_derivative="local").values
    return aw - potential.dw(field.values) / eps


def _distance_to(x: np.ndarray, points: np.ndarray, length: float) -> np.ndarray:
    if len(points) == 0:
        return np.full_like(x, np.inf)
    d = np.abs((x[:, None] - points[None, :] + length / 2) % length - length / 2)
    return d.min(axis=1)


def _stripe_profile(grid: PeriodicGrid, eps: float, x_lo: float, x_hi: float,
                    n_images: int = 400):
    """Periodized kink/anti-kink stripe: sum over images of phi(up) - phi(dn).

    The image series (converging like 1/k^2 through the algebraic tails) is
    what makes the far field consistent on the circle; a bare minimum of two
    wrapped profiles undershoots it by O(eps/distance) and would show a
    spurious positive defect opposite the stripe.
    """
    x = grid.axis(0)
    L = grid.lengths[0]
    out = np.zeros_like(x)
    for k in range(-n_images, n_images + 1):
        out += profile((x - x_lo + k * L) / eps) - profile((x - x_hi + k * L) / eps)
    return np.clip(out, 0.0, 1.0)


def _crossovers(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    s = np.sign(a - b)
    hit = np.nonzero(s != np.roll(s, -1))[0]
    return x[hit]


def certify_stationary_supersolution(eps: float, d: float, n_gaps: int = 12,
                                     grid_per_eps: int = 8,
                                     c_eps: float = 1.0,
                                     sigma: float = DEFAULT_SIGMA,
                                     exclusion_radius: float | None = None) -> Certificate:
    """Stripe min{phi_+, phi_-, cell_(M=0)}: margin <= budget off exclusions.

    Being a pointwise minimum of functions that individually satisfy the
    stationary inequality, the composite's classical margin is nonpositive
    at its smooth points; the certificate verifies this numerically against
    the control budget and reports the largest translation speed the
    obstacle suction pays for (a lower bound on the true front speed).
    """
    pot = calibrated_potential(sigma)
    grid, obs, per = _macro_setup(eps, d, n_gaps, grid_per_eps)
    x = grid.axis(0)
    L = grid.lengths[0]
    if exclusion_radius is None:
        exclusion_radius = 8 * eps
    ubar, cell = _periodic_cell_on_macro(grid, obs, eps, 0.0, sigma)

    # fronts mid-gap; the stripe must be narrower than half the circle so
    # that each wrapped profile's seam is hidden under the other tail
    hw = d * max(n_gaps // 6, 1)
    stripe = _stripe_profile(grid, eps, -hw, hw)
    w = np.minimum(stripe, ubar.values)
    field = Field(grid, w)

    margin = _margin(field, eps, sigma, pot)
    control = _margin(ubar, eps, sigma, pot)

    centers = obs.centers[:, 0]
    kinks = _crossovers(stripe, ubar.values, x)
    seams = np.array([L / 2 - hw, -(L / 2 - hw)])  # wrapped-profile seam points
    kinks = np.concatenate([kinks, seams])
    dist = np.minimum(_distance_to(x, centers, L), _distance_to(x, kinks, L))
    ev = dist > exclusion_radius
    budget = float(np.abs(control[_distance_to(x, centers, L) > exclusion_radius]).max())

    mm = margin[ev]
    logeps = abs(np.log(eps))
    dphi = np.abs(np.gradient(stripe, grid.spacing[0]))
    active = ev & (stripe <= ubar.values) & (dphi > 0.05 / eps * 1e-3)
    ok = active & (margin < -budget)
    v_cands = (-margin[ok] - budget) / (logeps * c_eps * eps * dphi[ok])
    v_lower = float(v_cands.min()) if ok.sum() else 0.0

    return Certificate(
        construction="stationary_supersolution",
        params={"eps": eps, "d": d, "n_gaps": n_gaps, "grid_per_eps": grid_per_eps,
                "c_eps": c_eps, "sigma": sigma, "half_width": hw, "seed": 0},
        margins=margin, evaluated=ev,
        min_margin=float(mm.min()), max_margin=float(mm.max()),
        argmin_x=float(x[ev][np.argmin(mm)]), argmax_x=float(x[ev][np.argmax(mm)]),
        bound=budget, budget=budget,
        passed=bool(mm.max() <= budget),
        extra={"v_certified_lower_bound": v_lower,
               "control_noise_floor": budget,
               "exclusion_radius": exclusion_radius})


def certify_moving_subsolution(eps: float, d: float, alpha: float | None = None,
                               n_gaps: int = 12, grid_per_eps: int = 8,
                               c_eps: float = 1.0, M: float = 1.0,
                               sigma: float = DEFAULT_SIGMA,
                               exclusion_radius: float | None = None) -> Certificate:
    """Flattened stripe glued to M-loaded cells; sub-solution speed bound.

    The interface pair is phi_tilde(+) + phi_tilde(-) - cap with the cap
    matched to the loaded cell's antipodal value; beyond one gap from either
    front the construction follows the cell.  The margin must be
    >= -budget wherever the transport term cannot act, and the minimal
    covering speed alpha_req yields the certified upper bound
    (4/3) alpha_req on the true front speed (smooth motion over three
    quarters of each period plus the jump over the remaining quarter).
    """
    pot = calibrated_potential(sigma)
    grid, obs, per = _macro_setup(eps, d, n_gaps, grid_per_eps)
    x = grid.axis(0)
    L = grid.lengths[0]
    if exclusion_radius is None:
        exclusion_radius = 8 * eps
    # the flattened transition must fit within half a gap so the rising part
    # never touches a pinning disc (this is the "N large enough" room of the
    # construction); the cap 1 - 1/L matches the cell antipode, and
    # L_flat ~ pi l / M, so the fit forces a load M somewhat above 2
    M = max(M, 2.0 / (1.0 - 8 * eps / d))
    cellf, cell = _periodic_cell_on_macro(grid, obs, eps, M, sigma)
    cap = cell.max_value
    L_flat = max(10.0, 1.0 / (1.0 - cap))
    mp = modified_interface(L_flat)

    hw = d * max(n_gaps // 6, 1)
    footprint = mp.x_right * eps
    if footprint > d / 2 - 3 * eps:
        raise ValidationError(
            f"flattened interface footprint {footprint:.3g} exceeds the half gap "
            f"{d / 2:.3g}; increase d/eps or the load M")
    xi_up = grid.periodic_delta(x, -hw, 0) / eps
    xi_dn = -grid.periodic_delta(x, hw, 0) / eps
    pair = np.minimum(mp(xi_up), cap) + np.minimum(mp(xi_dn), cap) - cap
    pair = np.maximum(pair, 0.0)
    # glue at the mid-gap antipodes one pitch inside each front, where the
    # cell attains exactly its maximum cap (C^1 match, no crossover kink)
    sep = np.minimum(np.abs(grid.periodic_delta(x, -hw, 0)),
                     np.abs(grid.periodic_delta(x, hw, 0)))
    inside = np.abs(grid.periodic_delta(x, 0.0, 0)) <= hw - d
    w = np.where(inside, cellf.values, pair)
    field = Field(grid, w)

    margin = _margin(field, eps, sigma, pot)
    control = _margin(cellf, eps, sigma, pot) - (M / (d / eps)) / eps
    centers = obs.centers[:, 0]
    seams = np.array([-(hw - d), hw - d])
    dist = np.minimum(_distance_to(x, centers, L), _distance_to(x, seams, L))
    ev = dist > exclusion_radius
    budget = float(np.abs(control[_distance_to(x, centers, L) > exclusion_radius]).max())

    logeps = abs(np.log(eps))
    slope = np.abs(np.gradient(pair, grid.spacing[0]))
    neg = ev & (margin < -budget)
    covered = neg & (slope > 1e-9)
    uncovered = neg & ~covered
    alpha_req = float(np.max((-margin[covered] - budget)
                             / (logeps * c_eps * eps * slope[covered]))) if covered.any() else 0.0
    worst_uncovered = float(margin[uncovered].min()) if uncovered.any() else 0.0
    passed = worst_uncovered >= -2 * budget
    if alpha is None:
        alpha = alpha_req

    shift = d / 4
    pair_shift = np.minimum(mp(grid.periodic_delta(x, -hw + shift, 0) / eps), cap) \
        + np.minimum(mp(-grid.periodic_delta(x, hw - shift, 0) / eps), cap) - cap
    jump_down = bool(np.all(np.maximum(pair_shift, 0.0) <= pair + 1e-12))

    return Certificate(
        construction="moving_subsolution",
        params={"eps": eps, "d": d, "alpha": alpha, "M": M, "L_flat": L_flat,
                "n_gaps": n_gaps, "grid_per_eps": grid_per_eps, "c_eps": c_eps,
                "sigma": sigma, "seed": 0},
        margins=margin, evaluated=ev,
        min_margin=float(margin[ev].min()), max_margin=float(margin[ev].max()),
        argmin_x=float(x[ev][np.argmin(margin[ev])]),
        argmax_x=float(x[ev][np.argmax(margin[ev])]),
        bound=-budget, budget=budget,
        passed=bool(passed and alpha >= alpha_req and jump_down),
        extra={"alpha_required": alpha_req,
               "v_certified_upper_bound": (4.0 / 3.0) * max(alpha_req, alpha),
               "jump_is_downward": jump_down,
               "worst_uncovered_margin": worst_uncovered,
               "control_noise_floor": budget,
               "exclusion_radius": exclusion_radius})


def ordering_regression(lower: Field, u0: Field, upper: Field,
                        params: EvolutionParams, obs: ObstacleSet | None = None,
                        n_steps: int = 200, tol: float = 1e-8,
                        barrier_mode: str = "evolve") -> dict:
    """Evolve a sandwich lower <= u0 <= upper and assert it stays ordered.

    ``barrier_mode='evolve'`` runs all three through the engine (the
    discrete comparison principle); ``'static'`` keeps the outer two fixed,
    the correct check against certified stationary barriers.  Also asserts
    the range [-tol, 1 + tol] whenever the initial data lie in [0, 1].
    """
    if np.any(lower.values > u0.values + 1e-15) or np.any(u0.values > upper.values + 1e-15):
        raise ValidationError("initial data are not ordered lower <= u0 <= upper")
    stepper = Stepper(u0.grid, params)
    in_unit_range = bool(u0.values.min() >= 0 and u0.values.max() <= 1
                         and lower.values.min() >= 0 and upper.values.max() <= 1)
    lo, mid, up = lower.copy(), u0.copy(), upper.copy()
    if params.pinning == "hard" and obs is not None:
        lo, mid, up = (project_constraint(f, obs) for f in (lo, mid, up))
    worst_order = 0.0
    worst_range = 0.0
    for _ in range(n_steps):
        mid = stepper(mid, obs)
        if barrier_mode == "evolve":
            lo = stepper(lo, obs)
            up = stepper(up, obs)
        worst_order = max(worst_order,
                          float(np.max(lo.values - mid.values)),
                          float(np.max(mid.values - up.values)))
        if in_unit_range:
            worst_range = max(worst_range,
                              float(-mid.values.min()), float(mid.values.max() - 1.0))
    return {"passed": bool(worst_order <= tol and (not in_unit_range or worst_range <= tol)),
            "worst_order_violation": worst_order,
            "worst_range_violation": worst_range,
            "tol": tol, "n_steps": n_steps}
