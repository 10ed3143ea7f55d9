"""Exact step-wise unitary evolution of the driven qubit under the total field.

Everything is in B0-units (B0 = 1, hbar = 1): the Hamiltonian is
H = B_total . sigma / 2 and a step of duration dt applies the exact
exponential

    U = cos(|B| dt/2) I - i sin(|B| dt/2) (B_hat . sigma).

The drive direction is evaluated at the step midpoint; the noise value is
held constant over the step.  Swap pulses act at ``pulse`` boundaries,
``flip`` boundaries reverse the field (state untouched).

Eigenstate convention for the direction n(theta, phi):

    |+1> = (e^{-i phi} cos(theta/2),  sin(theta/2))
    |-1> = (e^{-i phi} sin(theta/2), -cos(theta/2))

The noiseless evolution of a uniform-rotation segment also has a closed
form (constant Hamiltonian in the co-rotating frame); ``evolve_exact``
uses it and serves as the stepping-free oracle in the tests.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .schedule import Schedule

__all__ = [
    "StepGrid",
    "eigenstate",
    "initial_superposition",
    "field_at",
    "step_unitary",
    "swap_pulse",
    "readout_coherence",
    "evolve",
    "evolve_batch",
    "evolve_exact",
    "bloch_trace",
    "write_trace_csv",
]

_SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
_ID = np.eye(2, dtype=complex)

# zero total field inside a step: probability-zero under Gaussian noise,
# counted instead of crashing
degenerate_field_count = 0


@dataclass(frozen=True)
class StepGrid:
    """Step duration and per-segment step counts for a schedule.

    dt = (2 pi / B0) / divisor; every segment duration must be an integer
    number of steps, which holds whenever |l_k| * kappa * divisor is an
    integer (the built-in schemes at the default divisor satisfy this).
    """

    dt: float
    steps_per_segment: tuple

    @classmethod
    def from_schedule(cls, schedule: Schedule, divisor: int = 10) -> "StepGrid":
        if divisor < 1:
            raise ValueError("divisor must be a positive integer")
        dt = 2.0 * math.pi / divisor
        steps = []
        for seg in schedule.segments:
            x = float(abs(seg.l)) * schedule.kappa * divisor
            n = round(x)
            if abs(x - n) > 1e-6 or n == 0:
                raise ValueError(
                    f"segment with |l|={abs(seg.l)} is not an integer number of "
                    f"steps at kappa={schedule.kappa}, divisor={divisor}; "
                    "pick a divisor that makes |l|*kappa*divisor integral"
                )
            steps.append(n)
        return cls(dt=dt, steps_per_segment=tuple(steps))

    @property
    def total_steps(self) -> int:
        return sum(self.steps_per_segment)


def eigenstate(theta: float, phi: float, s: int) -> np.ndarray:
    """Eigenstate of n(theta, phi).sigma with eigenvalue s."""
    if s == 1:
        return np.array([np.exp(-1j * phi) * math.cos(theta / 2), math.sin(theta / 2)])
    if s == -1:
        return np.array([np.exp(-1j * phi) * math.sin(theta / 2), -math.cos(theta / 2)])
    raise ValueError(f"s must be +1 or -1, got {s}")


def _vector_to_angles(n) -> tuple:
    n = np.asarray(n, dtype=float)
    r = np.linalg.norm(n)
    if r == 0:
        raise ValueError("direction vector must be nonzero")
    return math.acos(np.clip(n[2] / r, -1.0, 1.0)), math.atan2(n[1], n[0])


def initial_superposition(n0) -> np.ndarray:
    """Equal superposition of the two eigenstates of n0.sigma."""
    theta, phi = _vector_to_angles(n0)
    return (eigenstate(theta, phi, 1) + eigenstate(theta, phi, -1)) / math.sqrt(2.0)


def field_at(
    schedule: Schedule, t: float, noise_value: float = 0.0, noise_axis: str = "longitudinal"
) -> np.ndarray:
    """Total field vector at time t: drive cone plus the noise contribution."""
    if t < 0:
        raise ValueError(f"t = {t} before the schedule starts")
    durations = schedule.durations()
    phis = schedule.segment_phi_starts()
    t_rem = t
    for seg, dur, phi0 in zip(schedule.segments, durations, phis):
        if t_rem <= dur or seg is schedule.segments[-1]:
            if t_rem > dur + 1e-9:
                raise ValueError(f"t = {t} beyond the schedule end")
            omega_rf = seg.winding_sign * schedule.omega_b
            phi = phi0 + omega_rf * t_rem
            return _total_field(seg.theta, phi, noise_value, noise_axis)
        t_rem -= dur
    raise ValueError(f"t = {t} beyond the schedule end")


def _total_field(theta, phi, noise_value, noise_axis):
    st, ct = math.sin(theta), math.cos(theta)
    if noise_axis == "longitudinal":
        return np.array([st * math.cos(phi), st * math.sin(phi), ct + noise_value])
    if noise_axis == "transverse":
        r = st + noise_value
        return np.array([r * math.cos(phi), r * math.sin(phi), ct])
    raise ValueError(f"noise_axis must be 'longitudinal' or 'transverse', got {noise_axis!r}")


def step_unitary(field, dt: float) -> np.ndarray:
    """Exact propagator exp(-i (field.sigma/2) dt) for a constant field."""
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    field = np.asarray(field, dtype=float)
    norm = np.linalg.norm(field)
    if norm == 0.0:
        global degenerate_field_count
        degenerate_field_count += 1
        warnings.warn("zero total field in a step; returning identity", stacklevel=2)
        return _ID.copy()
    h = 0.5 * norm * dt
    u = field / norm
    return math.cos(h) * _ID - 1j * math.sin(h) * (u[0] * _SX + u[1] * _SY + u[2] * _SZ)


def swap_pulse(n) -> np.ndarray:
    """Pi pulse m.sigma about the equatorial axis m = z x n / |z x n|.

    m is orthogonal to n (and to z), so the pulse anticommutes with
    n.sigma and exchanges its eigenstates; m = x when n is along z.
    """
    n = np.asarray(n, dtype=float)
    mx, my = -n[1], n[0]
    r = math.hypot(mx, my)
    if r < 1e-15:
        return _SX.copy()
    return (mx / r) * _SX + (my / r) * _SY


def _pulse_at_phi(phi: float) -> np.ndarray:
    # swap_pulse for the cone azimuth phi: m = (-sin phi, cos phi, 0)
    return -math.sin(phi) * _SX + math.cos(phi) * _SY


def readout_coherence(state_or_rho, n_final) -> complex:
    """Off-diagonal element <-1|rho|+1> in the eigenbasis of n_final."""
    theta, phi = _vector_to_angles(n_final)
    em = eigenstate(theta, phi, -1)
    ep = eigenstate(theta, phi, 1)
    arr = np.asarray(state_or_rho, dtype=complex)
    if arr.ndim == 1:
        return complex((em.conj() @ arr) * np.conj(ep.conj() @ arr))
    return complex(em.conj() @ arr @ ep)


def _direction(theta, phi):
    return np.array(
        [math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)]
    )


def evolve_batch(
    schedule: Schedule,
    noise_values: np.ndarray,
    grid: StepGrid,
    initial: np.ndarray = None,
    noise_axis: str = "longitudinal",
) -> np.ndarray:
    """Evolve a batch of realizations through the schedule.

    noise_values has shape (R, total_steps): one piecewise-constant noise
    path per realization.  Returns the (R, 2) final states.  All
    realizations share the deterministic drive; each state is advanced per
    step with the exact constant-field exponential.
    """
    noise_values = np.atleast_2d(np.asarray(noise_values, dtype=float))
    nreal, nsteps = noise_values.shape
    if nsteps != grid.total_steps:
        raise ValueError(
            f"noise has {nsteps} steps but the grid expects {grid.total_steps}"
        )
    if len(grid.steps_per_segment) != len(schedule.segments):
        raise ValueError("grid does not match the schedule's segment count")
    first = schedule.segments[0]
    if initial is None:
        initial = initial_superposition(_direction(first.theta, schedule.phi0))
    psi0 = np.asarray(initial, dtype=complex)
    p0 = np.full(nreal, psi0[0], dtype=complex)
    p1 = np.full(nreal, psi0[1], dtype=complex)

    dt = grid.dt
    phis = schedule.segment_phi_starts()
    longitudinal = noise_axis == "longitudinal"
    if not longitudinal and noise_axis != "transverse":
        raise ValueError(f"noise_axis must be 'longitudinal' or 'transverse', got {noise_axis!r}")

    i = 0
    for k, seg in enumerate(schedule.segments):
        omega_rf = seg.winding_sign * schedule.omega_b
        st, ct = math.sin(seg.theta), math.cos(seg.theta)
        phi0 = phis[k]
        for j in range(grid.steps_per_segment[k]):
            phi_mid = phi0 + omega_rf * (j + 0.5) * dt
            cphi, sphi = math.cos(phi_mid), math.sin(phi_mid)
            kval = noise_values[:, i]
            if longitudinal:
                bx = st * cphi
                by = st * sphi
                bz = ct + kval
                norm = np.sqrt(bx * bx + by * by + bz * bz)
            else:
                radial = st + kval
                bx = radial * cphi
                by = radial * sphi
                bz = ct
                norm = np.sqrt(radial * radial + ct * ct)
            half = 0.5 * norm * dt
            c = np.cos(half)
            s_over = np.where(norm > 0.0, np.sin(half) / np.where(norm > 0.0, norm, 1.0), 0.0)
            sx = s_over * bx
            sy = s_over * by
            sz = s_over * bz
            n0 = (c - 1j * sz) * p0 + (-sy - 1j * sx) * p1
            n1 = (sy - 1j * sx) * p0 + (c + 1j * sz) * p1
            p0, p1 = n0, n1
            i += 1
        phi_end = phi0 + 2.0 * math.pi * float(seg.l)
        kind = schedule.boundaries[k] if k < len(schedule.boundaries) else None
        if kind == "pulse":
            # P = [[0, -i e^{-i phi}], [i e^{i phi}, 0]]
            f = np.exp(1j * phi_end)
            p0, p1 = -1j * np.conj(f) * p1, 1j * f * p0
        # flips apply no unitary
    if schedule.final == "pulse":
        _, phi_end = schedule.end_direction()
        f = np.exp(1j * phi_end)
        p0, p1 = -1j * np.conj(f) * p1, 1j * f * p0
    return np.stack([p0, p1], axis=1)


def evolve(schedule: Schedule, noise, grid: StepGrid, initial=None,
           noise_axis: str = "longitudinal") -> np.ndarray:
    """Evolve a single realization; returns the final 2-component state."""
    if hasattr(noise, "values"):
        if len(noise.values) != grid.total_steps:
            raise ValueError(
                f"realization has {len(noise.values)} steps, grid expects {grid.total_steps}"
            )
        if abs(noise.dt - grid.dt) > 1e-12:
            raise ValueError(f"realization dt {noise.dt} differs from grid dt {grid.dt}")
        values = noise.values
    else:
        values = np.asarray(noise, dtype=float)
    return evolve_batch(schedule, values[None, :], grid, initial, noise_axis)[0]


# -- noiseless closed form ---------------------------------------------------


def _frame_unitary(theta, phi):
    # exp(i theta sy/2) exp(i phi sz/2) e^{i phi/2}: maps lab eigenstates to z
    ey = math.cos(theta / 2) * _ID + 1j * math.sin(theta / 2) * _SY
    ez = math.cos(phi / 2) * _ID + 1j * math.sin(phi / 2) * _SZ
    return ey @ ez * np.exp(1j * phi / 2)


def segment_unitary_exact(theta, omega_rf, duration, phi0):
    """Closed-form noiseless propagator of one uniform-rotation segment."""
    v = np.array([omega_rf * math.sin(theta), 0.0, 1.0 - omega_rf * math.cos(theta)])
    om = np.linalg.norm(v)
    vh = v / om
    half = 0.5 * om * duration
    rot = math.cos(half) * _ID - 1j * math.sin(half) * (
        vh[0] * _SX + vh[1] * _SY + vh[2] * _SZ
    )
    rot = rot * np.exp(1j * omega_rf * duration / 2)
    u0 = _frame_unitary(theta, phi0)
    u1 = _frame_unitary(theta, phi0 + omega_rf * duration)
    return u1.conj().T @ rot @ u0


def evolve_exact(schedule: Schedule, initial=None) -> np.ndarray:
    """Noiseless evolution by exact segment propagators (no time stepping)."""
    first = schedule.segments[0]
    if initial is None:
        initial = initial_superposition(_direction(first.theta, schedule.phi0))
    psi = np.asarray(initial, dtype=complex).copy()
    phis = schedule.segment_phi_starts()
    durations = schedule.durations()
    for k, seg in enumerate(schedule.segments):
        omega_rf = seg.winding_sign * schedule.omega_b
        psi = segment_unitary_exact(seg.theta, omega_rf, durations[k], phis[k]) @ psi
        kind = schedule.boundaries[k] if k < len(schedule.boundaries) else None
        if kind == "pulse":
            psi = _pulse_at_phi(phis[k] + 2.0 * math.pi * float(seg.l)) @ psi
    if schedule.final == "pulse":
        psi = _pulse_at_phi(schedule.end_direction()[1]) @ psi
    return psi


def schedule_coherence(schedule: Schedule, state) -> complex:
    """Readout coherence of a final state in the schedule's readout basis."""
    theta, phi = schedule.readout_direction()
    em = eigenstate(theta, phi, -1)
    ep = eigenstate(theta, phi, 1)
    arr = np.asarray(state, dtype=complex)
    if arr.ndim == 2 and arr.shape == (2, 2):
        return complex(em.conj() @ arr @ ep)
    if arr.ndim == 2:  # batch of states
        am = arr @ em.conj()
        ap = arr @ ep.conj()
        return am * np.conj(ap)
    return complex((em.conj() @ arr) * np.conj(ep.conj() @ arr))


# -- diagnostics -------------------------------------------------------------


def bloch_trace(schedule: Schedule, noise, grid: StepGrid, initial=None,
                noise_axis: str = "longitudinal") -> np.ndarray:
    """(total_steps+1, 4) array of (t, bx, by, bz) along one evolution."""
    values = noise.values if hasattr(noise, "values") else np.asarray(noise, dtype=float)
    if len(values) != grid.total_steps:
        raise ValueError("noise length does not match the grid")
    first = schedule.segments[0]
    if initial is None:
        initial = initial_superposition(_direction(first.theta, schedule.phi0))
    out = np.empty((grid.total_steps + 1, 4))
    psi = np.asarray(initial, dtype=complex)

    def bloch(p):
        return [
            2.0 * (p[0].conjugate() * p[1]).real,
            2.0 * (p[0].conjugate() * p[1]).imag,
            (abs(p[0]) ** 2 - abs(p[1]) ** 2),
        ]

    out[0] = [0.0, *bloch(psi)]
    # re-run stepwise to record intermediate states (cost is fine offline)
    t = 0.0
    idx = 0
    phis = schedule.segment_phi_starts()
    for k, seg in enumerate(schedule.segments):
        omega_rf = seg.winding_sign * schedule.omega_b
        for j in range(grid.steps_per_segment[k]):
            phi_mid = phis[k] + omega_rf * (j + 0.5) * grid.dt
            b = _total_field(seg.theta, phi_mid, values[idx], noise_axis)
            psi = step_unitary(b, grid.dt) @ psi
            t += grid.dt
            idx += 1
            out[idx] = [t, *bloch(psi)]
        kind = schedule.boundaries[k] if k < len(schedule.boundaries) else None
        if kind == "pulse":
            psi = _pulse_at_phi(phis[k] + 2.0 * math.pi * float(seg.l)) @ psi
            out[idx, 1:] = bloch(psi)
    if schedule.final == "pulse":
        psi = _pulse_at_phi(schedule.end_direction()[1]) @ psi
        out[idx, 1:] = bloch(psi)
    return out


def write_trace_csv(trace: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t", "bx", "by", "bz"])
        for i, row in enumerate(trace):
            w.writerow([i, *(repr(float(x)) for x in row)])
