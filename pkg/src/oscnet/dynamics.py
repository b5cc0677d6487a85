"""Hopf oscillator dynamics on plain numpy arrays.

This module is the non-autodiff half of the oscillator implementation:
step functions, rollout helpers, a fine-step reference integrator and
the driven-oscillator resonance sweep.  The taped layers reimplement
the same update equations through the autodiff primitives; tests pin
the two paths against each other, so any edit here must be mirrored
there.

The supercritical Hopf unit evolves as

    dz/dt = z (mu + i omega + beta |z|^2) + kappa I(t)        (resonator)

or, in polar coordinates (r, theta) for the modulation modes,

    dr/dt     = mu(t) r + beta r^3        mu(t) = mu0 + kappa Re(z_in)
    dtheta/dt = omega                                    (amplitude mod)

    dr/dt     = mu0 r + beta r^3
    dtheta/dt = omega + kappa Re(z_in)                   (frequency mod)

integrated with forward Euler at a fixed dt.  The resonator mode is
integrated in Cartesian form, which is the same dynamics as the polar
form without the 1/r singularity.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DivergenceError

# positivity floors for the polar modes; clamp events are counted by the
# taped layers and surfaced in training logs
R_FLOOR = 1e-6
MU_FLOOR = 1e-6

MODES = ("resonator", "amplitude_mod", "frequency_mod")


@dataclass
class HopfLayerConfig:
    """Per-layer oscillator settings.

    omega_init_range is in Hz; internally every frequency is angular
    (rad/s).  theta_init_seed fixes both the initial phases and the
    frequency draw, so a config fully determines the layer.
    input_range declares the range the real part of the input can take;
    amplitude modulation uses it to verify mu(t) stays positive.
    """

    width: int
    mode: str = "resonator"
    mu0: float = 1.0
    beta: float = -1.0
    kappa: float = 1.0
    omega_init_range: tuple = (1.0, 10.0)
    trainable_freq: bool = False
    dt: float = 0.01
    r_init: float = 0.1
    theta_init_seed: int = 0
    input_range: tuple = (-1.0, 1.0)

    def __post_init__(self):
        problems = []
        if int(self.width) != self.width or self.width < 0:
            problems.append("width must be a non-negative integer, got %r"
                            % (self.width,))
        if self.mode not in MODES:
            problems.append("mode must be one of %s, got %r"
                            % (", ".join(MODES), self.mode))
        if self.mu0 < 0:
            problems.append("mu0 must be >= 0 (critical or supercritical "
                            "regime), got %g" % self.mu0)
        if self.beta >= 0:
            problems.append("beta must be < 0 so the limit cycle is stable, "
                            "got %g" % self.beta)
        f_lo, f_hi = self.omega_init_range
        if not (0 < f_lo <= f_hi):
            problems.append("omega_init_range must satisfy 0 < f_lo <= f_hi, "
                            "got (%g, %g)" % (f_lo, f_hi))
        if self.dt <= 0:
            problems.append("dt must be > 0, got %g" % self.dt)
        elif self.dt * 2.0 * np.pi * f_hi >= 0.5:
            problems.append(
                "dt too large for the frequency range: dt*2*pi*f_hi = %.3f "
                ">= 0.5 rad per Euler step" % (self.dt * 2 * np.pi * f_hi))
        if self.r_init <= 0:
            problems.append("r_init must be > 0, got %g" % self.r_init)
        lo, hi = self.input_range
        if lo > hi:
            problems.append("input_range lo > hi: (%g, %g)" % (lo, hi))
        if self.mode == "amplitude_mod":
            worst = min(self.kappa * lo, self.kappa * hi)
            if self.mu0 + worst <= 0:
                problems.append(
                    "amplitude modulation needs mu0 + kappa*Re(z_in) > 0 over "
                    "the declared input range [%g, %g]; worst case is %g"
                    % (lo, hi, self.mu0 + worst))
        if problems:
            raise ConfigError(problems)
        adv = self.dt * 2.0 * np.pi * f_hi
        if adv > 0.2:
            warnings.warn(
                "Euler angular advance per step is %.3f rad (> 0.2); "
                "integration will be coarse for the fastest oscillators"
                % adv, RuntimeWarning, stacklevel=2)


def _seed_pair(seed):
    # one declared seed, two independent streams (phases, frequencies)
    return np.random.SeedSequence(seed).spawn(2)


def initial_phases(config, n=None):
    """theta(0) ~ uniform[0, 2pi), deterministic in theta_init_seed."""
    n = config.width if n is None else n
    ss = _seed_pair(config.theta_init_seed)[0]
    return np.random.default_rng(ss).uniform(0.0, 2.0 * np.pi, n)


def initial_frequencies(config, n=None):
    """Natural frequencies in rad/s, evenly spaced over omega_init_range
    (Hz).

    Even spacing keeps every frequency in the band within half a grid
    step of some oscillator; with untrained frequencies this coverage is
    what lets a bank of n oscillators reproduce any in-band tone.
    """
    n = config.width if n is None else n
    f_lo, f_hi = config.omega_init_range
    if n == 1:
        return 2.0 * np.pi * np.array([0.5 * (f_lo + f_hi)])
    return 2.0 * np.pi * np.linspace(f_lo, f_hi, n)


@dataclass
class OscillatorState:
    """Dynamical state of one layer of oscillators.

    Resonator mode uses the Cartesian z; the modulation modes use
    (r, theta).  omega is carried along because it is fixed over a
    rollout; step counts Euler steps taken (for error reporting).
    """

    omega: np.ndarray
    z: np.ndarray = None
    r: np.ndarray = None
    theta: np.ndarray = None
    step: int = 0


def init_state(config):
    theta0 = initial_phases(config)
    omega = initial_frequencies(config)
    if config.mode == "resonator":
        return OscillatorState(omega=omega,
                               z=config.r_init * np.exp(1j * theta0))
    return OscillatorState(omega=omega,
                           r=np.full(config.width, float(config.r_init)),
                           theta=theta0)


def _check_finite(arrs, step):
    for a in arrs:
        bad = ~np.isfinite(a)
        if bad.any():
            idx = int(np.argwhere(bad)[0][0])
            raise DivergenceError(
                "oscillator %d produced a non-finite state at step %d"
                % (idx, step))


def hopf_step_resonator(state, z_in, config, dt=None):
    """One Euler step of the additively forced (resonator) unit.

    dt=None takes config.dt; passing dt explicitly is for diagnostics
    and reference integration (dt=0 is the identity).
    """
    dt = config.dt if dt is None else float(dt)
    z = state.z
    mag2 = z.real * z.real + z.imag * z.imag
    dz = z * (config.mu0 + config.beta * mag2 + 1j * state.omega) \
        + config.kappa * z_in
    z_next = z + dt * dz
    _check_finite((z_next.real, z_next.imag), state.step + 1)
    return OscillatorState(omega=state.omega, z=z_next, step=state.step + 1)


def hopf_step_am(state, z_in, config, dt=None):
    """One Euler step with the input modulating the bifurcation
    parameter: mu(t) = mu0 + kappa*Re(z_in), clamped below at MU_FLOOR."""
    dt = config.dt if dt is None else float(dt)
    x = np.real(z_in)
    mu_t = np.maximum(config.mu0 + config.kappa * x, MU_FLOOR)
    r, th = state.r, state.theta
    r_next = np.maximum(r + dt * (mu_t * r + config.beta * (r * r * r)),
                        R_FLOOR)
    th_next = th + dt * state.omega
    _check_finite((r_next, th_next), state.step + 1)
    return OscillatorState(omega=state.omega, r=r_next, theta=th_next,
                           step=state.step + 1)


def hopf_step_fm(state, z_in, config, dt=None):
    """One Euler step with the input shifting the instantaneous
    frequency: dtheta/dt = omega + kappa*Re(z_in)."""
    dt = config.dt if dt is None else float(dt)
    r, th = state.r, state.theta
    r_next = np.maximum(
        r + dt * (config.mu0 * r + config.beta * (r * r * r)), R_FLOOR)
    th_next = th + dt * (state.omega + config.kappa * np.real(z_in))
    _check_finite((r_next, th_next), state.step + 1)
    return OscillatorState(omega=state.omega, r=r_next, theta=th_next,
                           step=state.step + 1)


_STEP = {
    "resonator": hopf_step_resonator,
    "amplitude_mod": hopf_step_am,
    "frequency_mod": hopf_step_fm,
}


def state_output(state):
    """Complex per-oscillator output: z, or r e^{i theta} in polar form."""
    if state.z is not None:
        return state.z
    return state.r * np.exp(1j * state.theta)


def simulate(config, inputs, n_steps=None, state=None):
    """Roll a layer of oscillators over an input sequence.

    inputs is either a [width, T] array (complex or real) or a callable
    t_seconds -> [width] array (n_steps then required).  Returns the
    post-step complex outputs, [width, T].
    """
    step = _STEP[config.mode]
    if callable(inputs):
        if n_steps is None:
            raise ValueError("n_steps is required with a callable input")
        get = lambda k: inputs(k * config.dt)
        T = int(n_steps)
    else:
        inputs = np.asarray(inputs)
        if inputs.ndim != 2 or inputs.shape[0] != config.width:
            raise ConfigError(
                "input sequence must be [width=%d, T], got %s"
                % (config.width, (inputs.shape,)))
        get = lambda k: inputs[:, k]
        T = inputs.shape[1]
    if state is None:
        state = init_state(config)
    out = np.empty((config.width, T), dtype=complex)
    for k in range(T):
        state = step(state, get(k), config)
        out[:, k] = state_output(state)
    return out


def reference_simulate(config, input_fn, n_steps, refine=100):
    """Integrate with dt/refine substeps, reporting at the coarse grid.

    The input callable is sampled at every substep, so this approximates
    the continuous-time solution; Euler consistency tests compare coarse
    rollouts against it.
    """
    step = _STEP[config.mode]
    dt_f = config.dt / refine
    state = init_state(config)
    out = np.empty((config.width, n_steps), dtype=complex)
    for k in range(n_steps):
        for j in range(refine):
            t = k * config.dt + j * dt_f
            state = step(state, input_fn(t), config, dt=dt_f)
        out[:, k] = state_output(state)
    return out


def resonance_sweep(mu0, beta, force, domega_grid, dt=1e-3, n_steps=40000,
                    omega_base=2.0 * np.pi, r0=0.1, theta0=0.0,
                    lock_tol=0.1, settle_tol=1e-4):
    """Tuning curve of a driven oscillator over a frequency-difference grid.

    One oscillator per grid point, natural frequency omega_base + Omega,
    all driven by force*exp(i*omega_base*t).  Reports, per grid point,
    the steady amplitude (mean |z| over the final 20%), the mean relative
    phase psi = angle(z) - drive phase, whether the phase locked (psi
    range over the final 20% below lock_tol), whether it slipped (total
    unwrapped psi drift beyond the first 10% exceeds 2pi), whether the
    amplitude settled (|z| range over the final 10% below settle_tol)
    and whether integration diverged (row flagged, sweep continues).
    """
    dom = np.atleast_1d(np.asarray(domega_grid, dtype=float))
    n = dom.size
    omega = omega_base + dom
    z = np.full(n, r0 * np.exp(1j * theta0), dtype=complex)
    amp = np.empty((n, n_steps))
    psi = np.empty((n, n_steps))
    diverged = np.zeros(n, dtype=bool)
    with np.errstate(invalid="ignore", over="ignore"):
        for k in range(n_steps):
            t = k * dt
            z_in = force * np.exp(1j * omega_base * t)
            mag2 = z.real * z.real + z.imag * z.imag
            z = z + dt * (z * (mu0 + beta * mag2 + 1j * omega) + z_in)
            bad = ~(np.isfinite(z.real) & np.isfinite(z.imag))
            if bad.any():
                fresh = bad & ~diverged
                diverged |= bad
                z[fresh] = np.nan
            t_post = (k + 1) * dt
            amp[:, k] = np.abs(z)
            # wrapped relative phase; unwrapped after the loop
            psi[:, k] = np.angle(z * np.exp(-1j * omega_base * t_post))

    tail20 = slice(int(0.8 * n_steps), None)
    tail10 = slice(int(0.9 * n_steps), None)
    head = int(0.1 * n_steps)
    with np.errstate(invalid="ignore"):
        psi_u = np.unwrap(psi, axis=1)
        amplitude = amp[:, tail20].mean(axis=1)
        psi_tail = psi_u[:, tail20]
        psi_mean = np.angle(np.exp(1j * psi_tail.mean(axis=1)))
        locked = np.ptp(psi_tail, axis=1) < lock_tol
        slipped = np.abs(psi_u[:, -1] - psi_u[:, head]) > 2.0 * np.pi
        settled = np.ptp(amp[:, tail10], axis=1) < settle_tol
    locked &= ~diverged
    return {
        "domega": dom,
        "amplitude": amplitude,
        "psi_mean": psi_mean,
        "locked": locked,
        "slipped": slipped,
        "settled": settled,
        "diverged": diverged,
    }
