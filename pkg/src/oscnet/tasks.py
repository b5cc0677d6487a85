"""Synthetic benchmark dataset generators.

Every generator is a pure function of its seed and parameters: each
sample draws from its own RNG stream keyed by (seed, sample index), so
datasets are reproducible and order-independent.  Inputs/targets are
[D, T] float arrays (videos are [H, W, C, T]); classification-style
tasks put the class in ``TaskSample.label``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeMismatchError
from .filters import (  # re-exported: the filtering task's oracle
    BiquadCascade,
    apply_filter,
    design_butterworth_bandpass,
    frequency_response,
)

__all__ = [
    "BiquadCascade",
    "Dataset",
    "TaskSample",
    "apply_filter",
    "design_butterworth_bandpass",
    "frequency_response",
    "gen_am_demodulation",
    "gen_filtering_dataset",
    "gen_moving_squares",
    "gen_operator_dataset",
    "gen_signal_generation",
    "gen_trajectory_dataset",
    "integrate_reflecting",
    "operator_signal",
    "operator_target",
    "render_square_video",
    "sample_rng",
    "TASK_GENERATORS",
]


@dataclass
class TaskSample:
    input: np.ndarray
    target: np.ndarray
    dt: float
    label: int = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.input.shape[-1] != self.target.shape[-1]:
            raise ShapeMismatchError(
                "input T=%d but target T=%d"
                % (self.input.shape[-1], self.target.shape[-1]))
        if not (np.all(np.isfinite(self.input))
                and np.all(np.isfinite(self.target))):
            raise ConfigError("sample contains non-finite values")


@dataclass
class Dataset:
    task: str
    dt: float
    samples: list
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)


def sample_rng(seed, index):
    """Independent per-sample stream keyed on (seed, index)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed),
                                                         int(index)]))


# ---------------------------------------------------------------------------
# signal generation: one-hot label -> pure sine
# ---------------------------------------------------------------------------

LABEL_FREQUENCIES_HZ = (1.0, 5.0, 7.0, 9.0)


def gen_signal_generation(seed, n_samples=40, duration=1.0, dt=0.01):
    """One-hot class inputs held constant; targets sin(2 pi f t) with
    f in {1, 5, 7, 9} Hz.  Classes cycle so every split sees them all."""
    T = int(round(duration / dt))
    t = np.arange(T) * dt
    samples = []
    for i in range(n_samples):
        label = i % 4
        x = np.zeros((4, T))
        x[label] = 1.0
        f = LABEL_FREQUENCIES_HZ[label]
        y = np.sin(2 * np.pi * f * t)[None, :]
        samples.append(TaskSample(input=x, target=y, dt=dt, label=None,
                                  meta={"label": label, "freq_hz": f,
                                        "duration": duration}))
    return Dataset(task="signal-generation", dt=dt, samples=samples,
                   meta={"seed": seed, "duration": duration,
                         "frequencies_hz": list(LABEL_FREQUENCIES_HZ)})


# ---------------------------------------------------------------------------
# amplitude demodulation
# ---------------------------------------------------------------------------

CARRIER_HZ = 8.0
N_MESSAGE_COMPONENTS = 5


def gen_am_demodulation(seed, n_samples=100, duration=1.0, dt=0.01):
    """Carrier (1 + m(t)) sin(2 pi 8 t) in, message m(t) out, where m is
    a sum of five unit sines with frequencies uniform in [1, 5] Hz."""
    T = int(round(duration / dt))
    t = np.arange(T) * dt
    samples = []
    for i in range(n_samples):
        rng = sample_rng(seed, i)
        freqs = rng.uniform(1.0, 5.0, size=N_MESSAGE_COMPONENTS)
        m = np.sin(2 * np.pi * freqs[:, None] * t[None, :]).sum(axis=0)
        M = (1.0 + m) * np.sin(2 * np.pi * CARRIER_HZ * t)
        samples.append(TaskSample(input=M[None, :], target=m[None, :],
                                  dt=dt,
                                  meta={"freqs_hz": freqs,
                                        "carrier_hz": CARRIER_HZ,
                                        "duration": duration}))
    return Dataset(task="am-demodulation", dt=dt, samples=samples,
                   meta={"seed": seed, "duration": duration,
                         "n_components": N_MESSAGE_COMPONENTS})


# ---------------------------------------------------------------------------
# band-pass filtering
# ---------------------------------------------------------------------------

def gen_filtering_dataset(seed, n_samples=100, duration=1.0, fs=1000.0,
                          n_components=10, noise_sigma=0.1):
    """Noisy multi-sinusoids in, band-passed (50-100 Hz, order 4) noisy
    signal out.  Component frequencies U(5, 300) Hz, amplitudes
    U(0.5, 1.5), phases U(0, 2 pi); noise N(0, sigma) on the input, and
    the target filters the input noise included."""
    dt = 1.0 / fs
    T = int(round(duration * fs))
    t = np.arange(T) * dt
    cascade = design_butterworth_bandpass(order=4, f_lo=50.0, f_hi=100.0,
                                          fs=fs)
    samples = []
    for i in range(n_samples):
        rng = sample_rng(seed, i)
        freqs = rng.uniform(5.0, 300.0, size=n_components)
        amps = rng.uniform(0.5, 1.5, size=n_components)
        phases = rng.uniform(0.0, 2 * np.pi, size=n_components)
        clean = (amps[:, None]
                 * np.sin(2 * np.pi * freqs[:, None] * t[None, :]
                          + phases[:, None])).sum(axis=0)
        noisy = clean + rng.normal(0.0, noise_sigma, size=T)
        target = apply_filter(cascade, noisy)
        samples.append(TaskSample(input=noisy[None, :],
                                  target=target[None, :], dt=dt,
                                  meta={"freqs_hz": freqs, "amps": amps,
                                        "phases": phases,
                                        "duration": duration}))
    return Dataset(task="filtering", dt=dt, samples=samples,
                   meta={"seed": seed, "fs": fs, "f_lo": 50.0, "f_hi": 100.0,
                         "order": 4, "noise_sigma": noise_sigma,
                         "n_components": n_components})


# ---------------------------------------------------------------------------
# integration / differentiation operators
# ---------------------------------------------------------------------------

N_OPERATOR_COMPONENTS = 5


def operator_signal(a, phi, omega, t):
    """Sum of a_i sin(omega_i t + phi_i)."""
    a, phi, omega = (np.asarray(v, dtype=float)[:, None]
                     for v in (a, phi, omega))
    return (a * np.sin(omega * t[None, :] + phi)).sum(axis=0)


def operator_target(kind, a, phi, omega, t):
    """Closed-form antiderivative or derivative of operator_signal."""
    a, phi, omega = (np.asarray(v, dtype=float)[:, None]
                     for v in (a, phi, omega))
    phase = omega * t[None, :] + phi
    if kind == "integrate":
        return (-(a / omega) * np.cos(phase)).sum(axis=0)
    return (a * omega * np.cos(phase)).sum(axis=0)


def gen_operator_dataset(kind, seed, n_samples=100, duration=10.0, dt=0.01):
    """Sums of sines in; the closed-form antiderivative (integrate) or
    derivative (differentiate) out.  a ~ N(0,1), phi ~ N(0, pi),
    omega ~ U(1, 5) rad/s."""
    if kind not in ("integrate", "differentiate"):
        raise ConfigError("kind must be integrate or differentiate, got %r"
                          % (kind,))
    T = int(round(duration / dt))
    t = np.arange(T) * dt
    samples = []
    for i in range(n_samples):
        rng = sample_rng(seed, i)
        a = rng.normal(0.0, 1.0, size=N_OPERATOR_COMPONENTS)
        phi = rng.normal(0.0, np.pi, size=N_OPERATOR_COMPONENTS)
        omega = rng.uniform(1.0, 5.0, size=N_OPERATOR_COMPONENTS)
        x = operator_signal(a, phi, omega, t)
        y = operator_target(kind, a, phi, omega, t)
        samples.append(TaskSample(input=x[None, :], target=y[None, :],
                                  dt=dt,
                                  meta={"a": a, "phi": phi, "omega": omega,
                                        "duration": duration}))
    return Dataset(task="operator-%s" % kind, dt=dt, samples=samples,
                   meta={"seed": seed, "kind": kind,
                         "n_components": N_OPERATOR_COMPONENTS})


# ---------------------------------------------------------------------------
# trajectory integration in a reflecting box
# ---------------------------------------------------------------------------

TRAJECTORY_DT = 1.0 / 128.0  # binary fraction: velocity*dt round-trips


def integrate_reflecting(start, velocities, dt, lo=-1.0, hi=1.0):
    """Integrate velocities from start, reflecting at the box walls.

    velocities: [D, T].  Returns positions [D, T] (position after each
    step); the effective per-step displacement differs from velocity*dt
    only on steps that bounce."""
    start = np.asarray(start, dtype=float)
    v = np.asarray(velocities, dtype=float)
    pos = np.empty_like(v)
    cur = start.copy()
    sign = np.ones_like(cur)
    for t in range(v.shape[1]):
        cur = cur + sign * v[:, t] * dt
        for d in range(cur.shape[0]):
            while cur[d] > hi or cur[d] < lo:
                if cur[d] > hi:
                    cur[d] = 2 * hi - cur[d]
                else:
                    cur[d] = 2 * lo - cur[d]
                sign[d] = -sign[d]
        pos[:, t] = cur
    return pos


def gen_trajectory_dataset(seed, n_samples=100, duration=10.0,
                           dt=TRAJECTORY_DT, smooth_sigma=20.0):
    """Smooth planar velocity profiles in, positions in [-1, 1]^2 out.

    Velocities are Gaussian-smoothed white noise (sub-2 Hz content at
    the default sigma).  Positions integrate the velocities from the
    box center with reflecting walls; the stored input is the effective
    velocity diff(position)/dt, so target steps equal velocity*dt
    bitwise (dt is a binary fraction)."""
    T = int(round(duration / dt))
    radius = int(4 * smooth_sigma)
    k = np.exp(-0.5 * (np.arange(-radius, radius + 1) / smooth_sigma) ** 2)
    k /= k.sum()
    samples = []
    for i in range(n_samples):
        rng = sample_rng(seed, i)
        raw = rng.normal(0.0, 1.0, size=(2, T + 2 * radius))
        smooth = np.stack([np.convolve(raw[d], k, mode="valid")
                           for d in range(2)])
        # rescale so trajectories roam a good part of the box
        v_raw = smooth * (0.25 / max(np.abs(smooth).max(), 1e-12))
        # every trajectory starts at the box center: absolute position is
        # then recoverable from the velocities alone, which is what makes
        # the integration task well-posed for a causal network
        start = np.zeros(2)
        pos = integrate_reflecting(start, v_raw, dt)
        padded = np.concatenate([start[:, None], pos], axis=1)
        v_eff = np.diff(padded, axis=1) / dt
        samples.append(TaskSample(input=v_eff, target=pos, dt=dt,
                                  meta={"start": start,
                                        "duration": duration}))
    return Dataset(task="trajectory", dt=dt, samples=samples,
                   meta={"seed": seed, "smooth_sigma": smooth_sigma,
                         "box": (-1.0, 1.0)})


# ---------------------------------------------------------------------------
# moving squares video
# ---------------------------------------------------------------------------

VIDEO_SIZE = 40
VIDEO_FRAMES = 16


def render_square_video(start, velocity, side, n_frames=VIDEO_FRAMES,
                        size=VIDEO_SIZE):
    """Rasterize a side x side unit-intensity square moving at constant
    velocity (pixels/frame), clipped at the borders.

    start/velocity are (row, col) floats; at frame t the square's
    top-left corner is round(start + velocity * t)."""
    frames = np.zeros((size, size, 1, n_frames))
    for t in range(n_frames):
        r0 = int(np.rint(start[0] + velocity[0] * t))
        c0 = int(np.rint(start[1] + velocity[1] * t))
        r1, c1 = r0 + side, c0 + side
        r0c, c0c = max(r0, 0), max(c0, 0)
        r1c, c1c = min(r1, size), min(c1, size)
        if r0c < r1c and c0c < c1c:
            frames[r0c:r1c, c0c:c1c, 0, t] = 1.0
    return frames


def gen_moving_squares(seed, n_videos=1000, size=VIDEO_SIZE,
                       n_frames=VIDEO_FRAMES):
    """One square per video: side in {2, 3, 4}, random start (fully in
    frame at t=0), direction uniform over 360 degrees, speed
    U(0.5, 1.5) px/frame.  Input frames 0..n-2, target frames 1..n-1;
    meta records an 8:2 train/val boundary."""
    samples = []
    for i in range(n_videos):
        rng = sample_rng(seed, i)
        side = int(rng.integers(2, 5))
        start = rng.uniform(0.0, size - side, size=2)
        angle = rng.uniform(0.0, 2 * np.pi)
        speed = rng.uniform(0.5, 1.5)
        velocity = speed * np.array([np.sin(angle), np.cos(angle)])
        frames = render_square_video(start, velocity, side,
                                     n_frames=n_frames, size=size)
        samples.append(TaskSample(input=frames[..., :-1],
                                  target=frames[..., 1:], dt=1.0,
                                  meta={"start": start, "velocity": velocity,
                                        "side": side}))
    return Dataset(task="moving-squares", dt=1.0, samples=samples,
                   meta={"seed": seed, "size": size, "n_frames": n_frames,
                         "n_train": int(round(0.8 * n_videos))})


TASK_GENERATORS = {
    "signal-generation": gen_signal_generation,
    "am-demodulation": gen_am_demodulation,
    "filtering": gen_filtering_dataset,
    "operator-integrate": lambda seed, **kw: gen_operator_dataset(
        "integrate", seed, **kw),
    "operator-differentiate": lambda seed, **kw: gen_operator_dataset(
        "differentiate", seed, **kw),
    "trajectory": gen_trajectory_dataset,
    "moving-squares": gen_moving_squares,
}
