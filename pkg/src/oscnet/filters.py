"""Butterworth band-pass design and IIR filtering, from first principles.

The design chain is the classical one: analog low-pass prototype poles
on the unit half-circle, low-pass to band-pass substitution
s -> (s^2 + w0^2) / (BW s), then the bilinear transform with the band
edges pre-warped so the digital -3 dB points land exactly on f_lo and
f_hi.  Poles are grouped into conjugate pairs, giving real second-order
sections; every section carries one zero at z=1 and one at z=-1.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class BiquadCascade:
    """Second-order sections (b0, b1, b2, a1, a2) with a shared gain.

    H(z) = gain * prod (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
    """

    sections: list
    gain: float
    fs: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        problems = []
        for i, (b0, b1, b2, a1, a2) in enumerate(self.sections):
            roots = np.roots([1.0, a1, a2])
            if np.any(np.abs(roots) >= 1.0):
                problems.append(
                    "section %d has a pole on or outside the unit circle "
                    "(|p| = %.6f)" % (i, float(np.max(np.abs(roots)))))
        if problems:
            raise ConfigError(problems)


def _prototype_poles(order):
    """Left-half-plane poles of the unit-cutoff analog low-pass."""
    k = np.arange(1, order + 1)
    return np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))


def _bandpass_pole_pair(p, w0, bw):
    """The two band-pass poles a prototype pole maps to under
    s -> (s^2 + w0^2) / (bw s), i.e. the roots of s^2 - p bw s + w0^2."""
    half = 0.5 * p * bw
    d = np.sqrt(half * half - w0 * w0)
    return half + d, half - d


def _bilinear(s, fs):
    return (1.0 + s / (2.0 * fs)) / (1.0 - s / (2.0 * fs))


def design_butterworth_bandpass(order=4, f_lo=50.0, f_hi=100.0, fs=1000.0):
    """Digital Butterworth band-pass as a cascade of stable biquads.

    The edges f_lo/f_hi (Hz) are the exact -3 dB frequencies of the
    result; gain is normalized to 1 at the warped center frequency.
    """
    problems = []
    if order < 1:
        problems.append("order must be >= 1, got %r" % (order,))
    if not (0 < f_lo < f_hi):
        problems.append("band edges must satisfy 0 < f_lo < f_hi, got "
                        "(%g, %g)" % (f_lo, f_hi))
    if f_hi >= fs / 2:
        problems.append("f_hi must stay below the Nyquist rate %g, got %g"
                        % (fs / 2, f_hi))
    if problems:
        raise ConfigError(problems)

    # pre-warp so the bilinear transform lands the edges exactly
    w1 = 2.0 * fs * np.tan(np.pi * f_lo / fs)
    w2 = 2.0 * fs * np.tan(np.pi * f_hi / fs)
    w0 = np.sqrt(w1 * w2)
    bw = w2 - w1

    # each analog pole pair becomes one real-coefficient digital section
    pole_pairs = []
    for p in _prototype_poles(order):
        if p.imag > 1e-12:
            s_a, s_b = _bandpass_pole_pair(p, w0, bw)
            pole_pairs.append((s_a, np.conj(s_a)))
            pole_pairs.append((s_b, np.conj(s_b)))
        elif abs(p.imag) <= 1e-12:
            s_a, s_b = _bandpass_pole_pair(complex(p.real, 0.0), w0, bw)
            pole_pairs.append((s_a, s_b))
        # conjugate prototype poles are implied by their partners

    wc = 2.0 * np.arctan(w0 / (2.0 * fs))  # digital center, rad/sample
    zc = np.exp(1j * wc)
    sections = []
    gain = 1.0
    for s_a, s_b in pole_pairs:
        z_a, z_b = _bilinear(s_a, fs), _bilinear(s_b, fs)
        a1 = float(-(z_a + z_b).real)
        a2 = float((z_a * z_b).real)
        # zeros at z = +1 and z = -1: numerator 1 - z^-2
        num = 1.0 - zc ** -2
        den = 1.0 + a1 * zc ** -1 + a2 * zc ** -2
        gain /= abs(num / den)
        sections.append((1.0, 0.0, -1.0, a1, a2))

    meta = {"order": order, "f_lo": f_lo, "f_hi": f_hi, "fs": fs}
    return BiquadCascade(sections=sections, gain=float(gain), fs=float(fs),
                         meta=meta)


def apply_filter(cascade, x):
    """Run the cascade over a real sequence, direct form II transposed,
    zero initial conditions."""
    y = np.asarray(x, dtype=float).copy()
    for b0, b1, b2, a1, a2 in cascade.sections:
        s1 = 0.0
        s2 = 0.0
        for n in range(y.shape[0]):
            xn = y[n]
            yn = b0 * xn + s1
            s1 = b1 * xn - a1 * yn + s2
            s2 = b2 * xn - a2 * yn
            y[n] = yn
    return y * cascade.gain


def frequency_response(cascade, freqs, fs=None):
    """Complex H(e^{i 2 pi f / fs}) at the given frequencies in Hz."""
    if fs is None:
        fs = cascade.fs
    z = np.exp(2j * np.pi * np.asarray(freqs, dtype=float) / fs)
    h = np.full(z.shape, cascade.gain, dtype=complex)
    for b0, b1, b2, a1, a2 in cascade.sections:
        h *= (b0 + b1 / z + b2 / z ** 2) / (1.0 + a1 / z + a2 / z ** 2)
    return h
