"""Network layers: complex dense stages, Hopf oscillator layers and the
conv-plus-oscillator-grid block.

Forward passes are built from the autodiff primitives, so running them
inside a Tape records the entire unroll; one backward() produces BPTT
gradients, including d(loss)/d(omega) when frequencies are trainable.
The oscillator update equations here must stay in lockstep with the
plain-array versions in dynamics.py; the test suite pins the two paths
against each other.
"""

import numpy as np

from . import tensor as tz
from .dynamics import (
    MU_FLOOR,
    R_FLOOR,
    HopfLayerConfig,
    initial_frequencies,
    initial_phases,
)
from .errors import ConfigError, DivergenceError, ShapeMismatchError
from .tensor import ComplexTensor, Parameter

__all__ = [
    "ComplexDense",
    "ComplexConv2D",
    "FrequencyMap2D",
    "HopfLayer",
    "Network",
    "OCNNBlock",
    "complex_dense_forward",
    "hopf_layer_forward",
    "init_frequency_grid",
    "ocnn_block_forward",
]


def _value(x):
    return x.value if isinstance(x, Parameter) else x


def _check_finite(arrs, step):
    for a in arrs:
        if np.all(np.isfinite(a)):
            continue
        idx = int(np.argwhere(~np.isfinite(a))[0][0])
        raise DivergenceError(
            "oscillator %d produced a non-finite state at step %d"
            % (idx, step))


# ---------------------------------------------------------------------------
# dense stage
# ---------------------------------------------------------------------------

def complex_dense_forward(z_in, W, b=None, f="identity"):
    """split_activation(W @ z + b, f), pointwise in time.

    z_in may be [n], [n, T] or [n, B, T]; the bias broadcasts over the
    trailing axes.  f may also be "identity" (no activation).
    """
    z = _value(z_in)
    W = _value(W)
    out = tz.complex_matmul(W, z)
    if b is not None:
        b = _value(b)
        m = W.shape[0]
        if b.size != m:
            raise ShapeMismatchError(
                "bias has %d entries for %d output units" % (b.size, m))
        out = tz.add(out, tz.reshape(b, (m,) + (1,) * (z.ndim - 1)))
    if f in (None, "identity"):
        return out
    return tz.split_activation(out, f)


def uniform_complex(rng, shape, scale):
    """Zero-mean uniform init, re and im parts independent."""
    return ComplexTensor(rng.uniform(-scale, scale, shape),
                         rng.uniform(-scale, scale, shape))


class ComplexDense:
    """Fully connected complex layer with a split activation.

    Weights are zero-mean uniform scaled by 1/sqrt(fan_in) per part;
    the bias starts at 0+0i.
    """

    def __init__(self, n_in, n_out, activation="relu", seed=0, name="dense"):
        rng = np.random.default_rng(seed)
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self.activation = activation
        self.name = name
        scale = 1.0 / np.sqrt(max(self.n_in, 1))
        self.W = Parameter(uniform_complex(rng, (self.n_out, self.n_in),
                                           scale), name=name + ".W")
        self.b = Parameter(ComplexTensor(np.zeros(self.n_out)),
                           name=name + ".b")

    def parameters(self):
        return [self.W, self.b]

    def forward(self, z):
        return complex_dense_forward(z, self.W, self.b, self.activation)


# ---------------------------------------------------------------------------
# oscillator layer
# ---------------------------------------------------------------------------

def _unroll(z_in, config, omega, theta0):
    """Shared Euler unroll over the trailing time axis.

    z_in: ComplexTensor [w, T] or [w, B, T]; omega: real tensor [w]
    (possibly trainable); theta0: plain array [w].  Returns the
    post-step complex outputs with the same leading shape as z_in.
    """
    w = config.width
    T = z_in.shape[-1]
    state_shape = z_in.shape[:-1]
    batched = len(state_shape) == 2
    om = tz.reshape(omega, (w, 1)) if batched else omega
    th0 = theta0[:, None] if batched else theta0
    th0 = np.broadcast_to(th0, state_shape)

    dt, kappa, mu0, beta = config.dt, config.kappa, config.mu0, config.beta
    outs = []
    if config.mode == "resonator":
        z0 = config.r_init * np.exp(1j * th0)
        z = ComplexTensor(z0.real.copy(), z0.imag.copy())
        for t in range(T):
            zin_t = tz.slice_time(z_in, t)
            growth = tz.affine_real(tz.abs2(z), beta, mu0)
            coeff = tz.compose(growth, om)
            rhs = tz.add_scaled(tz.cmul(z, coeff), zin_t, kappa)
            z = tz.add_scaled(z, rhs, dt)
            _check_finite((z.re, z.im), t + 1)
            outs.append(z)
        return tz.stack_time(outs)

    x_seq = tz.real(z_in)
    r = ComplexTensor(np.full(state_shape, float(config.r_init)))
    th = ComplexTensor(th0.copy())
    for t in range(T):
        x = tz.slice_time(x_seq, t)
        r3 = tz.cmul(tz.cmul(r, r), r)
        if config.mode == "amplitude_mod":
            mu_t = tz.clamp_min(tz.affine_real(x, kappa, mu0), MU_FLOOR,
                                stat="mu_clamp_events")
            drdt = tz.add_scaled(tz.cmul(mu_t, r), r3, beta)
            th = tz.add_scaled(th, om, dt)
        else:  # frequency_mod
            drdt = tz.add_scaled(tz.scale(r, mu0), r3, beta)
            rate = tz.add(om, tz.scale(x, kappa))
            th = tz.add_scaled(th, rate, dt)
        r = tz.clamp_min(tz.add_scaled(r, drdt, dt), R_FLOOR,
                         stat="r_clamp_events")
        _check_finite((r.re, th.re), t + 1)
        outs.append(tz.compose(tz.cmul(r, tz.cos_r(th)),
                               tz.cmul(r, tz.sin_r(th))))
    return tz.stack_time(outs)


def hopf_layer_forward(z_in_seq, config, params):
    """Drive a layer of oscillators with a time-major input sequence.

    z_in_seq: [width, T] or [width, B, T].  params must carry "omega",
    the per-oscillator angular frequencies (Parameter or tensor, [width]).
    Initial state: r = r_init, theta ~ uniform[0, 2pi) from
    theta_init_seed.  Emits the post-step state at every t.
    """
    z_in = _value(z_in_seq)
    if z_in.ndim not in (2, 3) or z_in.shape[0] != config.width:
        raise ShapeMismatchError(
            "oscillator input must be [width=%d, T] or [width, B, T], "
            "got %s" % (config.width, (z_in.shape,)))
    if z_in.shape[-1] == 0:
        raise ShapeMismatchError("empty input sequence (T = 0)")
    omega = _value(params["omega"])
    if omega.size != config.width:
        raise ShapeMismatchError(
            "omega has %d entries for width %d" % (omega.size, config.width))
    theta0 = initial_phases(config)
    return _unroll(z_in, config, omega, theta0)


class HopfLayer:
    """One layer of uncoupled Hopf oscillators, one per input channel.

    omega is a Parameter (rad/s), trainable when config.trainable_freq;
    it is set at construction to evenly cover the configured Hz range.
    """

    def __init__(self, config, name="hopf"):
        self.config = config
        self.name = name
        self.omega = Parameter(ComplexTensor(initial_frequencies(config)),
                               name=name + ".omega",
                               trainable=config.trainable_freq)

    def parameters(self):
        return [self.omega]

    def forward(self, z):
        return hopf_layer_forward(z, self.config, {"omega": self.omega})


# ---------------------------------------------------------------------------
# frequency maps and the conv + oscillator grid block
# ---------------------------------------------------------------------------

class FrequencyMap2D:
    """Spatially smoothed per-oscillator natural frequencies (Hz)."""

    def __init__(self, grid, seed):
        self.grid = np.asarray(grid, dtype=float)
        self.seed = int(seed)

    @property
    def shape(self):
        return self.grid.shape


# 3x3 Gaussian, sigma = 1, normalized to sum 1
_BLUR_1D = np.exp(-0.5 * np.arange(-1.0, 2.0) ** 2)
_BLUR = np.outer(_BLUR_1D, _BLUR_1D)
_BLUR /= _BLUR.sum()


def init_frequency_grid(shape, frange, seed):
    """Uniform frequency samples smoothed with a 3x3 Gaussian blur.

    shape is (H, W, C); frange is (f_lo, f_hi) in Hz.  Borders are
    reflect-padded, so the normalized kernel keeps every output inside
    [f_lo, f_hi].
    """
    H, W, C = (int(s) for s in shape)
    if H <= 0 or W <= 0 or C <= 0:
        raise ConfigError("frequency grid dimensions must be positive, "
                          "got %s" % (tuple(shape),))
    f_lo, f_hi = frange
    if not (0 < f_lo <= f_hi):
        raise ConfigError("frequency range must satisfy 0 < f_lo <= f_hi, "
                          "got (%g, %g)" % (f_lo, f_hi))
    rng = np.random.default_rng(seed)
    raw = rng.uniform(f_lo, f_hi, (H, W, C))
    padded = np.pad(raw, ((1, 1), (1, 1), (0, 0)), mode="reflect")
    grid = np.zeros_like(raw)
    for u in range(3):
        for v in range(3):
            grid += _BLUR[u, v] * padded[u:u + H, v:v + W]
    return FrequencyMap2D(grid, seed)


class ComplexConv2D:
    """Complex 2-d convolution ('same', stride 1) with bias and split
    activation."""

    def __init__(self, in_channels, out_channels, kernel_size=3,
                 activation="relu", seed=0, name="conv"):
        rng = np.random.default_rng(seed)
        kh = kw = int(kernel_size)
        self.activation = activation
        self.name = name
        scale = 1.0 / np.sqrt(kh * kw * in_channels)
        self.kernel = Parameter(
            uniform_complex(rng, (kh, kw, in_channels, out_channels), scale),
            name=name + ".kernel")
        self.bias = Parameter(ComplexTensor(np.zeros(out_channels)),
                              name=name + ".bias")

    def parameters(self):
        return [self.kernel, self.bias]

    def forward(self, x):
        x = _value(x)
        trailing = None
        if x.ndim == 5:  # [H, W, Cin, B, T] -> fold batch and time
            H, W, cin, B, T = x.shape
            trailing = (B, T)
            x = tz.reshape(x, (H, W, cin, B * T))
        out = tz.conv2d(x, self.kernel.value)
        cout = self.kernel.shape[3]
        bias_shape = (1, 1, cout) + (1,) * (out.ndim - 3)
        out = tz.add(out, tz.reshape(self.bias.value, bias_shape))
        if self.activation not in (None, "identity"):
            out = tz.split_activation(out, self.activation)
        if trailing is not None:
            out = tz.reshape(out, (H, W, cout) + trailing)
        return out


def ocnn_block_forward(frames, conv_kernels, hopf_config, freq_map,
                       bias=None, omega=None, activation="relu"):
    """Convolve each frame, then drive a same-shaped oscillator grid.

    frames: [H, W, Cin, T] or [H, W, Cin, B, T].  conv_kernels:
    [kh, kw, Cin, Cout] complex kernels.  Every feature-map cell feeds
    exactly one oscillator (resonator input by default; the mode comes
    from hopf_config).  freq_map must match the post-convolution shape
    (H, W, Cout); when omega (rad/s, same shape) is given it overrides
    the map's values, which is how trainable frequencies enter.
    Returns the oscillator states, [H, W, Cout(, B), T].
    """
    x = _value(frames)
    k = _value(conv_kernels)
    if x.ndim not in (4, 5):
        raise ShapeMismatchError(
            "frames must be [H, W, Cin, T] or [H, W, Cin, B, T], got %s"
            % (x.shape,))
    H, W, cin = x.shape[:3]
    kh, kw, kcin, cout = k.shape
    if kcin != cin:
        raise ShapeMismatchError(
            "frames carry %d channels but kernels expect %d" % (cin, kcin))
    if freq_map.shape != (H, W, cout):
        raise ShapeMismatchError(
            "frequency map %s does not match feature maps %s"
            % (freq_map.shape, (H, W, cout)))
    n = H * W * cout
    if hopf_config.width != n:
        raise ConfigError(
            "oscillator grid needs width %d (= %dx%dx%d), config says %d"
            % (n, H, W, cout, hopf_config.width))

    batched = x.ndim == 5
    T = x.shape[-1]
    if T == 0:
        raise ShapeMismatchError("empty input sequence (T = 0)")
    B = x.shape[3] if batched else None

    flat_in = tz.reshape(x, (H, W, cin, (B * T) if batched else T))
    feat = tz.conv2d(flat_in, k)
    if bias is not None:
        bias = _value(bias)
        feat = tz.add(feat, tz.reshape(bias, (1, 1, cout, 1)))
    if activation not in (None, "identity"):
        feat = tz.split_activation(feat, activation)
    seq_shape = (n, B, T) if batched else (n, T)
    seq = tz.reshape(feat, seq_shape)

    if omega is None:
        om = ComplexTensor(2.0 * np.pi * freq_map.grid.reshape(n))
    else:
        om = tz.reshape(_value(omega), (n,))
    theta0 = initial_phases(hopf_config, n)
    out = _unroll(seq, hopf_config, om, theta0)
    out_shape = (H, W, cout) + ((B, T) if batched else (T,))
    return tz.reshape(out, out_shape)


class OCNNBlock:
    """Conv stage + one-to-one oscillator grid over the feature maps.

    The oscillator arrangement mirrors the feature maps: natural
    frequencies come from a blurred 2-d map (Hz), flattened in C order,
    and initial phases from the layer's theta seed over the same order.
    """

    def __init__(self, height, width, in_channels, out_channels, hopf_config,
                 kernel_size=3, activation="relu", freq_seed=None, seed=0,
                 name="ocnn"):
        n = height * width * out_channels
        if hopf_config.width != n:
            raise ConfigError(
                "hopf_config.width must equal H*W*Cout = %d, got %d"
                % (n, hopf_config.width))
        self.shape = (height, width, out_channels)
        self.config = hopf_config
        self.activation = activation
        self.name = name
        rng = np.random.default_rng(seed)
        kh = kw = int(kernel_size)
        scale = 1.0 / np.sqrt(kh * kw * in_channels)
        self.kernel = Parameter(
            uniform_complex(rng, (kh, kw, in_channels, out_channels), scale),
            name=name + ".kernel")
        self.bias = Parameter(ComplexTensor(np.zeros(out_channels)),
                              name=name + ".bias")
        if freq_seed is None:
            freq_seed = hopf_config.theta_init_seed
        self.freq_map = init_frequency_grid(
            self.shape, hopf_config.omega_init_range, freq_seed)
        self.omega = Parameter(
            ComplexTensor(2.0 * np.pi * self.freq_map.grid),
            name=name + ".omega", trainable=hopf_config.trainable_freq)

    def parameters(self):
        return [self.kernel, self.bias, self.omega]

    def forward(self, frames):
        return ocnn_block_forward(frames, self.kernel, self.config,
                                  self.freq_map, bias=self.bias,
                                  omega=self.omega,
                                  activation=self.activation)


class Network:
    """A plain sequential stack of layers."""

    def __init__(self, layers):
        self.layers = list(layers)

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x
