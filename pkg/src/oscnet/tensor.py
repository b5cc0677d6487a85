"""Complex tensors with reverse-mode automatic differentiation.

A ComplexTensor stores a complex array as a pair of float64 arrays
(re, im).  Gradients follow the R^2n convention: for a real scalar
loss L and a complex value z = x + iy, the gradient is the pair
(dL/dx, dL/dy) of independent partials.  No Wirtinger calculus is
exposed; every optimizer update downstream operates on the real
coordinates directly.

Operations are recorded on a Tape (one per forward pass).  Each
primitive appends a closure that propagates adjoints from its output
to its inputs; a single reversed sweep over the node list is a full
backward pass because nodes are appended in execution order, which is
already topological.

Tensors are treated as immutable once they participate in an op.
Nothing enforces this, but mutating .re/.im of a recorded tensor will
silently corrupt gradients.
"""

import threading

import numpy as np

from .errors import NumericalCheckError, ShapeMismatchError, TapeUsageError


class ComplexTensor:
    """Pair of same-shape float64 arrays acting as one complex array.

    Parameters
    ----------
    re : array_like
        Real part.  Coerced to float64.
    im : array_like, optional
        Imaginary part, same shape as ``re``.  Defaults to zeros, so a
        real-valued tensor is simply one with ``im`` identically zero.
    track_grad : bool
        Whether ops consuming this tensor should be recorded on the
        active tape.
    """

    __slots__ = ("re", "im", "track_grad", "_grad", "_tape")

    def __init__(self, re, im=None, track_grad=False):
        re = np.asarray(re, dtype=np.float64)
        if im is None:
            im = np.zeros_like(re)
        else:
            im = np.asarray(im, dtype=np.float64)
            if im.shape != re.shape:
                raise ShapeMismatchError(
                    "re has shape %s but im has shape %s" % (re.shape, im.shape)
                )
        self.re = re
        self.im = im
        self.track_grad = bool(track_grad)
        self._grad = None
        self._tape = None

    @classmethod
    def from_complex(cls, z, track_grad=False):
        z = np.asarray(z)
        return cls(z.real.astype(np.float64), z.imag.astype(np.float64),
                   track_grad=track_grad)

    def to_complex(self):
        return self.re + 1j * self.im

    @property
    def shape(self):
        return self.re.shape

    @property
    def ndim(self):
        return self.re.ndim

    @property
    def size(self):
        return self.re.size

    @property
    def grad(self):
        """Accumulated gradient as a (d/dre, d/dim) pair, or None."""
        if self._grad is None:
            return None
        return ComplexTensor(self._grad[0], self._grad[1])

    def grad_pair(self):
        """Gradient buffers, allocating zeros on first access."""
        if self._grad is None:
            self._grad = [np.zeros(self.re.shape), np.zeros(self.re.shape)]
        return self._grad

    def zero_grad(self):
        self._grad = None

    def detach(self):
        return ComplexTensor(self.re, self.im, track_grad=False)

    def __repr__(self):
        return "ComplexTensor(shape=%s, track_grad=%s)" % (
            self.shape, self.track_grad)


def as_tensor(x):
    """Coerce an array (real or complex) or ComplexTensor to ComplexTensor."""
    if isinstance(x, ComplexTensor):
        return x
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return ComplexTensor.from_complex(x)
    return ComplexTensor(x)


class Parameter:
    """A named, optionally trainable complex tensor.

    The gradient lives on ``value`` and is filled by the backward pass;
    non-trainable parameters never track gradients and are never touched
    by an optimizer.
    """

    def __init__(self, value, name="", trainable=True):
        if not isinstance(value, ComplexTensor):
            value = as_tensor(value)
        self.value = value
        self.name = name
        self.trainable = bool(trainable)
        self.value.track_grad = self.trainable

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    @property
    def grad(self):
        """Gradient pair; exactly zero if backward never reached this."""
        g = self.value.grad
        if g is None and self.trainable:
            return ComplexTensor(np.zeros(self.shape))
        return g

    def zero_grad(self):
        self.value.zero_grad()

    def __repr__(self):
        return "Parameter(%r, shape=%s, trainable=%s)" % (
            self.name, self.shape, self.trainable)


_ACTIVE = threading.local()


def active_tape():
    """The tape currently recording on this thread, or None."""
    return getattr(_ACTIVE, "tape", None)


class Tape:
    """Records primitive ops for one forward pass.

    Use as a context manager; ops executed inside the block whose
    inputs have ``track_grad`` set are recorded.  Nodes are stored in
    execution order, so iterating them in reverse visits every node
    after all of its consumers: one sweep is a complete backward pass.

    ``stats`` collects integer counters side effects want to report
    (e.g. how many oscillator radii hit the positivity floor).
    """

    def __init__(self):
        self.nodes = []
        self.stats = {}

    def __enter__(self):
        if active_tape() is not None:
            raise TapeUsageError("a tape is already recording on this thread")
        _ACTIVE.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE.tape = None
        return False

    def count(self, key, n=1):
        if n:
            self.stats[key] = self.stats.get(key, 0) + int(n)

    def backward(self, loss):
        """Run the reverse sweep from a real scalar recorded on this tape.

        Fills the gradient buffers of every tracked tensor reachable
        from ``loss``; read them through Parameter.grad.
        """
        if not isinstance(loss, ComplexTensor):
            raise TapeUsageError("backward expects a ComplexTensor loss")
        if loss.size != 1:
            raise TapeUsageError(
                "backward needs a scalar loss, got shape %s" % (loss.shape,))
        if loss._tape is not self:
            raise TapeUsageError(
                "loss was not recorded on this tape (detached node?)")
        if np.any(loss.im != 0.0):
            raise TapeUsageError("loss must be real (im part is nonzero)")
        gre, _ = loss.grad_pair()
        gre[...] = 1.0
        for node in reversed(self.nodes):
            node()


def backward(loss):
    """Module-level convenience: backward through the tape that made loss."""
    if not isinstance(loss, ComplexTensor) or loss._tape is None:
        raise TapeUsageError(
            "backward requires a scalar recorded on a tape; "
            "got a detached or foreign value")
    loss._tape.backward(loss)


def _record(inputs, out, rule):
    """Attach ``rule`` to the active tape if any input is tracked.

    ``rule`` is a closure propagating adjoints from ``out`` to the
    inputs; it must internally skip inputs that do not track gradients
    and do nothing when the output never received a gradient.
    """
    tape = active_tape()
    if tape is None:
        return
    if not any(t.track_grad for t in inputs):
        return
    out.track_grad = True
    out._tape = tape
    tape.nodes.append(rule)


def _unbroadcast(g, shape):
    """Sum a gradient back down to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _acc(t, dre, dim):
    """Accumulate an adjoint contribution into t's gradient buffers."""
    g = t.grad_pair()
    if dre is not None:
        g[0] += _unbroadcast(dre, t.re.shape)
    if dim is not None:
        g[1] += _unbroadcast(dim, t.re.shape)


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def add(a, b):
    """Elementwise complex a + b with numpy broadcasting."""
    out = ComplexTensor(a.re + b.re, a.im + b.im)

    def rule():
        if out._grad is None:
            return
        gre, gim = out._grad
        if a.track_grad:
            _acc(a, gre, gim)
        if b.track_grad:
            _acc(b, gre, gim)

    _record((a, b), out, rule)
    return out


def sub(a, b):
    """Elementwise complex a - b with numpy broadcasting."""
    out = ComplexTensor(a.re - b.re, a.im - b.im)

    def rule():
        if out._grad is None:
            return
        gre, gim = out._grad
        if a.track_grad:
            _acc(a, gre, gim)
        if b.track_grad:
            _acc(b, -gre, -gim)

    _record((a, b), out, rule)
    return out


def add_scaled(a, b, s):
    """a + s*b for a real constant s (fused hot path for Euler steps)."""
    s = float(s)
    out = ComplexTensor(a.re + s * b.re, a.im + s * b.im)

    def rule():
        if out._grad is None:
            return
        gre, gim = out._grad
        if a.track_grad:
            _acc(a, gre, gim)
        if b.track_grad:
            _acc(b, s * gre, s * gim)

    _record((a, b), out, rule)
    return out


def scale(a, s):
    """s*a for a real constant s."""
    s = float(s)
    out = ComplexTensor(s * a.re, s * a.im)

    def rule():
        if out._grad is None:
            return
        gre, gim = out._grad
        _acc(a, s * gre, s * gim)

    _record((a,), out, rule)
    return out


def affine_real(a, m, c):
    """m*a + c for real constants m, c (c added to the real part only)."""
    m = float(m)
    c = float(c)
    out = ComplexTensor(m * a.re + c, m * a.im)

    def rule():
        if out._grad is None:
            return
        gre, gim = out._grad
        _acc(a, m * gre, m * gim)

    _record((a,), out, rule)
    return out


def cmul(a, b):
    """Elementwise complex product (a+bi)(c+di) with broadcasting."""
    out = ComplexTensor(a.re * b.re - a.im * b.im,
                        a.re * b.im + a.im * b.re)

    def rule():
        if out._grad is None:
            return
        gre, gim = out._grad
        # out.re = ar*br - ai*bi ; out.im = ar*bi + ai*br
        if a.track_grad:
            _acc(a, gre * b.re + gim * b.im, gim * b.re - gre * b.im)
        if b.track_grad:
            _acc(b, gre * a.re + gim * a.im, gim * a.re - gre * a.im)

    _record((a, b), out, rule)
    return out


def complex_matmul(W, z):
    """Complex matrix product W @ z.

    W is [m, n]; z is [n] or [n, ...] with any trailing axes (time,
    batch).  Contraction is over the leading axis of z.
    """
    if W.ndim != 2:
        raise ShapeMismatchError(
            "matmul weight must be 2-d, got shape %s" % (W.shape,))
    if z.ndim < 1 or z.shape[0] != W.shape[1]:
        raise ShapeMismatchError(
            "matmul inner dimensions disagree: W is %s, z is %s"
            % (W.shape, z.shape))

    re = W.re @ z.re.reshape(z.shape[0], -1) - W.im @ z.im.reshape(z.shape[0], -1)
    im = W.re @ z.im.reshape(z.shape[0], -1) + W.im @ z.re.reshape(z.shape[0], -1)
    out_shape = (W.shape[0],) + z.shape[1:]
    out = ComplexTensor(re.reshape(out_shape), im.reshape(out_shape))

    def rule():
        if out._grad is None:
            return
        n = z.shape[0]
        gre = out._grad[0].reshape(W.shape[0], -1)
        gim = out._grad[1].reshape(W.shape[0], -1)
        if W.track_grad:
            zre = z.re.reshape(n, -1)
            zim = z.im.reshape(n, -1)
            _acc(W, gre @ zre.T + gim @ zim.T, gim @ zre.T - gre @ zim.T)
        if z.track_grad:
            dre = W.re.T @ gre + W.im.T @ gim
            dim = W.re.T @ gim - W.im.T @ gre
            _acc(z, dre.reshape(z.shape), dim.reshape(z.shape))

    _record((W, z), out, rule)
    return out


_ACTIVATIONS = ("relu", "tanh", "sigmoid")


def split_activation(z, f):
    """Apply a real activation to re and im independently.

    Matches the split-complex convention f(re) + i f(im), pointwise in
    time.  Note that a real-valued tensor through sigmoid legitimately
    acquires im = 0.5 everywhere, since sigmoid(0) = 0.5.
    """
    if f == "relu":
        re = np.maximum(z.re, 0.0)
        im = np.maximum(z.im, 0.0)
    elif f == "tanh":
        re = np.tanh(z.re)
        im = np.tanh(z.im)
    elif f == "sigmoid":
        re = 1.0 / (1.0 + np.exp(-z.re))
        im = 1.0 / (1.0 + np.exp(-z.im))
    else:
        raise ValueError("unknown activation %r, expected one of %s"
                         % (f, (_ACTIVATIONS,)))
    out = ComplexTensor(re, im)

    def rule():
        if out._grad is None:
            return
        gre, gim = out._grad
        if f == "relu":
            dre = gre * (z.re > 0.0)
            dim = gim * (z.im > 0.0)
        elif f == "tanh":
            dre = gre * (1.0 - out.re * out.re)
            dim = gim * (1.0 - out.im * out.im)
        else:
            dre = gre * out.re * (1.0 - out.re)
            dim = gim * out.im * (1.0 - out.im)
        _acc(z, dre, dim)

    _record((z,), out, rule)
    return out


def real(z):
    """Real part as a real tensor.  No gradient flows to im."""
    out = ComplexTensor(z.re.copy())

    def rule():
        if out._grad is None:
            return
        _acc(z, out._grad[0], None)

    _record((z,), out, rule)
    return out


def imag(z):
    """Imaginary part as a real tensor."""
    out = ComplexTensor(z.im.copy())

    def rule():
        if out._grad is None:
            return
        _acc(z, None, out._grad[0])

    _record((z,), out, rule)
    return out


def compose(x, y):
    """Build x.re + i*y.re from two real tensors (broadcast together)."""
    re, im = np.broadcast_arrays(x.re, y.re)
    out = ComplexTensor(re.copy(), im.copy())

    def rule():
        if out._grad is None:
            return
        gre, gim = out._grad
        if x.track_grad:
            _acc(x, gre, None)
        if y.track_grad:
            _acc(y, gim, None)

    _record((x, y), out, rule)
    return out


def abs2(z):
    """Squared magnitude |z|^2 as a real tensor."""
    out = ComplexTensor(z.re * z.re + z.im * z.im)

    def rule():
        if out._grad is None:
            return
        gre = out._grad[0]
        _acc(z, 2.0 * gre * z.re, 2.0 * gre * z.im)

    _record((z,), out, rule)
    return out


def sin_r(x):
    """sin of the real part; output is a real tensor."""
    out = ComplexTensor(np.sin(x.re))

    def rule():
        if out._grad is None:
            return
        _acc(x, out._grad[0] * np.cos(x.re), None)

    _record((x,), out, rule)
    return out


def cos_r(x):
    """cos of the real part; output is a real tensor."""
    out = ComplexTensor(np.cos(x.re))

    def rule():
        if out._grad is None:
            return
        _acc(x, -out._grad[0] * np.sin(x.re), None)

    _record((x,), out, rule)
    return out


def clamp_min(x, floor, stat=None):
    """Elementwise max(x.re, floor) on the real part; im passes through.

    If ``stat`` is given and a tape is recording, the number of clamped
    entries is added to tape.stats[stat].  Clamped coordinates get zero
    gradient (the subgradient of the active constraint).
    """
    floor = float(floor)
    mask = x.re > floor
    out = ComplexTensor(np.maximum(x.re, floor), x.im.copy())
    tape = active_tape()
    if stat is not None and tape is not None:
        tape.count(stat, int(mask.size - mask.sum()))

    def rule():
        if out._grad is None:
            return
        gre, gim = out._grad
        _acc(x, gre * mask, gim)

    _record((x,), out, rule)
    return out


def reshape(z, shape):
    out = ComplexTensor(z.re.reshape(shape), z.im.reshape(shape))

    def rule():
        if out._grad is None:
            return
        gre, gim = out._grad
        _acc(z, gre.reshape(z.shape), gim.reshape(z.shape))

    _record((z,), out, rule)
    return out


def slice_time(z, t):
    """z[..., t]: one step of a time-major sequence (time is last axis)."""
    t = int(t)
    out = ComplexTensor(z.re[..., t].copy(), z.im[..., t].copy())

    def rule():
        if out._grad is None:
            return
        if z.track_grad:
            g = z.grad_pair()
            g[0][..., t] += out._grad[0]
            g[1][..., t] += out._grad[1]

    _record((z,), out, rule)
    return out


def stack_time(steps):
    """Stack equally shaped tensors along a new trailing time axis."""
    steps = list(steps)
    out = ComplexTensor(np.stack([s.re for s in steps], axis=-1),
                        np.stack([s.im for s in steps], axis=-1))

    def rule():
        if out._grad is None:
            return
        gre, gim = out._grad
        for t, s in enumerate(steps):
            if s.track_grad:
                _acc(s, gre[..., t], gim[..., t])

    _record(tuple(steps), out, rule)
    return out


def mean_real(z):
    """Mean of the real part over all elements; a real scalar tensor."""
    out = ComplexTensor(np.asarray(np.mean(z.re)))

    def rule():
        if out._grad is None:
            return
        _acc(z, np.broadcast_to(out._grad[0] / z.size, z.re.shape), None)

    _record((z,), out, rule)
    return out


def sum_real(z):
    """Sum of the real part over all elements; a real scalar tensor."""
    out = ComplexTensor(np.asarray(np.sum(z.re)))

    def rule():
        if out._grad is None:
            return
        _acc(z, np.broadcast_to(out._grad[0], z.re.shape), None)

    _record((z,), out, rule)
    return out


def _pad_same(a, kh, kw):
    ph0, ph1 = (kh - 1) // 2, kh // 2
    pw0, pw1 = (kw - 1) // 2, kw // 2
    pad = ((ph0, ph1), (pw0, pw1)) + ((0, 0),) * (a.ndim - 2)
    return np.pad(a, pad), ph0, pw0


def _im2col(a, kh, kw):
    """[H,W,C,N] -> [H*W*N, kh*kw*C] patch matrix, zero 'same' padding."""
    H, W, C, N = a.shape
    p, _, _ = _pad_same(a, kh, kw)
    # windows over the two leading spatial axes
    win = np.lib.stride_tricks.sliding_window_view(p, (kh, kw), axis=(0, 1))
    # win: [H, W, C, N, kh, kw] -> [H, W, N, kh, kw, C]
    cols = win.transpose(0, 1, 3, 4, 5, 2).reshape(H * W * N, kh * kw * C)
    return np.ascontiguousarray(cols)


def _col2im(gcols, shape, kh, kw):
    """Adjoint of _im2col: scatter-add patch gradients back to the image."""
    H, W, C, N = shape
    g = gcols.reshape(H, W, N, kh, kw, C)
    ph0, ph1 = (kh - 1) // 2, kh // 2
    pw0, pw1 = (kw - 1) // 2, kw // 2
    gp = np.zeros((H + ph0 + ph1, W + pw0 + pw1, C, N))
    for u in range(kh):
        for v in range(kw):
            gp[u:u + H, v:v + W] += g[:, :, :, u, v, :].transpose(0, 1, 3, 2)
    return gp[ph0:ph0 + H, pw0:pw0 + W]


def conv2d(x, k):
    """Complex 2-d convolution, 'same' zero padding, stride 1.

    x is [H, W, Cin] or [H, W, Cin, N] (N folds batch and anything
    else); k is [kh, kw, Cin, Cout].  Returns [H, W, Cout(, N)].
    Implemented as im2col + complex matmul; the patch matrix is
    recomputed in the backward pass rather than kept alive.
    """
    if k.ndim != 4:
        raise ShapeMismatchError(
            "conv kernel must be [kh, kw, Cin, Cout], got %s" % (k.shape,))
    squeeze = x.ndim == 3
    xs = (x.shape + (1,)) if squeeze else x.shape
    if len(xs) != 4 or xs[2] != k.shape[2]:
        raise ShapeMismatchError(
            "conv input %s incompatible with kernel %s" % (x.shape, k.shape))
    H, W, Cin, N = xs
    kh, kw, _, Cout = k.shape

    xre = x.re.reshape(xs)
    xim = x.im.reshape(xs)
    cre = _im2col(xre, kh, kw)
    cim = _im2col(xim, kh, kw)
    Kre = k.re.reshape(kh * kw * Cin, Cout)
    Kim = k.im.reshape(kh * kw * Cin, Cout)
    ore = cre @ Kre - cim @ Kim
    oim = cre @ Kim + cim @ Kre
    out_shape = (H, W, Cout) if squeeze else (H, W, Cout, N)
    # [H*W*N, Cout] -> [H, W, N, Cout] -> [H, W, Cout, N]
    ore = ore.reshape(H, W, N, Cout).transpose(0, 1, 3, 2).reshape(out_shape)
    oim = oim.reshape(H, W, N, Cout).transpose(0, 1, 3, 2).reshape(out_shape)
    out = ComplexTensor(ore, oim)

    def rule():
        if out._grad is None:
            return
        gre = out._grad[0].reshape(H, W, Cout, N)
        gim = out._grad[1].reshape(H, W, Cout, N)
        gre = gre.transpose(0, 1, 3, 2).reshape(H * W * N, Cout)
        gim = gim.transpose(0, 1, 3, 2).reshape(H * W * N, Cout)
        if k.track_grad:
            c_re = _im2col(xre, kh, kw)
            c_im = _im2col(xim, kh, kw)
            dKre = c_re.T @ gre + c_im.T @ gim
            dKim = c_re.T @ gim - c_im.T @ gre
            _acc(k, dKre.reshape(k.shape), dKim.reshape(k.shape))
        if x.track_grad:
            dcre = gre @ Kre.T + gim @ Kim.T
            dcim = gim @ Kre.T - gre @ Kim.T
            dre = _col2im(dcre, xs, kh, kw)
            dim = _col2im(dcim, xs, kh, kw)
            _acc(x, dre.reshape(x.shape), dim.reshape(x.shape))

    _record((x, k), out, rule)
    return out


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

class GradCheckReport:
    """Outcome of comparing tape gradients to central finite differences."""

    def __init__(self, max_rel_err, n_coords, worst, passed):
        self.max_rel_err = max_rel_err
        self.n_coords = n_coords
        self.worst = worst  # (param name, flat index, "re"/"im") or None
        self.passed = passed

    def __repr__(self):
        return ("GradCheckReport(max_rel_err=%.3e, n_coords=%d, worst=%s, "
                "passed=%s)" % (self.max_rel_err, self.n_coords, self.worst,
                                self.passed))


def grad_check(network, sample=None, epsilon=1e-5, tolerance=1e-4):
    """Compare every parameter coordinate's tape gradient to a central
    finite difference of the network loss.

    ``network`` must provide parameters() -> iterable of Parameter and
    loss(sample) -> real scalar ComplexTensor, deterministic in its
    inputs.  Relative error is measured against max(|fd|, |tape|, 1),
    so coordinates where both gradients vanish cannot spuriously fail.
    """
    params = [p for p in network.parameters() if p.trainable]

    def eval_loss():
        val = network.loss(sample)
        x = float(val.re.reshape(()))
        if not np.isfinite(x):
            raise NumericalCheckError("loss is not finite during grad check")
        return x

    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = network.loss(sample)
        if not np.all(np.isfinite(loss.re)):
            raise NumericalCheckError("loss is not finite during grad check")
        if loss._tape is tape:
            tape.backward(loss)
        # else: loss depends on no tracked value; all gradients are zero
    grads = []
    for p in params:
        g = p.grad
        if g is None:
            grads.append((np.zeros(p.shape), np.zeros(p.shape)))
        else:
            grads.append((g.re.copy(), g.im.copy()))

    max_err = 0.0
    n_coords = 0
    worst = None
    for p, (gre, gim) in zip(params, grads):
        for part, arr, g in (("re", p.value.re, gre), ("im", p.value.im, gim)):
            flat = arr.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                lp = eval_loss()
                flat[i] = orig - epsilon
                lm = eval_loss()
                flat[i] = orig
                fd = (lp - lm) / (2.0 * epsilon)
                a = gflat[i]
                err = abs(fd - a) / max(abs(fd), abs(a), 1.0)
                n_coords += 1
                if err > max_err:
                    max_err = err
                    worst = (p.name, i, part)
                if not np.isfinite(fd):
                    raise NumericalCheckError(
                        "finite difference not finite at parameter %r[%d].%s"
                        % (p.name, i, part))

    return GradCheckReport(max_err, n_coords, worst, max_err <= tolerance)
