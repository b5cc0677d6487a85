"""Loss, optimizer and the training loop.

Complex network outputs are compared against real targets through their
real part (sign-preserving, which integration/differentiation targets
need).  Adam treats the re and im parts of every parameter as
independent real coordinates.  All shuffling is driven by seeded
generators split off the config seed, so a (seed, config) pair fully
determines the numeric history; wall-clock seconds are recorded but
excluded from any determinism contract.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tz
from .errors import (
    ConfigError,
    DivergenceError,
    ShapeMismatchError,
)
from .tensor import ComplexTensor, Parameter, Tape, as_tensor


@dataclass
class TrainingConfig:
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    train_val_split: float = 0.8

    def __post_init__(self):
        problems = []
        if self.learning_rate <= 0:
            problems.append("learning_rate must be > 0, got %g"
                            % self.learning_rate)
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not (0 <= b < 1):
                problems.append("%s must be in [0, 1), got %g" % (name, b))
        if self.adam_epsilon <= 0:
            problems.append("adam_epsilon must be > 0, got %g"
                            % self.adam_epsilon)
        if self.epochs < 0:
            problems.append("epochs must be >= 0, got %r" % (self.epochs,))
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1, got %r"
                            % (self.batch_size,))
        if not (0 < self.train_val_split <= 1):
            problems.append("train_val_split must be in (0, 1], got %g"
                            % self.train_val_split)
        if problems:
            raise ConfigError(problems)


def mse_loss(pred, target):
    """Mean over all entries of (Re(pred) - target)^2, on the tape."""
    target = as_tensor(target)
    if np.any(target.im != 0.0):
        raise ShapeMismatchError("mse_loss target must be real valued")
    if pred.shape != target.shape:
        raise ShapeMismatchError(
            "prediction shape %s does not match target shape %s"
            % (pred.shape, target.shape))
    return tz.mean_real(tz.abs2(tz.sub(tz.real(pred), target)))


# ---------------------------------------------------------------------------
# ramp classification
# ---------------------------------------------------------------------------

@dataclass
class RampTarget:
    """Per-class desired outputs: the true class rises 0 -> 1 linearly
    over [0, T-1], every other class stays 0."""

    matrix: np.ndarray
    label: int


def make_ramp_targets(num_classes, T, label):
    if not (0 <= label < num_classes):
        raise ConfigError("label %r out of range for %d classes"
                          % (label, num_classes))
    if T < 2:
        raise ConfigError("ramp targets need T >= 2, got %d" % T)
    m = np.zeros((num_classes, T))
    m[label] = np.linspace(0.0, 1.0, T)
    return RampTarget(matrix=m, label=int(label))


def classify(outputs):
    """argmax over classes of the time-mean of Re(output); ties go to
    the lowest index.  outputs: [num_classes, T] tensor or array."""
    if isinstance(outputs, ComplexTensor):
        means = outputs.re.mean(axis=-1)
    else:
        means = np.real(np.asarray(outputs)).mean(axis=-1)
    return int(np.argmax(means))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def adam_step(params, grads, step_index, config, state=None):
    """One bias-corrected Adam update over every trainable coordinate.

    grads align with params as (d/dre, d/dim) pairs (ComplexTensor or
    None for a parameter the loss never touched).  state maps parameter
    ids to moment buffers and is allocated on first use; pass the same
    dict back on every call.
    """
    if state is None:
        state = {}
    lr = config.learning_rate
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_epsilon
    t = int(step_index)
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if not p.trainable or g is None:
            continue
        for part, garr, dest in (("re", g.re, p.value.re),
                                 ("im", g.im, p.value.im)):
            if not np.all(np.isfinite(garr)):
                raise DivergenceError(
                    "non-finite gradient for parameter %r (%s part)"
                    % (p.name or ("#%d" % i), part))
            key = (i, part)
            if key not in state:
                state[key] = (np.zeros_like(garr), np.zeros_like(garr))
            m, v = state[key]
            m *= b1
            m += (1.0 - b1) * garr
            v *= b2
            v += (1.0 - b2) * garr * garr
            dest -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


class Adam:
    """Stateful wrapper around adam_step with checkpointable buffers."""

    def __init__(self, params, config):
        self.params = list(params)
        self.config = config
        self.state = {}
        self.t = 0

    def step(self):
        self.t += 1
        grads = [p.value.grad for p in self.params]
        adam_step(self.params, grads, self.t, self.config, self.state)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_arrays(self):
        """Flat name -> array view of the moment buffers, for saving."""
        out = {}
        for (i, part), (m, v) in sorted(self.state.items()):
            out["m.%d.%s" % (i, part)] = m
            out["v.%d.%s" % (i, part)] = v
        return out

    def load_state_arrays(self, arrays, t):
        self.t = int(t)
        self.state = {}
        for name, arr in arrays.items():
            kind, idx, part = name.split(".")
            key = (int(idx), part)
            m, v = self.state.get(
                key, (np.zeros_like(arr), np.zeros_like(arr)))
            if kind == "m":
                m = arr.copy()
            else:
                v = arr.copy()
            self.state[key] = (m, v)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainHistory:
    epoch: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    clamp_events: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def append(self, epoch, train_loss, val_loss, accuracy, clamp_events,
               seconds):
        self.epoch.append(int(epoch))
        self.train_loss.append(float(train_loss))
        self.val_loss.append(float(val_loss))
        self.accuracy.append(float(accuracy))
        self.clamp_events.append(int(clamp_events))
        self.seconds.append(float(seconds))

    def __len__(self):
        return len(self.epoch)


def stack_batch(samples):
    """Stack sample inputs/targets along a new batch axis before time.

    [D, T] inputs become [D, B, T]; [H, W, C, T] frames become
    [H, W, C, B, T].  Targets stack the same way.
    """
    x = np.stack([np.asarray(s.input) for s in samples], axis=-2)
    y = np.stack([np.asarray(s.target) for s in samples], axis=-2)
    return x, y


def split_indices(n, config):
    """Deterministic train/validation split (independent of epoch order)."""
    ss_split, _ = np.random.SeedSequence(config.seed).spawn(2)
    perm = np.random.default_rng(ss_split).permutation(n)
    n_train = max(1, int(round(config.train_val_split * n)))
    return perm[:n_train], perm[n_train:]


def epoch_rng(config):
    """The shuffle stream; its state is what checkpoints save/restore."""
    _, ss_epochs = np.random.SeedSequence(config.seed).spawn(2)
    return np.random.default_rng(ss_epochs)


def _batched(indices, size):
    for i in range(0, len(indices), size):
        yield indices[i:i + size]


def evaluate(network, samples, batch_size=32):
    """Mean loss (and accuracy over labeled samples) without a tape."""
    if len(samples) == 0:
        return float("nan"), float("nan")
    total = 0.0
    n_seen = 0
    hits = 0
    labeled = 0
    for chunk in _batched(np.arange(len(samples)), batch_size):
        batch = [samples[i] for i in chunk]
        x, y = stack_batch(batch)
        pred = network.forward(as_tensor(x))
        loss = float(mse_loss(pred, y).re)
        total += loss * len(batch)
        n_seen += len(batch)
        for j, s in enumerate(batch):
            label = getattr(s, "label", None)
            if label is None:
                continue
            labeled += 1
            # class rows live on the leading axis; batch is axis -2
            hits += int(classify(pred.re[..., j, :]) == label)
    acc = (hits / labeled) if labeled else float("nan")
    return total / n_seen, acc


def train(network, dataset, config, optimizer=None, rng=None, start_epoch=0,
          trace=None):
    """Mini-batch Adam training with a fixed seeded shuffle stream.

    dataset provides .samples (objects with .input, .target, optional
    .label).  optimizer/rng/start_epoch exist so a checkpointed run can
    resume mid-stream and stay bit-identical with an uninterrupted one.
    trace, if given, is called with (epoch, network) after each epoch.
    """
    samples = dataset.samples
    if len(samples) == 0:
        raise ConfigError("dataset is empty")
    params = network.parameters()
    if optimizer is None:
        optimizer = Adam(params, config)
    if rng is None:
        rng = epoch_rng(config)
    train_idx, val_idx = split_indices(len(samples), config)
    val_samples = [samples[i] for i in val_idx]
    history = TrainHistory()

    for epoch in range(start_epoch, config.epochs):
        t0 = time.perf_counter()
        order = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        clamps = 0
        for b, chunk in enumerate(_batched(order, config.batch_size)):
            batch = [samples[i] for i in chunk]
            x, y = stack_batch(batch)
            optimizer.zero_grad()
            try:
                with Tape() as tape:
                    pred = network.forward(as_tensor(x))
                    loss = mse_loss(pred, y)
                    val = float(loss.re)
                    if not np.isfinite(val):
                        raise DivergenceError("loss is not finite")
                    tape.backward(loss)
            except DivergenceError as exc:
                raise DivergenceError(
                    "epoch %d, batch %d: %s" % (epoch, b, exc)) from exc
            clamps += tape.stats.get("r_clamp_events", 0)
            clamps += tape.stats.get("mu_clamp_events", 0)
            optimizer.step()
            total += val * len(batch)
        train_loss = total / len(train_idx)
        val_loss, acc = evaluate(network, val_samples, config.batch_size)
        history.append(epoch, train_loss, val_loss, acc, clamps,
                       time.perf_counter() - t0)
        if trace is not None:
            trace(epoch, network)
    return history


class LossModel:
    """Adapts (network, sample pair) to the grad_check protocol."""

    def __init__(self, network):
        self.network = network

    def parameters(self):
        return self.network.parameters()

    def loss(self, sample):
        x, y = sample
        return mse_loss(self.network.forward(as_tensor(x)), y)
