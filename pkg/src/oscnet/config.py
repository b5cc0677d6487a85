"""Experiment configuration: TOML parsing, validation, and network
construction.

One config file fully determines a run: the task, the dataset
generator's arguments, an ordered layer list, oscillator settings
(shared defaults in [oscillator], overridable per layer), and the
training hyperparameters.  Validation collects every problem before
raising so a bad file is reported in one pass.
"""

from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from .dynamics import HopfLayerConfig
from .errors import ConfigError, UsageError
from .layers import ComplexConv2D, ComplexDense, HopfLayer, Network, OCNNBlock
from .training import TrainingConfig

# task id -> (input dim, output dim); None marks the video pipeline
TASK_DIMS = {
    "signal-generation": (4, 1),
    "am-demodulation": (1, 1),
    "filtering": (1, 1),
    "operator-integrate": (1, 1),
    "operator-differentiate": (1, 1),
    "trajectory": (2, 2),
    "moving-squares": None,
}

VECTOR_KINDS = ("dense", "hopf")
GRID_KINDS = ("ocnn", "conv")

_TOP_LEVEL = {"experiment", "dataset", "training", "oscillator", "layers"}
_LAYER_KEYS = {
    "dense": {"kind", "width", "activation"},
    "hopf": {"kind", "width", "mode", "freq_range", "trainable_freq",
             "kappa", "mu0", "beta", "r_init", "input_range"},
    "ocnn": {"kind", "filters", "kernel_size", "activation", "mode",
             "freq_range", "trainable_freq", "kappa", "mu0", "beta",
             "r_init", "input_range"},
    "conv": {"kind", "filters", "kernel_size", "activation"},
}
_OSC_KEYS = {"mode", "freq_range", "trainable_freq", "kappa", "mu0", "beta",
             "r_init", "dt", "input_range"}


@dataclass
class ExperimentConfig:
    task: str
    seed: int = 0
    out_dir: str = "runs"
    dataset: dict = field(default_factory=dict)
    training: TrainingConfig = None
    oscillator: dict = field(default_factory=dict)
    layers: list = field(default_factory=list)

    def layer_seed(self, index):
        return int(np.random.SeedSequence(
            [self.seed, 1000 + index]).generate_state(1)[0])


def parse_config(text):
    """Parse and validate TOML text into an ExperimentConfig."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError("config is not valid TOML: %s" % exc) from exc
    return config_from_dict(doc)


def load_config(path):
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError("cannot read config %s: %s" % (path, exc)) from exc
    return parse_config(text)


def config_from_dict(doc):
    problems = []
    for key in doc:
        if key not in _TOP_LEVEL:
            problems.append("unknown section %r (expected %s)"
                            % (key, sorted(_TOP_LEVEL)))

    exp = doc.get("experiment", {})
    task = exp.get("task")
    if task not in TASK_DIMS:
        problems.append("experiment.task %r is not one of %s"
                        % (task, sorted(TASK_DIMS)))
    seed = exp.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        problems.append("experiment.seed must be a non-negative integer")
    out_dir = exp.get("out_dir", "runs")

    osc = doc.get("oscillator", {})
    for key in osc:
        if key not in _OSC_KEYS:
            problems.append("oscillator.%s is not a recognized setting"
                            % key)

    layers = doc.get("layers", [])
    if not layers:
        problems.append("at least one [[layers]] entry is required")
    for i, layer in enumerate(layers):
        kind = layer.get("kind")
        if kind not in _LAYER_KEYS:
            problems.append("layers[%d].kind %r is not one of %s"
                            % (i, kind, sorted(_LAYER_KEYS)))
            continue
        for key in layer:
            if key not in _LAYER_KEYS[kind]:
                problems.append("layers[%d].%s is not valid for kind %r"
                                % (i, key, kind))

    try:
        training = TrainingConfig(seed=seed, **doc.get("training", {}))
    except ConfigError as exc:
        training = None
        problems.extend("training.%s" % p for p in exc.problems)
    except TypeError as exc:
        training = None
        problems.append("training section: %s" % exc)

    config = ExperimentConfig(task=task, seed=seed, out_dir=out_dir,
                              dataset=doc.get("dataset", {}),
                              training=training, oscillator=osc,
                              layers=layers)
    if not problems and task in TASK_DIMS:
        problems.extend(_chain_problems(config))
    if problems:
        raise ConfigError(problems)
    return config


def _merged_osc(config, layer):
    merged = {"mode": "resonator", "freq_range": (1.0, 10.0),
              "trainable_freq": False, "kappa": 1.0, "mu0": 1.0,
              "beta": -1.0, "r_init": 0.1, "dt": 0.01,
              "input_range": (-1.0, 1.0)}
    merged.update(config.oscillator)
    for key in _OSC_KEYS - {"dt"}:
        if key in layer:
            merged[key] = layer[key]
    return merged


def _hopf_config(config, layer, width, index):
    osc = _merged_osc(config, layer)
    return HopfLayerConfig(
        width=width, mode=osc["mode"], mu0=osc["mu0"], beta=osc["beta"],
        kappa=osc["kappa"], omega_init_range=tuple(osc["freq_range"]),
        trainable_freq=bool(osc["trainable_freq"]), dt=osc["dt"],
        r_init=osc["r_init"], theta_init_seed=config.layer_seed(index),
        input_range=tuple(osc["input_range"]))


def _chain_problems(config):
    """Width/shape chaining checks; mirrors build_network's walk."""
    try:
        build_network(config)
    except ConfigError as exc:
        return list(exc.problems)
    return []


def build_network(config):
    """Construct the configured architecture, seeded from the config."""
    dims = TASK_DIMS[config.task]
    problems = []
    built = []

    if dims is None:  # video pipeline: grid layers only
        channels = 1
        for i, layer in enumerate(config.layers):
            kind = layer.get("kind")
            if kind not in GRID_KINDS:
                problems.append(
                    "layers[%d]: kind %r cannot follow video frames "
                    "(use ocnn/conv)" % (i, kind))
                continue
            filters = layer.get("filters", 1)
            if not isinstance(filters, int) or filters < 1:
                problems.append("layers[%d].filters must be a positive "
                                "integer" % i)
                continue
            ksize = layer.get("kernel_size", 3)
            activation = layer.get("activation", "relu")
            seed = config.layer_seed(i)
            if kind == "ocnn":
                try:
                    hc = _hopf_config(config, layer, 40 * 40 * filters, i)
                    built.append(OCNNBlock(
                        40, 40, channels, filters, hc, kernel_size=ksize,
                        activation=activation, seed=seed,
                        name="ocnn%d" % i))
                except ConfigError as exc:
                    problems.extend("layers[%d]: %s" % (i, p)
                                    for p in exc.problems)
                    continue
            else:
                built.append(ComplexConv2D(
                    channels, filters, kernel_size=ksize,
                    activation=activation, seed=seed, name="conv%d" % i))
            channels = filters
        if not problems and channels != 1:
            problems.append("last layer must emit 1 channel (the predicted "
                            "frame), got %d" % channels)
    else:
        d_in, d_out = dims
        width_in = d_in
        for i, layer in enumerate(config.layers):
            kind = layer.get("kind")
            if kind not in VECTOR_KINDS:
                problems.append(
                    "layers[%d]: kind %r cannot follow a [width] vector "
                    "(use dense/hopf)" % (i, kind))
                continue
            if kind == "dense":
                width = layer.get("width")
                if not isinstance(width, int) or width < 1:
                    problems.append("layers[%d].width must be a positive "
                                    "integer" % i)
                    continue
                built.append(ComplexDense(
                    width_in, width, activation=layer.get("activation",
                                                          "relu"),
                    seed=config.layer_seed(i), name="dense%d" % i))
                width_in = width
            else:
                width = layer.get("width", width_in)
                if width != width_in:
                    problems.append(
                        "layers[%d]: oscillator width %d must match the "
                        "incoming width %d (one-to-one)"
                        % (i, width, width_in))
                    continue
                try:
                    hc = _hopf_config(config, layer, width, i)
                    built.append(HopfLayer(hc, name="hopf%d" % i))
                except ConfigError as exc:
                    problems.extend("layers[%d]: %s" % (i, p)
                                    for p in exc.problems)
                    continue
        if not problems and width_in != d_out:
            problems.append("last layer width %d must match the task "
                            "output dimension %d" % (width_in, d_out))

    if problems:
        raise ConfigError(problems)
    return Network(built)


def build_dataset(config, seed=None, **overrides):
    """Run the task's generator with the config's dataset arguments."""
    from .tasks import TASK_GENERATORS

    kwargs = dict(config.dataset)
    kwargs.update(overrides)
    if seed is None:
        seed = config.seed
    return TASK_GENERATORS[config.task](seed, **kwargs)
