"""Binary containers and CSV export.

Container layout (both datasets and checkpoints):

    bytes 0..3    magic (b"OSCD" datasets, b"OSCC" checkpoints)
    bytes 4..7    format version, uint32 little-endian
    bytes 8..15   header length H, uint64 little-endian
    H bytes       UTF-8 JSON header (shapes, dt, metadata, array order)
    rest          the arrays named in the header, concatenated flat as
                  little-endian float64 in header order

Complex arrays are stored as two float entries (name.re / name.im).
CSV output uses %.17g formatting throughout: locale-independent and
lossless for float64, so identical runs produce identical bytes.
"""

import json
import struct

import numpy as np

from .errors import UsageError
from .tasks import Dataset, TaskSample

DATASET_MAGIC = b"OSCD"
CHECKPOINT_MAGIC = b"OSCC"
FORMAT_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_container(path, magic, header, arrays):
    """arrays: ordered (name, float64 ndarray) pairs; order is recorded
    in the header so readers can slice the payload back out."""
    header = dict(header)
    header["arrays"] = [{"name": name, "shape": list(arr.shape)}
                        for name, arr in arrays]
    blob = json.dumps(_jsonable(header)).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_container(path, magic):
    with open(path, "rb") as fh:
        got = fh.read(4)
        if got != magic:
            raise UsageError("%s: bad magic %r (expected %r)"
                             % (path, got, magic))
        version = struct.unpack("<I", fh.read(4))[0]
        if version != FORMAT_VERSION:
            raise UsageError("%s: unsupported format version %d"
                             % (path, version))
        header_len = struct.unpack("<Q", fh.read(8))[0]
        header = json.loads(fh.read(header_len).decode("utf-8"))
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise UsageError("%s: truncated payload at array %r"
                                 % (path, entry["name"]))
            arrays[entry["name"]] = np.frombuffer(
                buf, dtype="<f8").reshape(shape).copy()
    return header, arrays


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

def save_dataset(path, dataset):
    arrays = []
    samples_meta = []
    for i, s in enumerate(dataset.samples):
        complex_input = np.iscomplexobj(s.input)
        samples_meta.append({
            "label": s.label,
            "dt": s.dt,
            "complex_input": complex_input,
            "meta": _jsonable(s.meta),
        })
        if complex_input:
            arrays.append(("sample.%d.input.re" % i, np.real(s.input)))
            arrays.append(("sample.%d.input.im" % i, np.imag(s.input)))
        else:
            arrays.append(("sample.%d.input" % i, np.asarray(s.input,
                                                             dtype=float)))
        arrays.append(("sample.%d.target" % i, np.asarray(s.target,
                                                          dtype=float)))
    header = {
        "task": dataset.task,
        "dt": dataset.dt,
        "n_samples": len(dataset.samples),
        "meta": _jsonable(dataset.meta),
        "samples": samples_meta,
    }
    write_container(path, DATASET_MAGIC, header, arrays)


def load_dataset(path):
    header, arrays = read_container(path, DATASET_MAGIC)
    samples = []
    for i, sm in enumerate(header["samples"]):
        if sm["complex_input"]:
            x = (arrays["sample.%d.input.re" % i]
                 + 1j * arrays["sample.%d.input.im" % i])
        else:
            x = arrays["sample.%d.input" % i]
        samples.append(TaskSample(input=x,
                                  target=arrays["sample.%d.target" % i],
                                  dt=sm["dt"], label=sm["label"],
                                  meta=sm["meta"]))
    return Dataset(task=header["task"], dt=header["dt"], samples=samples,
                   meta=header["meta"])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, network, optimizer, epoch, rng, config_echo=None):
    """Everything needed to resume bit-identically: parameter tensors,
    Adam moments and step counter, epoch, and the shuffle RNG state."""
    arrays = []
    names = []
    for i, p in enumerate(network.parameters()):
        names.append(p.name or ("param.%d" % i))
        arrays.append(("param.%d.re" % i, p.value.re))
        arrays.append(("param.%d.im" % i, p.value.im))
    for name, arr in optimizer.state_arrays().items():
        arrays.append(("adam.%s" % name, arr))
    header = {
        "epoch": int(epoch),
        "adam_t": int(optimizer.t),
        "param_names": names,
        "rng_state": _jsonable(rng.bit_generator.state),
        "config": config_echo,
    }
    write_container(path, CHECKPOINT_MAGIC, header, arrays)


def load_checkpoint(path):
    header, arrays = read_container(path, CHECKPOINT_MAGIC)
    params = {}
    for i, name in enumerate(header["param_names"]):
        params[i] = (arrays["param.%d.re" % i], arrays["param.%d.im" % i])
    adam_arrays = {k[len("adam."):]: v for k, v in arrays.items()
                   if k.startswith("adam.")}
    return {
        "epoch": header["epoch"],
        "adam_t": header["adam_t"],
        "param_names": header["param_names"],
        "params": params,
        "adam_arrays": adam_arrays,
        "rng_state": header["rng_state"],
        "config": header.get("config"),
    }


def restore_network(network, ckpt):
    """Copy checkpointed tensors into an architecture-matched network."""
    params = network.parameters()
    if len(params) != len(ckpt["param_names"]):
        raise UsageError(
            "checkpoint has %d parameters but the network has %d"
            % (len(ckpt["param_names"]), len(params)))
    for i, p in enumerate(params):
        re, im = ckpt["params"][i]
        if re.shape != p.value.re.shape:
            raise UsageError(
                "checkpoint parameter %r has shape %s, network expects %s"
                % (ckpt["param_names"][i], re.shape, p.value.re.shape))
        p.value.re[...] = re
        p.value.im[...] = im


def restore_rng(state):
    rng = np.random.default_rng(0)
    rng.bit_generator.state = state
    return rng


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return "%d" % x
    return "%.17g" % x


def write_csv(path, columns, rows):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


METRICS_COLUMNS = ("epoch", "train_loss", "val_loss", "accuracy",
                   "clamp_events")


def write_metrics_csv(path, history):
    """Deterministic per-epoch metrics (no wall-clock column, so reruns
    with the same seed are byte-identical)."""
    rows = zip(history.epoch, history.train_loss, history.val_loss,
               history.accuracy, history.clamp_events)
    write_csv(path, METRICS_COLUMNS, rows)


def write_history_csv(path, history):
    """Full history including wall-clock seconds."""
    rows = zip(history.epoch, history.train_loss, history.val_loss,
               history.accuracy, history.clamp_events, history.seconds)
    write_csv(path, METRICS_COLUMNS + ("seconds",), rows)


def write_trace_csv(path, times, desired, predicted):
    """Per-sample prediction trace: one row per timestep, one
    (desired, predicted) column pair per output dimension."""
    desired = np.atleast_2d(desired)
    predicted = np.atleast_2d(predicted)
    columns = ["time"]
    for d in range(desired.shape[0]):
        columns += ["desired.%d" % d, "predicted.%d" % d]
    rows = []
    for t in range(desired.shape[1]):
        row = [float(times[t])]
        for d in range(desired.shape[0]):
            row += [float(desired[d, t]), float(predicted[d, t])]
        rows.append(row)
    write_csv(path, columns, rows)


def write_sweep_csv(path, sweep):
    """Resonance sweep output: one row per frequency-difference point."""
    columns = ("domega", "amplitude", "psi_mean", "locked", "slipped",
               "settled", "diverged")
    rows = []
    for i in range(len(sweep["domega"])):
        rows.append([
            float(sweep["domega"][i]),
            float(sweep["amplitude"][i]),
            float(sweep["psi_mean"][i]),
            int(sweep["locked"][i]),
            int(sweep["slipped"][i]),
            int(sweep["settled"][i]),
            int(sweep["diverged"][i]),
        ])
    write_csv(path, columns, rows)
