"""End-to-end acceptance suite: one test per numbered criterion.

Each test prints a single scoreboard line

    criterion NN <name>: PASS|FAIL - <measured values>

before asserting, so a full run doubles as a report.  The training
criteria (5-9) run the shipped configs through the CLI exactly as a
user would and read the resulting metrics files; nothing is mocked.
Criterion 9 is the long one and carries the ``slow`` marker.
"""

import csv
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from oscnet import grad_check
from oscnet.cli import main as cli_main
from oscnet.config import build_dataset, build_network, load_config
from oscnet.dataio import load_checkpoint, restore_network
from oscnet.dynamics import HopfLayerConfig, reference_simulate, resonance_sweep, simulate
from oscnet.filters import apply_filter, design_butterworth_bandpass, frequency_response
from oscnet.layers import ComplexDense, HopfLayer, Network, OCNNBlock
from oscnet.tensor import as_tensor
from oscnet.training import LossModel, split_indices

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def report(num, name, ok, detail):
    print("criterion %02d %s: %s - %s"
          % (num, name, "PASS" if ok else "FAIL", detail))


# ---------------------------------------------------------------------------
# shipped-config training runs, cached so several criteria can share one
# ---------------------------------------------------------------------------

_CACHE = {}


def train_run(tmp_root, config_name, seed):
    """Train a shipped config at a seed; return (out_dir, rows, seconds)."""
    key = (config_name, seed)
    if key not in _CACHE:
        out = tmp_root / ("%s-seed%d-%d" % (config_name.replace(".toml", ""),
                                            seed, len(_CACHE)))
        t0 = time.perf_counter()
        rc = cli_main(["train", "--config", str(CONFIGS / config_name),
                       "--seed", str(seed), "--out", str(out)])
        seconds = time.perf_counter() - t0
        assert rc == 0, "training %s seed %d exited %d" % (config_name, seed,
                                                           rc)
        with open(out / "metrics.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        _CACHE[key] = (out, rows, seconds)
    return _CACHE[key]


@pytest.fixture(scope="session")
def run_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def final_val(rows):
    return float(rows[-1]["val_loss"])


def restored_network(config_path, seed, out_dir):
    """Rebuild a trained network and its config from a run directory."""
    config = load_config(str(config_path))
    if seed is not None:
        config = replace(config,
                         seed=seed,
                         training=replace(config.training, seed=seed))
    network = build_network(config)
    ckpt = load_checkpoint(str(out_dir / "checkpoint.bin"))
    restore_network(network, ckpt)
    return config, network


# ---------------------------------------------------------------------------
# 1. gradient correctness on every layer kind
# ---------------------------------------------------------------------------

def test_criterion_01_gradient_correctness():
    t0 = time.perf_counter()
    worst = 0.0
    failures = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        osc = dict(mu0=1.0, beta=-1.0, kappa=0.4, dt=0.02,
                   omega_init_range=(0.5, 1.5), theta_init_seed=seed,
                   trainable_freq=True)
        nets = {
            "dense": (Network([ComplexDense(3, 5, "relu", seed=seed),
                               ComplexDense(5, 2, "identity",
                                            seed=seed + 50)]),
                      (3, 2), 12),
            "hopf-resonator": (Network([
                ComplexDense(2, 4, "relu", seed=seed),
                HopfLayer(HopfLayerConfig(width=4, mode="resonator", **osc)),
                ComplexDense(4, 1, "identity", seed=seed + 50)]),
                (2, 1), 40),
            "hopf-amplitude": (Network([
                ComplexDense(2, 4, "tanh", seed=seed),
                HopfLayer(HopfLayerConfig(width=4, mode="amplitude_mod",
                                          input_range=(-1.0, 1.0), **osc)),
                ComplexDense(4, 1, "identity", seed=seed + 50)]),
                (2, 1), 40),
            "hopf-frequency": (Network([
                ComplexDense(2, 4, "tanh", seed=seed),
                HopfLayer(HopfLayerConfig(width=4, mode="frequency_mod",
                                          **osc)),
                ComplexDense(4, 1, "identity", seed=seed + 50)]),
                (2, 1), 40),
            "ocnn": (Network([OCNNBlock(
                4, 4, 1, 2,
                HopfLayerConfig(width=32, mode="resonator", **osc),
                seed=seed)]),
                None, 3),
        }
        for kind, (net, dims, T) in nets.items():
            if dims is None:
                x = rng.uniform(0.0, 1.0, size=(4, 4, 1, T))
                y = rng.uniform(0.0, 1.0, size=(4, 4, 2, T))
            else:
                x = rng.normal(size=(dims[0], T))
                y = rng.normal(size=(dims[1], T))
            rep = grad_check(LossModel(net), sample=(x, y), tolerance=1e-3)
            worst = max(worst, rep.max_rel_err)
            if not rep.passed:
                failures.append("%s/seed%d worst %s rel %.2e"
                                % (kind, seed, rep.worst, rep.max_rel_err))
    seconds = time.perf_counter() - t0
    ok = not failures and seconds < 60.0
    report(1, "gradient-correctness", ok,
           "5 layer kinds x 5 seeds, max rel err %.2e, %.1f s"
           % (worst, seconds))
    assert not failures, "; ".join(failures)
    assert seconds < 60.0, "took %.1f s (budget 60 s)" % seconds


# ---------------------------------------------------------------------------
# 2. oscillator physics: unforced radius and the forced tuning curve
# ---------------------------------------------------------------------------

def test_criterion_02_oscillator_physics():
    t0 = time.perf_counter()
    # unforced supercritical oscillator settles on r = sqrt(mu/|beta|)
    cfg = HopfLayerConfig(width=1, mode="resonator", mu0=1.0, beta=-1.0,
                          kappa=0.0, dt=1e-3, omega_init_range=(0.1, 0.1),
                          r_init=0.2, theta_init_seed=0)
    z = simulate(cfg, lambda t: np.zeros(1, complex), n_steps=20000)
    r_err = abs(abs(z[0, -1]) - 1.0)

    # forced tuning curve at mu=1, beta=-100, F=0.2 (lock = relative-phase
    # drift below 0.1 rad over the final 20% of the run)
    grid = np.linspace(-6.0, 6.0, 41)
    res = resonance_sweep(mu0=1.0, beta=-100.0, force=0.2, domega_grid=grid,
                          dt=1e-3, n_steps=40000, lock_tol=0.1)
    peak_at = int(np.argmax(res["amplitude"]))
    center = int(np.argmin(np.abs(grid)))
    band = grid[res["locked"]]
    slipped_edges = bool(res["slipped"][0] and res["slipped"][-1])
    seconds = time.perf_counter() - t0

    ok = (r_err < 1e-3 and abs(peak_at - center) <= 1 and len(band) >= 3
          and band.min() < 0 < band.max() and slipped_edges
          and seconds < 120.0)
    report(2, "oscillator-physics", ok,
           "unforced radius err %.1e, peak offset %d step(s), "
           "locked band [%.1f, %.1f] rad/s, edges slip %s, %.1f s"
           % (r_err, peak_at - center,
              band.min() if band.size else np.nan,
              band.max() if band.size else np.nan, slipped_edges, seconds))
    assert r_err < 1e-3
    assert abs(peak_at - center) <= 1
    assert band.size >= 3 and band.min() < 0 < band.max()
    assert slipped_edges
    assert seconds < 120.0


# ---------------------------------------------------------------------------
# 3. forward Euler is first order: halving dt halves the error
# ---------------------------------------------------------------------------

def test_criterion_03_euler_convergence():
    ratios = {}
    for mode in ("resonator", "amplitude_mod", "frequency_mod"):
        kw = dict(width=2, mu0=1.0, beta=-1.0, kappa=0.4, dt=0.02,
                  omega_init_range=(0.8, 1.2), theta_init_seed=3)
        if mode == "amplitude_mod":
            kw["input_range"] = (-1.0, 1.0)
        cfg = HopfLayerConfig(mode=mode, **kw)

        def drive(t):
            base = (np.sin(2 * np.pi * 0.7 * t)
                    + 0.3 * np.cos(2 * np.pi * 1.3 * t))
            return np.array([0.5 * base, -0.4 * base]) * (1.0 + 0.2j)

        errs = []
        for c in (cfg, replace(cfg, dt=cfg.dt / 2)):
            n = int(round(3.0 / c.dt))
            sim = simulate(c, drive, n_steps=n)
            ref = reference_simulate(c, drive, n)
            errs.append(np.max(np.abs(sim - ref)))
        ratios[mode] = errs[1] / errs[0]
    ok = all(0.4 <= r <= 0.6 for r in ratios.values())
    report(3, "euler-convergence", ok,
           "error ratios after halving dt: " +
           ", ".join("%s %.3f" % kv for kv in sorted(ratios.items())))
    for mode, r in ratios.items():
        assert 0.4 <= r <= 0.6, "%s ratio %.3f not first order" % (mode, r)


# ---------------------------------------------------------------------------
# 4. Butterworth oracle frequency response
# ---------------------------------------------------------------------------

def test_criterion_04_butterworth_oracle():
    fs = 1000.0
    cascade = design_butterworth_bandpass(order=4, f_lo=50.0, f_hi=100.0,
                                          fs=fs)
    edges = np.abs(frequency_response(cascade, np.array([50.0, 100.0]), fs))
    center = abs(frequency_response(
        cascade, np.array([np.sqrt(50.0 * 100.0)]), fs)[0])

    n = 8192
    impulse = np.zeros(n)
    impulse[0] = 1.0
    h = apply_filter(cascade, impulse)
    fft_mag = np.abs(np.fft.rfft(h))
    designed = np.abs(frequency_response(
        cascade, np.fft.rfftfreq(n, d=1.0 / fs), fs))
    fft_err = np.max(np.abs(fft_mag - designed))

    edge_err = np.max(np.abs(edges - 1.0 / np.sqrt(2.0)))
    ok = edge_err < 1e-3 and abs(center - 1.0) < 0.01 and fft_err < 1e-6
    report(4, "butterworth-oracle", ok,
           "edge gains %.6f/%.6f (-3 dB err %.1e), center %.4f, "
           "impulse-FFT err %.1e"
           % (edges[0], edges[1], edge_err, center, fft_err))
    assert edge_err < 1e-3
    assert abs(center - 1.0) < 0.01
    assert fft_err < 1e-6


# ---------------------------------------------------------------------------
# 5. signal generation benchmark
# ---------------------------------------------------------------------------

def test_criterion_05_signal_generation(run_root):
    vals, total = [], 0.0
    for seed in (0, 1, 2):
        _, rows, seconds = train_run(run_root, "signal_generation.toml", seed)
        vals.append(final_val(rows))
        total += seconds
    mean = float(np.mean(vals))
    ok = mean <= 0.02 and total < 600.0
    report(5, "signal-generation", ok,
           "val MSE %s, mean %.4f (gate 0.02), %.0f s for 3 seeds"
           % (["%.4f" % v for v in vals], mean, total))
    assert mean <= 0.02
    assert total < 600.0


# ---------------------------------------------------------------------------
# 6. AM demodulation benchmark
# ---------------------------------------------------------------------------

def test_criterion_06_am_demodulation(run_root):
    vals, total = [], 0.0
    for seed in (0, 1, 2):
        _, rows, seconds = train_run(run_root, "am_demodulation.toml", seed)
        vals.append(final_val(rows))
        total += seconds
    ok = all(v <= 0.04 for v in vals) and total < 1800.0
    report(6, "am-demodulation", ok,
           "val MSE %s (gate 0.04 each), %.0f s for 3 seeds"
           % (["%.4f" % v for v in vals], total))
    assert all(v <= 0.04 for v in vals), vals
    assert total < 1800.0


# ---------------------------------------------------------------------------
# 7. band-pass filter learning
# ---------------------------------------------------------------------------

def probe_gain(config, network, freq_hz):
    """Steady-state output RMS for a unit sinusoid at freq_hz."""
    dt = 1.0 / config.dataset.get("fs", 1000.0)
    T = int(round(1.0 / dt))
    t = np.arange(T) * dt
    x = np.sin(2 * np.pi * freq_hz * t)[None, :]
    out = network.forward(as_tensor(x)).re[0]
    tail = out[T // 2:]
    return float(np.sqrt(np.mean(tail ** 2)))


def test_criterion_07_filtering(run_root):
    vals, total = [], 0.0
    out_dirs = {}
    for seed in (0, 1, 2):
        out, rows, seconds = train_run(run_root, "filtering.toml", seed)
        vals.append(final_val(rows))
        out_dirs[seed] = out
        total += seconds

    config, network = restored_network(CONFIGS / "filtering.toml", 0,
                                       out_dirs[0])
    g75 = probe_gain(config, network, 75.0)
    g5 = probe_gain(config, network, 5.0)
    ratio = g75 / max(g5, 1e-12)

    mse_ok = all(v <= 0.01 for v in vals)
    ok = mse_ok and ratio > 5.0 and total < 1800.0
    report(7, "filtering", ok,
           "val MSE %s (gate 0.01 each), probe gain 75 Hz %.3f vs 5 Hz %.3f "
           "(ratio %.1f, gate >5), %.0f s for 3 seeds"
           % (["%.4f" % v for v in vals], g75, g5, ratio, total))
    assert mse_ok, ("val MSE %s exceeds the 0.01 gate: a forward-Euler "
                    "resonator bank self-excites onto limit cycles (the "
                    "angular advance inflates every oscillator's effective "
                    "mu by ~omega^2*dt/2), and that background plus the "
                    "near-constant amplitude of entrained units floors the "
                    "achievable MSE near 0.06 at this architecture" % vals)
    assert ratio > 5.0, "passband/stopband ratio %.2f" % ratio
    assert total < 1800.0


# ---------------------------------------------------------------------------
# 8. integration/differentiation operators and trajectory integration
# ---------------------------------------------------------------------------

def test_criterion_08_operators(run_root):
    results = {}
    for name, gate in (("operator_integrate.toml", 0.15),
                       ("operator_differentiate.toml", 0.2)):
        vals = []
        for seed in (0, 1, 2):
            _, rows, _ = train_run(run_root, name, seed)
            vals.append(final_val(rows))
        results[name] = (vals, gate)

    out, rows, _ = train_run(run_root, "trajectory.toml", 0)
    traj_val = final_val(rows)
    config, network = restored_network(CONFIGS / "trajectory.toml", 0, out)
    dataset = build_dataset(config, seed=config.seed)
    _, val_idx = split_indices(len(dataset.samples), config.training)
    worst_abs = 0.0
    worst_origin = 0.0
    for i in val_idx:
        s = dataset.samples[i]
        pred = network.forward(as_tensor(np.asarray(s.input))).re
        worst_abs = max(worst_abs, float(np.max(np.abs(pred))))
        start_err = float(np.linalg.norm(pred[:, 0]
                                         - np.asarray(s.target)[:, 0]))
        worst_origin = max(worst_origin, start_err)

    op_ok = all(all(v <= gate for v in vals)
                for vals, gate in results.values())
    traj_ok = traj_val <= 0.15 and worst_abs <= 1.0 and worst_origin <= 0.1
    ok = op_ok and traj_ok
    ints, _ = results["operator_integrate.toml"]
    diffs, _ = results["operator_differentiate.toml"]
    report(8, "operators", ok,
           "integrate %s (gate 0.15), differentiate %s (gate 0.2), "
           "trajectory val %.4f (gate 0.15), max |pred| %.3f (box 1), "
           "origin err %.3f (gate 0.1)"
           % (["%.4f" % v for v in ints], ["%.4f" % v for v in diffs],
              traj_val, worst_abs, worst_origin))
    assert op_ok, results
    assert traj_val <= 0.15
    assert worst_abs <= 1.0, "trajectory prediction leaves the box"
    assert worst_origin <= 0.1


# ---------------------------------------------------------------------------
# 9. video frame prediction (the long one)
# ---------------------------------------------------------------------------

def localization_rate(config, network, dataset):
    """Fraction of validation frames whose predicted argmax pixel falls
    within 2 px of the true square."""
    _, val_idx = split_indices(len(dataset.samples), config.training)
    near = 0
    frames = 0
    for i in val_idx:
        s = dataset.samples[i]
        x = np.asarray(s.input)[:, :, :, None, :]  # add a batch axis
        pred = network.forward(as_tensor(x)).re[:, :, 0, 0, :]
        target = np.asarray(s.target)
        T = target.shape[-1]
        for t in range(T):
            p = pred[:, :, t]
            truth = np.argwhere(target[:, :, 0, t] >= 0.5)
            if len(truth) == 0:
                continue
            am = np.unravel_index(int(np.argmax(p)), p.shape)
            dist = np.min(np.linalg.norm(truth - np.asarray(am), axis=1))
            frames += 1
            near += int(dist <= 2.0)
    return near / max(frames, 1)


@pytest.mark.slow
def test_criterion_09_video_frame_prediction(run_root):
    vals, rates, total = [], [], 0.0
    for seed in (0, 1):
        out, rows, seconds = train_run(run_root,
                                       "video_frame_prediction.toml", seed)
        vals.append(final_val(rows))
        total += seconds
        config, network = restored_network(
            CONFIGS / "video_frame_prediction.toml", seed, out)
        dataset = build_dataset(config, seed=config.seed)
        rates.append(localization_rate(config, network, dataset))
    ok = (all(v <= 0.08 for v in vals) and all(r >= 0.8 for r in rates)
          and total < 7200.0)
    report(9, "video-frame-prediction", ok,
           "val MSE %s (gate 0.08 each), localization %s (gate 0.80), "
           "%.0f s for 2 seeds"
           % (["%.4f" % v for v in vals], ["%.2f" % r for r in rates],
              total))
    assert all(v <= 0.08 for v in vals), vals
    assert all(r >= 0.8 for r in rates), rates
    assert total < 7200.0


# ---------------------------------------------------------------------------
# 10. byte-identical reruns
# ---------------------------------------------------------------------------

def test_criterion_10_determinism(run_root):
    first, _, _ = train_run(run_root, "signal_generation.toml", 0)
    rerun = run_root / "determinism-rerun"
    rc = cli_main(["train", "--config",
                   str(CONFIGS / "signal_generation.toml"),
                   "--seed", "0", "--out", str(rerun)])
    assert rc == 0
    a = (first / "metrics.csv").read_bytes()
    b = (rerun / "metrics.csv").read_bytes()
    ok = a == b
    report(10, "determinism", ok,
           "metrics.csv rerun identical: %s (%d bytes)" % (ok, len(a)))
    assert ok
