"""Training loop, metrics, and the ablation harness.

One run is one single-threaded differentiation context: windows are
shuffled per epoch by a seeded generator, loss is MSE in normalized space,
early stopping watches validation loss with the configured patience, and
the best-validation parameters are restored on exit. Everything reported is
a deterministic function of (seed, config, data).
"""

import os
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import backend
from .ctensor import Tape
from .model import SpecTFModel, count_parameters


class TrainingError(RuntimeError):
    """Numeric failure during optimization (exit code 3 at the CLI)."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 50
    patience: int = 20
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: Optional[float] = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("TrainConfig: batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("TrainConfig: epochs must be >= 1")
        if not 0 <= self.patience <= self.epochs:
            raise ValueError("TrainConfig: need 0 <= patience <= epochs")
        if self.learning_rate <= 0:
            raise ValueError("TrainConfig: learning_rate must be positive")


@dataclass
class RunReport:
    train_loss: list = field(default_factory=list)   # per epoch, normalized
    val_loss: list = field(default_factory=list)     # per epoch, normalized
    best_epoch: int = -1
    epochs_run: int = 0
    test_mse_norm: Optional[float] = None
    test_mae_norm: Optional[float] = None
    test_mse_raw: Optional[float] = None
    test_mae_raw: Optional[float] = None
    parameter_count: int = 0
    seed: int = 0
    variant: str = "full"
    backend: str = ""
    wall_ms: float = 0.0

    def to_dict(self):
        return asdict(self)


# ---- metrics ----------------------------------------------------------------


def mse(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"mse: length mismatch {pred.shape} vs {truth.shape}")
    return float(np.mean((truth - pred) ** 2))


def mae(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"mae: length mismatch {pred.shape} vs {truth.shape}")
    return float(np.mean(np.abs(truth - pred)))


# ---- optimizer ---------------------------------------------------------------


def adam_step(param, state, lr, betas=(0.9, 0.999), eps=1e-8):
    """One Adam update on a parameter from its accumulated gradient.

    Every real scalar (re and im entries alike) is updated independently
    with bias-corrected first/second moments; `state` is created on first
    use and carries its own step counter.
    """
    if not state:
        z = lambda a: np.zeros_like(a, dtype=np.float64)
        state.update(t=0, m_re=z(param.value.re), v_re=z(param.value.re),
                     m_im=z(param.value.im), v_im=z(param.value.im))
    state["t"] += 1
    b1, b2 = betas
    t = state["t"]
    for part, m_key, v_key in (("re", "m_re", "v_re"), ("im", "m_im", "v_im")):
        g = getattr(param.grad, part).astype(np.float64)
        m = state[m_key]
        v = state[v_key]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        value = getattr(param.value, part)
        value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(value.dtype)
    return state


class AdamOptimizer:
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = [dict() for _ in self.params]

    def step(self):
        for param, state in zip(self.params, self.state):
            adam_step(param, state, self.lr, self.betas, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def clip_grad_norm(params, max_norm):
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        total += float(np.sum(p.grad.re.astype(np.float64) ** 2))
        total += float(np.sum(p.grad.im.astype(np.float64) ** 2))
    norm = np.sqrt(total)
    if max_norm is not None and norm > max_norm > 0:
        scale = max_norm / norm
        for p in params:
            p.grad.re *= p.grad.re.dtype.type(scale)
            p.grad.im *= p.grad.im.dtype.type(scale)
    return norm


# ---- evaluation ----------------------------------------------------------------


def _window_metrics(model, window, variant):
    res = model.forward(window, variant=variant)
    return (
        window.channel,
        mse(res.prediction_norm, window.target_norm),
        mae(res.prediction_norm, window.target_norm),
        mse(res.prediction, window.target),
        mae(res.prediction, window.target),
    )


def _macro_average(rows):
    by_channel = {}
    for channel, *metrics in rows:
        by_channel.setdefault(channel, []).append(metrics)
    per_channel = [np.mean(np.asarray(m), axis=0) for m in by_channel.values()]
    out = np.mean(np.asarray(per_channel), axis=0)
    return {"mse_norm": float(out[0]), "mae_norm": float(out[1]),
            "mse_raw": float(out[2]), "mae_raw": float(out[3])}


def evaluate(model, windows, variant="full"):
    """MSE/MAE in normalized and raw space, averaged per channel then
    across channels. Fan-out across windows is capped by SPECTF_THREADS;
    the reduction order is fixed by window index either way."""
    if not windows:
        raise ValueError("evaluate: empty window set")
    workers = int(os.environ.get("SPECTF_THREADS", "1") or "1")
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda w: _window_metrics(model, w, variant), windows))
    else:
        rows = [_window_metrics(model, w, variant) for w in windows]
    return _macro_average(rows)


def mean_baseline_metrics(windows):
    """Metrics of the predictor that repeats each window's mean (all zeros
    in normalized space)."""
    if not windows:
        raise ValueError("mean_baseline_metrics: empty window set")
    rows = []
    for w in windows:
        pred_norm = np.zeros_like(w.target)
        pred_raw = np.full_like(w.target, w.norm_mean)
        rows.append((w.channel,
                     mse(pred_norm, w.target_norm), mae(pred_norm, w.target_norm),
                     mse(pred_raw, w.target), mae(pred_raw, w.target)))
    return _macro_average(rows)


# ---- training -------------------------------------------------------------------


def _snapshot(params):
    return [(p.value.re.copy(), p.value.im.copy()) for p in params]


def _restore(params, snap):
    for p, (re, im) in zip(params, snap):
        p.value.re[:] = re
        p.value.im[:] = im


def train(model, train_windows, val_windows, config, test_windows=None,
          variant="full"):
    """Optimize in normalized space with early stopping on validation loss;
    the best-validation parameters are restored (and evaluated on the test
    windows when given)."""
    if not train_windows or not val_windows:
        raise ValueError("train: train and validation window sets must be nonempty")
    t0 = time.perf_counter()
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(seeds[0])
    dropout_rng = np.random.default_rng(seeds[1])

    params = model.parameters()
    optimizer = AdamOptimizer(params, config.learning_rate,
                              (config.beta1, config.beta2), config.eps)
    report = RunReport(parameter_count=count_parameters(model.config),
                       seed=config.seed, variant=variant, backend=backend.name())

    best_val = np.inf
    best_snap = _snapshot(params)
    stale = 0
    n = len(train_windows)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = [train_windows[i] for i in order[start : start + config.batch_size]]
            tape = Tape()
            total = None
            for w in batch:
                res = model.forward(w, tape=tape, training=True,
                                    rng=dropout_rng, variant=variant)
                loss = tape.mse(res.loss_node, w.target_norm.reshape(-1, 1))
                total = loss if total is None else tape.radd(total, loss)
            batch_loss = tape.scale_real(total, 1.0 / len(batch))
            value = float(batch_loss.re[0, 0])
            if not np.isfinite(value):
                raise TrainingError(f"train: loss diverged at epoch {epoch}")
            tape.backward(batch_loss)
            clip_grad_norm(params, config.grad_clip)
            optimizer.step()
            optimizer.zero_grad()
            epoch_loss += value * len(batch)
        report.train_loss.append(epoch_loss / n)

        val = evaluate(model, val_windows, variant=variant)["mse_norm"]
        report.val_loss.append(val)
        if val < best_val:
            best_val = val
            best_snap = _snapshot(params)
            report.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale > config.patience:
                break
    report.epochs_run = len(report.train_loss)
    _restore(params, best_snap)

    if test_windows:
        metrics = evaluate(model, test_windows, variant=variant)
        report.test_mse_norm = metrics["mse_norm"]
        report.test_mae_norm = metrics["mae_norm"]
        report.test_mse_raw = metrics["mse_raw"]
        report.test_mae_raw = metrics["mae_raw"]
    report.wall_ms = (time.perf_counter() - t0) * 1000.0
    return report


def ablation_run(windows, model_config, train_config,
                 modes=("full", "no_text", "no_attention", "no_mulfusion")):
    """Train one variant per mode from identical seeded initialization and
    identical data; returns {mode: RunReport}."""
    train_w, val_w, test_w = windows
    reports = {}
    for mode in modes:
        model = SpecTFModel(model_config)
        reports[mode] = train(model, train_w, val_w, train_config,
                              test_windows=test_w, variant=mode)
    return reports
