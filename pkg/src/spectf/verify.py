"""Stand-alone oracle suite: the spectral identities and the full-model
gradient check, runnable before and independently of any training. The
tolerances defined here are the single source of truth for the test suite.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import spectral, textenc
from .ctensor import Tape
from .data import MultimodalWindow
from .model import ModelConfig, SpecTFModel, count_parameters

TOL_POLAR = 1e-10
TOL_CONVOLUTION = 1e-9
TOL_PARSEVAL = 1e-9
TOL_GRADIENT = 1e-4
GRADIENT_FLOOR = 1e-7
FD_EPSILON = 1e-4
GRADIENT_CHECK_MAX_SCALARS = 2000

CONVOLUTION_LENGTHS = (4, 7, 24, 48)
PARSEVAL_LENGTHS = (4, 7, 24, 48)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    cases: int

    @classmethod
    def from_error(cls, name, max_error, tolerance, cases):
        return cls(name, bool(max_error <= tolerance), float(max_error),
                   float(tolerance), int(cases))

    def to_dict(self):
        return asdict(self)


def finite_difference_error(params, forward, eps=FD_EPSILON, floor=GRADIENT_FLOOR):
    """Max relative disagreement between tape gradients and central finite
    differences over every re/im entry of `params`.

    `forward(tape)` must rebuild the graph from current parameter values
    and return the scalar loss node; it is re-evaluated (without recording)
    for each perturbation.
    """
    for p in params:
        p.zero_grad()
    tape = Tape()
    tape.backward(forward(tape))

    def loss_value():
        return float(forward(Tape(record=False)).re[0, 0])

    worst = 0.0
    for p in params:
        for arr, grad in ((p.value.re, p.grad.re), (p.value.im, p.grad.im)):
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + eps
                up = loss_value()
                arr[idx] = orig - eps
                down = loss_value()
                arr[idx] = orig
                numeric = (up - down) / (2 * eps)
                analytic = float(grad[idx])
                rel = abs(numeric - analytic) / max(abs(numeric), abs(analytic), floor)
                worst = max(worst, rel)
    return worst


def check_complex_mult_polar(trials=10_000, seed=0):
    """The engine's complex product obeys |z1*z2| = |z1||z2| and
    arg(z1*z2) = arg(z1) + arg(z2) (mod 2*pi)."""
    if trials < 1:
        raise ValueError("check_complex_mult_polar: trials must be >= 1")
    rng = np.random.default_rng(seed)
    shape = (trials, 1)
    z1 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    z2 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    tape = Tape(record=False)
    out = tape.cmul_elementwise(tape.constant(z1.real, z1.imag),
                                tape.constant(z2.real, z2.imag))
    prod = out.re + 1j * out.im
    mag_err = np.abs(np.abs(prod) - np.abs(z1) * np.abs(z2))
    mag_rel = mag_err / np.maximum(np.abs(z1) * np.abs(z2), 1e-30)
    phase = np.angle(prod) - (np.angle(z1) + np.angle(z2))
    phase = np.abs((phase + np.pi) % (2 * np.pi) - np.pi)
    worst = max(float(mag_rel.max()), float(phase.max()))
    return CheckResult.from_error("complex_mult_polar", worst, TOL_POLAR, trials)


def check_convolution_theorem(trials=25, lengths=CONVOLUTION_LENGTHS, seed=0):
    """Binwise spectrum product inverts to the direct circular convolution."""
    if min(lengths) < 2:
        raise ValueError("check_convolution_theorem: lengths must be >= 2")
    rng = np.random.default_rng(seed)
    worst = 0.0
    cases = 0
    for n in lengths:
        for _ in range(trials):
            x = rng.standard_normal(n)
            h = rng.standard_normal(n)
            freq = spectral.irfft(spectral.Spectrum(
                spectral.rfft(x).bins * spectral.rfft(h).bins, n))
            direct = spectral.circular_convolve(x, h)
            scale = max(float(np.max(np.abs(direct))), 1e-30)
            worst = max(worst, float(np.max(np.abs(freq - direct))) / scale)
            cases += 1
    return CheckResult.from_error("convolution_theorem", worst, TOL_CONVOLUTION, cases)


def check_parseval(trials=100, lengths=PARSEVAL_LENGTHS, seed=0):
    """Time-domain energy equals (1/n)-scaled spectral energy."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    cases = 0
    for n in lengths:
        for _ in range(trials):
            x = rng.standard_normal(n)
            sig = spectral.signal_energy(x)
            spec = spectral.spectral_energy(spectral.fft(x))
            worst = max(worst, abs(sig - spec) / max(sig, 1e-30))
            cases += 1
    return CheckResult.from_error("parseval", worst, TOL_PARSEVAL, cases)


def tiny_gradient_config(seed=0):
    """Default gradient-check configuration: small enough for exhaustive
    perturbation of every parameter scalar."""
    return ModelConfig(lookback=8, horizon=4, d=4, d_k=2, d_lm=6,
                       dropout=0.0, prior_weight=0.5, seed=seed)


def _gradient_check_window(config, seed):
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal(config.lookback + config.horizon) * 1.5 + 0.5
    look = raw[: config.lookback]
    mean, std = float(look.mean()), float(look.std())
    ts = np.arange(config.lookback, dtype=np.int64)
    records = [textenc.TextRecord(int(t), rng.standard_normal(config.d_lm).astype(np.float32))
               for t in (0, config.lookback // 3, 2 * config.lookback // 3)]
    return MultimodalWindow(
        channel="ch0",
        lookback=(look - mean) / std,
        target=raw[config.lookback:],
        text=textenc.align_texts_to_window(records, ts, config.d_lm),
        norm_mean=mean,
        norm_std=std,
        timestamps=ts,
    )


def check_gradients(config=None, seed=0):
    """Every parameter gradient of the full forward + MSE graph against
    central finite differences, in float64."""
    config = config or tiny_gradient_config(seed)
    n_scalars = count_parameters(config)
    if n_scalars > GRADIENT_CHECK_MAX_SCALARS:
        raise ValueError(
            f"check_gradients: config has {n_scalars} scalars, "
            f"limit is {GRADIENT_CHECK_MAX_SCALARS}")
    model = SpecTFModel(config, dtype=np.float64)
    # evaluate at a generic parameter point: zero-initialized biases put
    # pre-activations exactly on the leaky-ReLU kink (bin 0 of a z-normalized
    # window is ~0), where central differences are meaningless
    jitter = np.random.default_rng(np.random.SeedSequence([seed, 0x6A77]))
    for p in model.parameters():
        p.value.re += jitter.uniform(-0.3, 0.3, p.value.shape)
        p.value.im += jitter.uniform(-0.3, 0.3, p.value.shape)
    window = _gradient_check_window(config, seed)
    target = window.target_norm.reshape(-1, 1)

    def forward(tape):
        res = model.forward(window, tape=tape, training=False)
        return tape.mse(res.loss_node, target)

    err = finite_difference_error(model.parameters(), forward)
    return CheckResult.from_error("gradient_check", err, TOL_GRADIENT, n_scalars)


def run_all(seed=0):
    """The full check suite in a fixed order."""
    return [
        check_complex_mult_polar(seed=seed),
        check_convolution_theorem(seed=seed),
        check_parseval(seed=seed),
        check_gradients(seed=seed),
    ]
