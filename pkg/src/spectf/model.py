"""The assembled forecaster: spectrum embedding, text hookup, frequency
cross-attention with multiplicative fusion, spectral forecasting, and
projection back to the time domain.

Everything operates on one channel at a time (multivariate series are fed
channel by channel through shared weights). A forward pass consumes one
window and produces the prediction in both normalized and raw space plus
the attention matrix and diagnostic internals.
"""

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import spectral, textenc
from .ctensor import ComplexMatrix, Parameter, Tape, load_checkpoint, save_checkpoint

VARIANTS = ("full", "no_text", "no_attention", "no_mulfusion")


@dataclass(frozen=True)
class ModelConfig:
    lookback: int = 24
    horizon: int = 12
    d: int = 16
    d_k: int = 8
    d_lm: int = 32
    dropout: float = 0.1
    prior_weight: float = 0.5
    act_embed: bool = True
    act_attention: bool = True
    act_forecaster: bool = False
    act_projection: bool = False
    seed: int = 0

    def __post_init__(self):
        checks = [
            (self.lookback >= 2, "lookback must be >= 2"),
            (self.horizon >= 1, "horizon must be >= 1"),
            (self.d >= 1, "d must be >= 1"),
            (self.d_k >= 1, "d_k must be >= 1"),
            (self.d_lm >= 1, "d_lm must be >= 1"),
            (0 <= self.dropout < 1, "dropout must be in [0, 1)"),
            (0 <= self.prior_weight <= 1, "prior_weight must be in [0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(f"ModelConfig: {msg}")

    @property
    def freq_in(self):
        """Frequency rows of the lookback spectrum."""
        return self.lookback // 2 + 1

    @property
    def freq_out(self):
        """Frequency rows of the forecast spectrum."""
        return self.horizon // 2 + 1


class FreqMlpLayer:
    """Fully connected layer with complex weights and bias; activation is
    split leaky-ReLU or linear."""

    def __init__(self, w, b, activation):
        self.w = w
        self.b = b
        self.activation = activation

    @classmethod
    def create(cls, name, fan_in, fan_out, activation, rng, dtype):
        # complex Glorot: each part scaled by 1/sqrt(2) so |w| matches the
        # real-valued Glorot variance
        limit = np.sqrt(6.0 / (fan_in + fan_out)) / np.sqrt(2.0)
        re = rng.uniform(-limit, limit, (fan_in, fan_out))
        im = rng.uniform(-limit, limit, (fan_in, fan_out))
        w = Parameter(f"{name}.w", ComplexMatrix(re.astype(dtype), im.astype(dtype)))
        b = Parameter(f"{name}.b", ComplexMatrix.zeros(1, fan_out, dtype))
        return cls(w, b, activation)

    def parameters(self):
        return [self.w, self.b]

    def forward(self, tape, x):
        out = tape.cmatmul(x, tape.leaf(self.w))
        out = tape.add_bias_row(out, tape.leaf(self.b))
        return tape.capply_activation(out, self.activation)


@dataclass
class ForwardResult:
    prediction: np.ndarray            # raw space, length H
    prediction_norm: np.ndarray       # normalized space, length H
    attention: Optional[np.ndarray]   # [freq_in x L] softmax rows, None without attention
    aux_prediction: Optional[np.ndarray]       # raw-space text-free path
    aux_prediction_norm: Optional[np.ndarray]
    loss_node: object                 # [H x 1] normalized-space tape node
    input_bins: np.ndarray            # complex128 lookback half spectrum
    embed_before: np.ndarray          # complex128 [freq_in x d] embedding
    embed_after: np.ndarray           # complex128 [freq_in x d] after fusion
    predicted_bins: np.ndarray        # complex128 forecast half spectrum


def _act(flag):
    return "leaky_relu" if flag else "linear"


class SpecTFModel:
    """All trainable blocks plus the parameter registry."""

    def __init__(self, config, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(config.seed)
        # construction order is fixed so models built for different ablation
        # variants from the same seed share identical initial weights
        self.ts_embed = FreqMlpLayer.create(
            "ts_embed", 1, config.d, _act(config.act_embed), rng, self.dtype)
        self.text_proj = textenc.TextProjection.create(
            config.d_lm, config.d, rng, self.dtype)
        self.attn_q = FreqMlpLayer.create(
            "attn_q", config.d, config.d_k, _act(config.act_attention), rng, self.dtype)
        self.attn_k = FreqMlpLayer.create(
            "attn_k", config.d, config.d_k, _act(config.act_attention), rng, self.dtype)
        self.attn_v = FreqMlpLayer.create(
            "attn_v", config.d, config.d, _act(config.act_attention), rng, self.dtype)
        self.forecaster = FreqMlpLayer.create(
            "forecaster", config.freq_in, config.freq_out,
            _act(config.act_forecaster), rng, self.dtype)
        self.projection = FreqMlpLayer.create(
            "projection", config.d, 1, _act(config.act_projection), rng, self.dtype)
        self.pos_encoding = textenc.sinusoid_table(
            np.arange(config.freq_in), config.d).astype(self.dtype)

        self._params = []
        for layer in (self.ts_embed, self.text_proj, self.attn_q, self.attn_k,
                      self.attn_v, self.forecaster, self.projection):
            self._params.extend(layer.parameters())

    def parameters(self):
        return list(self._params)

    def registry(self):
        return {p.name: p for p in self._params}

    def zero_grad(self):
        for p in self._params:
            p.zero_grad()

    # ---- blocks ----------------------------------------------------------

    def embed_series(self, tape, x_norm, training=False, rng=None):
        """Half spectrum of the normalized lookback, mapped binwise to d
        dims, plus the positional table on the real component."""
        x_norm = np.asarray(x_norm, dtype=np.float64)
        if x_norm.shape != (self.config.lookback,):
            raise ValueError(
                f"embed_series: expected length {self.config.lookback}, "
                f"got {x_norm.shape}")
        bins = spectral.rfft(x_norm).bins
        col = tape.constant(bins.real.astype(self.dtype).reshape(-1, 1),
                            bins.imag.astype(self.dtype).reshape(-1, 1))
        emb = self.ts_embed.forward(tape, col)
        emb = tape.add_real_table(emb, self.pos_encoding)
        emb = tape.cdropout(emb, self.config.dropout, training, rng)
        return emb, bins

    def text_sequence(self, tape, text):
        """Aligned text rows -> complex [L x d] node.

        Temporal signatures use window-relative step indices: absolute epoch
        indices would let the text branch key on where a window sits in the
        series and then fail on chronologically later evaluation segments.
        """
        aligned = textenc.temporal_align(text, np.arange(text.shape[0]))
        return self.text_proj.forward(tape, aligned)

    def freq_cross_attention(self, tape, x_emb, s, training=False, rng=None):
        """Frequency-bin queries against text keys/values; returns the
        attended values and the attention probabilities."""
        cfg = self.config
        if x_emb.shape != (cfg.freq_in, cfg.d):
            raise ValueError(f"freq_cross_attention: bad query input {x_emb.shape}")
        if s.shape[1] != cfg.d:
            raise ValueError(f"freq_cross_attention: bad text input {s.shape}")
        q = self.attn_q.forward(tape, x_emb)
        k = self.attn_k.forward(tape, s)
        v = self.attn_v.forward(tape, s)
        scores = tape.scale_real(
            tape.cmagnitude(tape.cmatmul(q, tape.transpose(k))),
            1.0 / np.sqrt(cfg.d_k))
        attn = tape.softmax_rows(scores)
        attn_used = tape.rdropout(attn, cfg.dropout, training, rng)
        out = tape.rcmatmul(attn_used, v)
        return out, attn

    def multiplication_fusion(self, tape, x_emb, o, variant="full"):
        """Entrywise complex modulation of the embedding by the attended
        text, blended with the unfused embedding by the prior weight."""
        if x_emb.shape != o.shape:
            raise ValueError(
                f"multiplication_fusion: shape mismatch {x_emb.shape} vs {o.shape}")
        alpha = self.config.prior_weight
        if variant == "no_mulfusion":
            fused = tape.add_scaled(x_emb, o, 1.0, 1.0)
        else:
            fused = tape.cmul_elementwise(x_emb, o)
        if alpha == 1.0:
            return fused
        return tape.add_scaled(x_emb, fused, 1.0 - alpha, alpha)

    def fuse_pooled_text(self, tape, x_emb, s):
        """Attention-free substitution: add the pooled text embedding onto
        every frequency row, then blend as usual."""
        pooled = tape.mean_rows(s)
        fused = tape.add_bias_row(x_emb, pooled)
        alpha = self.config.prior_weight
        if alpha == 1.0:
            return fused
        return tape.add_scaled(x_emb, fused, 1.0 - alpha, alpha)

    def forecast_spectrum(self, tape, x_fuse):
        """Map lookback frequency rows to horizon frequency rows, applying
        the spectral map along the frequency axis via transposition."""
        if x_fuse.shape != (self.config.freq_in, self.config.d):
            raise ValueError(f"forecast_spectrum: bad input {x_fuse.shape}")
        out = self.forecaster.forward(tape, tape.transpose(x_fuse))
        return tape.transpose(out)

    def project_and_invert(self, tape, xp_emb):
        """Collapse embedding dims to one complex bin per row, enforce the
        realness constraints, and inverse-transform to the horizon."""
        cfg = self.config
        if xp_emb.shape != (cfg.freq_out, cfg.d):
            raise ValueError(f"project_and_invert: bad input {xp_emb.shape}")
        col = self.projection.forward(tape, xp_emb)
        col = tape.hermitian_project(col, cfg.horizon)
        pred = tape.irfft_col(col, cfg.horizon)
        return pred, col

    # ---- full pass --------------------------------------------------------

    def forward(self, window, tape=None, training=False, rng=None, variant="full"):
        """One window through the whole pipeline.

        `variant` selects the ablation wiring: 'full', 'no_text' (text
        branch skipped entirely), 'no_attention' (pooled text added instead
        of attended), 'no_mulfusion' (additive instead of multiplicative
        fusion). The text-free auxiliary prediction is computed in
        evaluation mode only.
        """
        if variant not in VARIANTS:
            raise ValueError(f"forward: unknown variant {variant!r}")
        if tape is None:
            tape = Tape(record=False)
        cfg = self.config

        x_emb, input_bins = self.embed_series(
            tape, window.lookback, training=training, rng=rng)
        attention = None
        use_text = variant != "no_text" and cfg.prior_weight > 0
        if use_text:
            s = self.text_sequence(tape, window.text)
            if variant == "no_attention":
                fused = self.fuse_pooled_text(tape, x_emb, s)
            else:
                o, attn_node = self.freq_cross_attention(
                    tape, x_emb, s, training=training, rng=rng)
                fused = self.multiplication_fusion(tape, x_emb, o, variant)
                attention = attn_node.re.astype(np.float64, copy=True)
        else:
            fused = x_emb

        xp = self.forecast_spectrum(tape, fused)
        pred_node, pred_col = self.project_and_invert(tape, xp)

        pred_norm = pred_node.re[:, 0].astype(np.float64, copy=True)
        prediction = pred_norm * window.norm_std + window.norm_mean

        aux = aux_norm = None
        if not training and use_text:
            aux_tape = Tape(record=False)
            aux_emb, _ = self.embed_series(aux_tape, window.lookback)
            aux_sp = self.forecast_spectrum(aux_tape, aux_emb)
            aux_node, _ = self.project_and_invert(aux_tape, aux_sp)
            aux_norm = aux_node.re[:, 0].astype(np.float64, copy=True)
            aux = aux_norm * window.norm_std + window.norm_mean
        elif not training:
            aux_norm = pred_norm.copy()
            aux = prediction.copy()

        return ForwardResult(
            prediction=prediction,
            prediction_norm=pred_norm,
            attention=attention,
            aux_prediction=aux,
            aux_prediction_norm=aux_norm,
            loss_node=pred_node,
            input_bins=input_bins,
            embed_before=x_emb.re.astype(np.float64) + 1j * x_emb.im.astype(np.float64),
            embed_after=fused.re.astype(np.float64) + 1j * fused.im.astype(np.float64),
            predicted_bins=(pred_col.re[:, 0].astype(np.float64)
                            + 1j * pred_col.im[:, 0].astype(np.float64)),
        )


def count_parameters(config):
    """Trainable real scalars by closed formula: every complex parameter
    contributes its re and im entries; the paired text networks contribute
    exactly their (real) weights, which occupy the two halves of the packed
    parameters."""
    d, dk, dlm = config.d, config.d_k, config.d_lm
    fin, fout = config.freq_in, config.freq_out
    total = 0
    total += 2 * (1 * d + d)                  # spectrum embedding
    total += 2 * (dlm * d + d + d * d + d)    # text projection pair
    total += 2 * (d * dk + dk) * 2            # attention q and k
    total += 2 * (d * d + d)                  # attention v
    total += 2 * (fin * fout + fout)          # forecaster
    total += 2 * (d * 1 + 1)                  # projection
    return total


# ---- persistence -----------------------------------------------------------


def save_model(model, prefix, norm_mode="instance"):
    """Write `<prefix>.sptf` (parameters) and `<prefix>.json` (config
    sidecar including the normalization mode)."""
    prefix = str(prefix)
    save_checkpoint(model.parameters(), prefix + ".sptf")
    sidecar = {"config": asdict(model.config), "normalization": norm_mode,
               "format_version": 1}
    with open(prefix + ".json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(prefix, dtype=np.float32):
    """Rebuild a model from `save_model` output; returns (model, norm_mode)."""
    prefix = str(prefix)
    with open(prefix + ".json", "r", encoding="utf-8") as f:
        sidecar = json.load(f)
    config = ModelConfig(**sidecar["config"])
    model = SpecTFModel(config, dtype=dtype)
    values = load_checkpoint(prefix + ".sptf")
    for p in model.parameters():
        if p.name not in values:
            raise ValueError(f"checkpoint missing parameter {p.name!r}")
        loaded = values[p.name]
        if loaded.shape != p.value.shape:
            raise ValueError(
                f"checkpoint parameter {p.name!r} has shape {loaded.shape}, "
                f"model expects {p.value.shape}")
        p.value.re[:] = loaded.re.astype(model.dtype)
        p.value.im[:] = loaded.im.astype(model.dtype)
    return model, sidecar["normalization"]
