"""Frequency-domain fusion of text embeddings with time-series spectra.

A self-contained forecasting engine: real-input Fourier transforms with a
naive oracle, complex-valued matrices with tape-based reverse-mode
differentiation, a text-to-complex projection stage, a cross-attention
fusion model operating on frequency bins, sliding-window data handling,
an Adam training loop, and a verification suite of spectral identities.
"""

__version__ = "0.1.0"
