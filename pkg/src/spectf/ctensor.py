"""Complex-valued dense matrices with tape-based reverse-mode gradients.

Values are stored as split real/imaginary float arrays so the real and
imaginary parts of every parameter are independent real coordinates; the
gradient of a complex matrix product with respect to its left operand is
then dOut @ conj(B).T, realized as two pairs of real products. Matrices are
float32 by default with float64 reductions inside matrix products;
gradient checking runs everything in float64.

A `Tape` owns one single-threaded differentiation context: operations
record a backward closure in execution order and `backward()` replays them
exactly once in reverse. Forward passes on a frozen model can run with
``Tape(record=False)``, which computes values and records nothing.
"""

from contextlib import contextmanager

import numpy as np

from . import backend, spectral

# Test-only negative control: op names whose flowing gradient gets scaled,
# guaranteeing a gradient-check failure. Never set outside tests.
_corrupted_ops = {}


@contextmanager
def corrupt_backward(op_name, factor=3.0):
    _corrupted_ops[op_name] = factor
    try:
        yield
    finally:
        _corrupted_ops.pop(op_name, None)


class ComplexMatrix:
    """Dense 2-D complex value as two same-shape real arrays."""

    __slots__ = ("re", "im")

    def __init__(self, re, im):
        re = np.atleast_2d(np.asarray(re))
        im = np.atleast_2d(np.asarray(im))
        if re.shape != im.shape:
            raise ValueError(f"ComplexMatrix: re shape {re.shape} != im shape {im.shape}")
        if not (np.all(np.isfinite(re)) and np.all(np.isfinite(im))):
            raise ValueError("ComplexMatrix: entries must be finite")
        self.re = re
        self.im = im

    @classmethod
    def zeros(cls, rows, cols, dtype=np.float32):
        return cls(np.zeros((rows, cols), dtype=dtype), np.zeros((rows, cols), dtype=dtype))

    @property
    def rows(self):
        return self.re.shape[0]

    @property
    def cols(self):
        return self.re.shape[1]

    @property
    def shape(self):
        return self.re.shape

    @property
    def dtype(self):
        return self.re.dtype

    def copy(self):
        return ComplexMatrix(self.re.copy(), self.im.copy())

    def astype(self, dtype):
        return ComplexMatrix(self.re.astype(dtype), self.im.astype(dtype))

    def to_complex(self):
        return self.re.astype(np.complex128) + 1j * self.im.astype(np.complex128)


class Parameter:
    """Trainable complex matrix with a persistent gradient accumulator."""

    __slots__ = ("name", "value", "grad", "trainable")

    def __init__(self, name, value, trainable=True):
        self.name = name
        self.value = value
        self.grad = ComplexMatrix.zeros(value.rows, value.cols, value.dtype)
        self.trainable = trainable

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.re[:] = 0
        self.grad.im[:] = 0

    def num_scalars(self):
        """Trainable real scalars held: one per re entry plus one per im."""
        return 2 * self.value.rows * self.value.cols


class Node:
    """One tape value: split re/im arrays (im is None for real nodes) plus
    lazily allocated gradient buffers."""

    __slots__ = ("re", "im", "gre", "gim")

    def __init__(self, re, im=None):
        self.re = re
        self.im = im
        self.gre = None
        self.gim = None

    @property
    def shape(self):
        return self.re.shape

    @property
    def is_real(self):
        return self.im is None

    def _acc_re(self, g):
        if self.gre is None:
            self.gre = np.zeros_like(self.re)
        self.gre += g

    def _acc_im(self, g):
        if self.gim is None:
            self.gim = np.zeros_like(self.im)
        self.gim += g

    def grad_arrays(self):
        gre = self.gre if self.gre is not None else np.zeros_like(self.re)
        gim = None
        if self.im is not None:
            gim = self.gim if self.gim is not None else np.zeros_like(self.im)
        return gre, gim


def _chk(cond, op, msg):
    if not cond:
        raise ValueError(f"{op}: {msg}")


class Tape:
    """Execution record for one forward pass; replayed once in reverse."""

    def __init__(self, record=True):
        self.record = record
        self._records = []
        self._param_nodes = {}
        self._consumed = False

    def _push(self, node, op_name, fn):
        if self.record:
            self._records.append((node, op_name, fn))
        return node

    # ---- leaves ----------------------------------------------------------

    def constant(self, re, im=None):
        re = np.atleast_2d(np.asarray(re))
        if im is not None:
            im = np.atleast_2d(np.asarray(im))
            _chk(re.shape == im.shape, "constant", "re/im shape mismatch")
        return Node(re, im)

    def leaf(self, param):
        """Node view of a Parameter; one shared node per (tape, parameter)
        so reuse accumulates additively."""
        entry = self._param_nodes.get(id(param))
        if entry is None:
            entry = (param, Node(param.value.re, param.value.im))
            self._param_nodes[id(param)] = entry
        return entry[1]

    # ---- complex linear algebra -----------------------------------------

    def cmatmul(self, a, b):
        _chk(not a.is_real and not b.is_real, "cmatmul", "operands must be complex")
        _chk(a.shape[1] == b.shape[0], "cmatmul",
             f"inner dimensions disagree: {a.shape} @ {b.shape}")
        cr, ci = backend.cgemm(a.re, a.im, b.re, b.im)
        out = Node(cr, ci)

        def backward():
            gre, gim = out.grad_arrays()
            a._acc_re(backend.rgemm(gre, b.re.T) + backend.rgemm(gim, b.im.T))
            a._acc_im(backend.rgemm(gim, b.re.T) - backend.rgemm(gre, b.im.T))
            b._acc_re(backend.rgemm(a.re.T, gre) + backend.rgemm(a.im.T, gim))
            b._acc_im(backend.rgemm(a.re.T, gim) - backend.rgemm(a.im.T, gre))

        return self._push(out, "cmatmul", backward)

    def rcmatmul(self, a, v):
        """Real matrix times complex matrix (attention weights times values)."""
        _chk(a.is_real and not v.is_real, "rcmatmul", "expected real @ complex")
        _chk(a.shape[1] == v.shape[0], "rcmatmul",
             f"inner dimensions disagree: {a.shape} @ {v.shape}")
        out = Node(backend.rgemm(a.re, v.re), backend.rgemm(a.re, v.im))

        def backward():
            gre, gim = out.grad_arrays()
            a._acc_re(backend.rgemm(gre, v.re.T) + backend.rgemm(gim, v.im.T))
            v._acc_re(backend.rgemm(a.re.T, gre))
            v._acc_im(backend.rgemm(a.re.T, gim))

        return self._push(out, "rcmatmul", backward)

    def rmatmul_part(self, x, w, part):
        """Real matrix product against one component of a complex node.

        Used by the paired real projection networks, whose two weight sets
        live in the re/im halves of shared parameters; gradients flow into
        the selected half only.
        """
        _chk(x.is_real, "rmatmul_part", "x must be real")
        _chk(part in ("re", "im"), "rmatmul_part", f"bad part {part!r}")
        wmat = w.re if part == "re" else w.im
        _chk(x.shape[1] == wmat.shape[0], "rmatmul_part",
             f"inner dimensions disagree: {x.shape} @ {wmat.shape}")
        out = Node(backend.rgemm(x.re, wmat))

        def backward():
            g = out.grad_arrays()[0]
            x._acc_re(backend.rgemm(g, wmat.T))
            dw = backend.rgemm(x.re.T, g)
            if part == "re":
                w._acc_re(dw)
            else:
                w._acc_im(dw)

        return self._push(out, "rmatmul_part", backward)

    def transpose(self, a):
        re = np.ascontiguousarray(a.re.T)
        im = None if a.is_real else np.ascontiguousarray(a.im.T)
        out = Node(re, im)

        def backward():
            if out.gre is not None:
                a._acc_re(out.gre.T)
            if out.gim is not None:
                a._acc_im(out.gim.T)

        return self._push(out, "transpose", backward)

    # ---- elementwise -----------------------------------------------------

    def cmul_elementwise(self, a, b):
        """Entrywise complex product, the four-term re/im expansion."""
        _chk(not a.is_real and not b.is_real, "cmul_elementwise", "operands must be complex")
        _chk(a.shape == b.shape, "cmul_elementwise",
             f"shape mismatch: {a.shape} vs {b.shape}")
        cr, ci = backend.cmul(a.re, a.im, b.re, b.im)
        out = Node(cr, ci)

        def backward():
            gre, gim = out.grad_arrays()
            a._acc_re(gre * b.re + gim * b.im)
            a._acc_im(gim * b.re - gre * b.im)
            b._acc_re(gre * a.re + gim * a.im)
            b._acc_im(gim * a.re - gre * a.im)

        return self._push(out, "cmul_elementwise", backward)

    def cmagnitude(self, a):
        """Entrywise |z|; zero entries get zero gradient."""
        _chk(not a.is_real, "cmagnitude", "operand must be complex")
        mag = np.hypot(a.re, a.im)
        out = Node(mag)

        def backward():
            g = out.grad_arrays()[0]
            safe = np.where(mag > 0, mag, 1)
            scale = g / safe
            a._acc_re(scale * a.re)
            a._acc_im(scale * a.im)

        return self._push(out, "cmagnitude", backward)

    def add_scaled(self, a, b, ca=1.0, cb=1.0):
        """ca*a + cb*b with real scalar coefficients."""
        _chk(a.is_real == b.is_real, "add_scaled", "mixed real/complex operands")
        _chk(a.shape == b.shape, "add_scaled", f"shape mismatch: {a.shape} vs {b.shape}")
        dtype = a.re.dtype
        ca = dtype.type(ca)
        cb = dtype.type(cb)
        if a.is_real:
            out = Node(ca * a.re + cb * b.re)
        else:
            out = Node(ca * a.re + cb * b.re, ca * a.im + cb * b.im)

        def backward():
            if out.gre is not None:
                a._acc_re(ca * out.gre)
                b._acc_re(cb * out.gre)
            if out.gim is not None:
                a._acc_im(ca * out.gim)
                b._acc_im(cb * out.gim)

        return self._push(out, "add_scaled", backward)

    def add_bias_row(self, a, b):
        """Row-broadcast add of a [1 x n] complex node onto every row."""
        _chk(not a.is_real and not b.is_real, "add_bias_row", "operands must be complex")
        _chk(b.shape == (1, a.shape[1]), "add_bias_row",
             f"bias shape {b.shape} incompatible with {a.shape}")
        out = Node(a.re + b.re, a.im + b.im)

        def backward():
            if out.gre is not None:
                a._acc_re(out.gre)
                b._acc_re(out.gre.sum(axis=0, keepdims=True))
            if out.gim is not None:
                a._acc_im(out.gim)
                b._acc_im(out.gim.sum(axis=0, keepdims=True))

        return self._push(out, "add_bias_row", backward)

    def radd_bias_part(self, x, b, part):
        """Row-broadcast add of one component of a complex bias onto a real
        matrix; the paired-projection counterpart of rmatmul_part."""
        _chk(x.is_real, "radd_bias_part", "x must be real")
        _chk(part in ("re", "im"), "radd_bias_part", f"bad part {part!r}")
        bias = b.re if part == "re" else b.im
        _chk(bias.shape == (1, x.shape[1]), "radd_bias_part",
             f"bias shape {bias.shape} incompatible with {x.shape}")
        out = Node(x.re + bias)

        def backward():
            g = out.grad_arrays()[0]
            x._acc_re(g)
            db = g.sum(axis=0, keepdims=True)
            if part == "re":
                b._acc_re(db)
            else:
                b._acc_im(db)

        return self._push(out, "radd_bias_part", backward)

    def add_real_table(self, a, table):
        """Add a fixed real table to the real component only (positional
        signatures for frequency rows)."""
        _chk(not a.is_real, "add_real_table", "operand must be complex")
        _chk(table.shape == a.shape, "add_real_table",
             f"table shape {table.shape} != {a.shape}")
        out = Node(a.re + table, a.im)

        def backward():
            if out.gre is not None:
                a._acc_re(out.gre)
            if out.gim is not None:
                a._acc_im(out.gim)

        return self._push(out, "add_real_table", backward)

    def make_complex(self, re_node, im_node):
        """Pack two real nodes into one complex node."""
        _chk(re_node.is_real and im_node.is_real, "make_complex", "operands must be real")
        _chk(re_node.shape == im_node.shape, "make_complex",
             f"shape mismatch: {re_node.shape} vs {im_node.shape}")
        out = Node(re_node.re, im_node.re)

        def backward():
            if out.gre is not None:
                re_node._acc_re(out.gre)
            if out.gim is not None:
                im_node._acc_re(out.gim)

        return self._push(out, "make_complex", backward)

    def mean_rows(self, a):
        """Column means as a [1 x n] node."""
        rows = a.shape[0]
        re = a.re.mean(axis=0, keepdims=True)
        im = None if a.is_real else a.im.mean(axis=0, keepdims=True)
        out = Node(re, im)

        def backward():
            if out.gre is not None:
                a._acc_re(np.broadcast_to(out.gre / rows, a.re.shape))
            if out.gim is not None:
                a._acc_im(np.broadcast_to(out.gim / rows, a.im.shape))

        return self._push(out, "mean_rows", backward)

    # ---- nonlinearities ---------------------------------------------------

    def capply_activation(self, a, kind="leaky_relu", slope=0.01):
        """Split activation: the same real nonlinearity on re and im
        independently. 'linear' is the identity."""
        if kind == "linear":
            return a
        _chk(kind == "leaky_relu", "capply_activation", f"unknown activation {kind!r}")
        _chk(not a.is_real, "capply_activation", "operand must be complex")
        slope = a.re.dtype.type(slope)
        mre = np.where(a.re > 0, a.re.dtype.type(1), slope)
        mim = np.where(a.im > 0, a.im.dtype.type(1), slope)
        out = Node(a.re * mre, a.im * mim)

        def backward():
            if out.gre is not None:
                a._acc_re(out.gre * mre)
            if out.gim is not None:
                a._acc_im(out.gim * mim)

        return self._push(out, "capply_activation", backward)

    def rleaky_relu(self, x, slope=0.01):
        _chk(x.is_real, "rleaky_relu", "operand must be real")
        slope = x.re.dtype.type(slope)
        m = np.where(x.re > 0, x.re.dtype.type(1), slope)
        out = Node(x.re * m)

        def backward():
            if out.gre is not None:
                x._acc_re(out.gre * m)

        return self._push(out, "rleaky_relu", backward)

    def softmax_rows(self, x):
        """Row-wise softmax with max subtraction."""
        _chk(x.is_real, "softmax_rows", "operand must be real")
        shifted = x.re - x.re.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        s = e / e.sum(axis=1, keepdims=True)
        out = Node(s)

        def backward():
            g = out.grad_arrays()[0]
            inner = (g * s).sum(axis=1, keepdims=True)
            x._acc_re(s * (g - inner))

        return self._push(out, "softmax_rows", backward)

    def _dropout_mask(self, shape, rate, rng, dtype):
        keep = rng.random(shape) >= rate
        return keep.astype(dtype) / dtype.type(1 - rate)

    def cdropout(self, a, rate, training, rng=None):
        """One Bernoulli mask per complex entry, applied to both parts so
        surviving entries keep their phase; identity when not training."""
        if not 0 <= rate < 1:
            raise ValueError(f"cdropout: rate must be in [0, 1), got {rate}")
        if not training or rate == 0:
            return a
        _chk(not a.is_real, "cdropout", "operand must be complex")
        m = self._dropout_mask(a.shape, rate, rng, a.re.dtype)
        out = Node(a.re * m, a.im * m)

        def backward():
            if out.gre is not None:
                a._acc_re(out.gre * m)
            if out.gim is not None:
                a._acc_im(out.gim * m)

        return self._push(out, "cdropout", backward)

    def rdropout(self, x, rate, training, rng=None):
        if not 0 <= rate < 1:
            raise ValueError(f"rdropout: rate must be in [0, 1), got {rate}")
        if not training or rate == 0:
            return x
        _chk(x.is_real, "rdropout", "operand must be real")
        m = self._dropout_mask(x.shape, rate, rng, x.re.dtype)
        out = Node(x.re * m)

        def backward():
            if out.gre is not None:
                x._acc_re(out.gre * m)

        return self._push(out, "rdropout", backward)

    def scale_real(self, x, c):
        _chk(x.is_real, "scale_real", "operand must be real")
        c = x.re.dtype.type(c)
        out = Node(x.re * c)

        def backward():
            if out.gre is not None:
                x._acc_re(out.gre * c)

        return self._push(out, "scale_real", backward)

    def radd(self, a, b):
        _chk(a.is_real and b.is_real, "radd", "operands must be real")
        _chk(a.shape == b.shape, "radd", f"shape mismatch: {a.shape} vs {b.shape}")
        out = Node(a.re + b.re)

        def backward():
            if out.gre is not None:
                a._acc_re(out.gre)
                b._acc_re(out.gre)

        return self._push(out, "radd", backward)

    # ---- spectrum boundary -------------------------------------------------

    def hermitian_project(self, a, origin_length):
        """Zero the imaginary parts that a real series of the given length
        cannot carry (bin 0, plus the Nyquist bin when even)."""
        _chk(not a.is_real, "hermitian_project", "operand must be complex")
        _chk(a.shape == (origin_length // 2 + 1, 1), "hermitian_project",
             f"expected {(origin_length // 2 + 1, 1)} column, got {a.shape}")
        mask = np.ones_like(a.im)
        mask[0, 0] = 0
        if origin_length % 2 == 0 and origin_length > 1:
            mask[-1, 0] = 0
        out = Node(a.re.copy(), a.im * mask)

        def backward():
            if out.gre is not None:
                a._acc_re(out.gre)
            if out.gim is not None:
                a._acc_im(out.gim * mask)

        return self._push(out, "hermitian_project", backward)

    def irfft_col(self, a, origin_length):
        """Inverse real transform of a half-spectrum column; backward is the
        exact linear adjoint (a scaled forward transform)."""
        _chk(not a.is_real, "irfft_col", "operand must be complex")
        m = origin_length // 2 + 1
        _chk(a.shape == (m, 1), "irfft_col",
             f"expected {(m, 1)} column for length {origin_length}, got {a.shape}")
        dtype = a.re.dtype
        bins = a.re[:, 0].astype(np.float64) + 1j * a.im[:, 0].astype(np.float64)
        y = spectral.irfft(spectral.Spectrum(bins, origin_length))
        out = Node(y.astype(dtype).reshape(-1, 1))

        weights = np.full(m, 2.0)
        weights[0] = 1.0
        if origin_length % 2 == 0 and origin_length > 1:
            weights[-1] = 1.0

        def backward():
            g = out.grad_arrays()[0][:, 0].astype(np.float64)
            adj = spectral.rfft(g).bins * weights / origin_length
            a._acc_re(adj.real.astype(dtype).reshape(-1, 1))
            a._acc_im(adj.imag.astype(dtype).reshape(-1, 1))

        return self._push(out, "irfft_col", backward)

    # ---- loss ---------------------------------------------------------------

    def mse(self, pred, target):
        """Mean squared error of a real node against a constant target."""
        _chk(pred.is_real, "mse", "prediction must be real")
        target = np.asarray(target, dtype=pred.re.dtype).reshape(pred.shape)
        diff = pred.re - target
        n = diff.size
        out = Node(np.array([[diff.astype(np.float64).ravel() @
                              diff.astype(np.float64).ravel() / n]],
                            dtype=pred.re.dtype))

        def backward():
            g = out.grad_arrays()[0][0, 0]
            pred._acc_re((2.0 * g / n) * diff)

        return self._push(out, "mse", backward)

    # ---- reverse sweep --------------------------------------------------------

    def backward(self, loss):
        """Accumulate d(loss)/d(parameter) into every trainable parameter's
        grad, visiting the record strictly in reverse exactly once."""
        if not self.record:
            raise ValueError("backward: tape was created with record=False")
        if self._consumed:
            raise ValueError("backward: tape already consumed")
        if not (loss.is_real and loss.shape == (1, 1)):
            raise ValueError(f"backward: loss must be a real scalar, got shape {loss.shape}")
        self._consumed = True
        loss.gre = np.ones((1, 1), dtype=loss.re.dtype)
        for node, op_name, fn in reversed(self._records):
            if node.gre is None and node.gim is None:
                continue
            factor = _corrupted_ops.get(op_name)
            if factor is not None:
                if node.gre is not None:
                    node.gre *= factor
                if node.gim is not None:
                    node.gim *= factor
            fn()
        for param, node in self._param_nodes.values():
            if not param.trainable:
                continue
            if node.gre is not None:
                param.grad.re += node.gre
            if node.gim is not None:
                param.grad.im += node.gim


# ---- checkpoint file -----------------------------------------------------

CHECKPOINT_MAGIC = b"SPTF"
CHECKPOINT_VERSION = 1


def save_checkpoint(params, path):
    """Write parameters: magic, version u32, count u32, then per parameter
    name (u32 length + UTF-8), rows u32, cols u32, re then im as
    little-endian float32. Round-trips bit-exactly for float32 values."""
    import struct

    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            f.write(struct.pack("<I", len(name)))
            f.write(name)
            f.write(struct.pack("<II", p.value.rows, p.value.cols))
            f.write(np.ascontiguousarray(p.value.re, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(p.value.im, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Read a checkpoint back as an ordered {name: ComplexMatrix} dict of
    float32 matrices."""
    import struct

    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"checkpoint: bad magic {data[:4]!r} at offset 0")

    def take(fmt, offset):
        size = struct.calcsize(fmt)
        if offset + size > len(data):
            raise ValueError(f"checkpoint: truncated at offset {offset}")
        return struct.unpack_from(fmt, data, offset), offset + size

    (version, count), off = take("<II", 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"checkpoint: unsupported version {version}")
    out = {}
    for _ in range(count):
        (name_len,), off = take("<I", off)
        if off + name_len > len(data):
            raise ValueError(f"checkpoint: truncated name at offset {off}")
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (rows, cols), off = take("<II", off)
        nbytes = rows * cols * 4
        if off + 2 * nbytes > len(data):
            raise ValueError(f"checkpoint: truncated payload at offset {off}")
        re = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=off).reshape(rows, cols)
        off += nbytes
        im = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=off).reshape(rows, cols)
        off += nbytes
        out[name] = ComplexMatrix(re.copy(), im.copy())
    if off != len(data):
        raise ValueError(f"checkpoint: {len(data) - off} trailing bytes at offset {off}")
    return out
