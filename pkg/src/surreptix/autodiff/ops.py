"""Differentiable ops over :class:`Tensor`.

Every op takes tensors (plus plain-python/numpy configuration) and returns a
tensor; when a tape is active and an input requires a gradient, the op's
vector-Jacobian product is recorded. No implicit broadcasting: apart from
``scale`` (tensor times python float), per-axis operands go through
``bias_add`` or ``affine``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, record

__all__ = [
    "add", "sub", "mul", "scale", "matmul", "bias_add", "affine", "reshape", "transpose",
    "sum", "mean", "conv1d", "conv2d", "relu", "max_pool", "frame_split",
    "window_apply", "dft_power", "dft_basis", "log", "mel_project", "dct2",
    "dct_matrix", "l2_norm", "cross_entropy_softmax", "target_set_loss",
    "soft_cross_entropy", "sinc_bank", "OPS",
]


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(op, f"shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return record("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return record("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    x, y = a.data, b.data
    return record("mul", x * y, (a, b), lambda g: (g * y, g * x))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return record("scale", a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a[..., k] @ b[k, n]`` or batched ``a[..., m, k] @ b[..., k, n]``."""
    x, w = a.data, b.data
    if x.ndim < 1 or w.ndim < 2:
        raise ShapeError("matmul", f"need a.ndim>=1 and b.ndim>=2, got {x.shape} @ {w.shape}")
    if x.shape[-1] != w.shape[-2]:
        raise ShapeError("matmul", f"inner dimensions differ: {x.shape[-1]} vs {w.shape[-2]}")
    if w.ndim > 2 and w.shape[:-2] != x.shape[:-2]:
        raise ShapeError("matmul", f"batch dimensions differ: {x.shape[:-2]} vs {w.shape[:-2]}")
    out = x @ w

    def vjp(g):
        ga = g @ np.swapaxes(w, -1, -2)
        if w.ndim == 2:
            gb = x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(x, -1, -2) @ g
        return ga, gb

    return record("matmul", out, (a, b), vjp)


def bias_add(x: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    """Add the 1-D ``b`` along ``axis`` of ``x``."""
    axis = axis % x.ndim
    if b.ndim != 1 or b.shape[0] != x.shape[axis]:
        raise ShapeError("bias_add", f"bias {b.shape} does not match axis {axis} of {x.shape}")
    shape = [1] * x.ndim
    shape[axis] = -1
    others = tuple(i for i in range(x.ndim) if i != axis)
    out = x.data + b.data.reshape(shape)
    return record("bias_add", out, (x, b), lambda g: (g, g.sum(axis=others)))


def affine(x: Tensor, mult: np.ndarray, shift: np.ndarray) -> Tensor:
    """``x * mult + shift`` with constant vectors over the last axis."""
    mult = np.asarray(mult, dtype=np.float64)
    shift = np.asarray(shift, dtype=np.float64)
    if mult.shape != (x.shape[-1],) or shift.shape != (x.shape[-1],):
        raise ShapeError("affine", f"vectors {mult.shape}/{shift.shape} vs last axis of {x.shape}")
    return record("affine", x.data * mult + shift, (x,), lambda g: (g * mult,))


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", f"cannot reshape {x.shape} to {shape}") from None
    old = x.shape
    return record("reshape", out, (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError("transpose", f"axes {axes} do not permute {x.ndim} dimensions")
    inv = tuple(np.argsort(axes))
    return record("transpose", x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return record("sum", np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean(x: Tensor, axis: int) -> Tensor:
    axis = axis % x.ndim
    n = x.shape[axis]
    out = x.data.mean(axis=axis)

    def vjp(g):
        return (np.repeat(np.expand_dims(g / n, axis), n, axis=axis),)

    return record("mean", out, (x,), vjp)


# ---------------------------------------------------------------------------
# convolution / pooling

_FFT_CONV_MIN_TAPS = 48


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def conv1d(x: Tensor, w: Tensor, stride: int = 1, method: str = "auto") -> Tensor:
    """Valid cross-correlation: ``x[B, C, L]`` with ``w[O, C, K]`` -> ``[B, O, Lo]``.

    ``method`` selects im2col ("direct") or frequency-domain ("fft")
    evaluation; "auto" uses the FFT for long kernels with unit stride.
    """
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError("conv1d", f"expected x[B,C,L] and w[O,C,K], got {x.shape} and {w.shape}")
    B, C, L = x.shape
    O, Cw, K = w.shape
    if C != Cw:
        raise ShapeError("conv1d", f"input channels {C} != kernel channels {Cw}")
    if K > L:
        raise ShapeError("conv1d", f"kernel length {K} exceeds input length {L}")
    if stride < 1:
        raise ShapeError("conv1d", f"stride must be >= 1, got {stride}")
    Lo = (L - K) // stride + 1
    if method == "auto":
        method = "fft" if (K >= _FFT_CONV_MIN_TAPS and stride == 1) else "direct"
    if method == "fft":
        if stride != 1:
            raise ShapeError("conv1d", "fft method supports stride 1 only")
        return _conv1d_fft(x, w)

    xd, wd = x.data, w.data
    cols = sliding_window_view(xd, K, axis=2)[:, :, ::stride][:, :, :Lo]  # B,C,Lo,K
    cols = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(B * Lo, C * K)
    wm = wd.reshape(O, C * K)
    out = (cols @ wm.T).reshape(B, Lo, O).transpose(0, 2, 1)

    def vjp(g):
        g2 = g.transpose(0, 2, 1).reshape(B * Lo, O)
        gx = gw = None
        if w.requires_grad:
            gw = (g2.T @ cols).reshape(O, C, K)
        if x.requires_grad:
            gcols = (g2 @ wm).reshape(B, Lo, C, K)
            gx = np.zeros((B, C, L))
            span = stride * (Lo - 1) + 1
            for k in range(K):
                gx[:, :, k:k + span:stride] += gcols[:, :, :, k].transpose(0, 2, 1)
        return gx, gw

    return record("conv1d", np.ascontiguousarray(out), (x, w), vjp)


def _conv1d_fft(x: Tensor, w: Tensor) -> Tensor:
    B, C, L = x.shape
    O, _, K = w.shape
    Lo = L - K + 1
    n = _next_pow2(L + K - 1)
    X = np.fft.rfft(x.data, n)  # B,C,F
    W = np.fft.rfft(w.data, n)  # O,C,F
    # correlation: sum_k w[k] x[t+k] <-> X * conj(W)
    Y = np.einsum("bcf,ocf->bof", X, np.conj(W))
    out = np.fft.irfft(Y, n)[..., :Lo]

    def vjp(g):
        G = np.fft.rfft(g, n)  # B,O,F
        gx = gw = None
        if x.requires_grad:
            gx = np.fft.irfft(np.einsum("bof,ocf->bcf", G, W), n)[..., :L]
        if w.requires_grad:
            gw = np.fft.irfft(np.einsum("bcf,bof->ocf", X, np.conj(G)), n)[..., :K]
        return gx, gw

    return record("conv1d", np.ascontiguousarray(out), (x, w), vjp)


def conv2d(x: Tensor, w: Tensor, stride=(1, 1)) -> Tensor:
    """Valid cross-correlation: ``x[B, C, H, W]`` with ``w[O, C, kh, kw]``."""
    if isinstance(stride, int):
        stride = (stride, stride)
    sh, sw = stride
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d", f"expected x[B,C,H,W] and w[O,C,kh,kw], got {x.shape} and {w.shape}")
    B, C, H, Wd = x.shape
    O, Cw, kh, kw = w.shape
    if C != Cw:
        raise ShapeError("conv2d", f"input channels {C} != kernel channels {Cw}")
    if kh > H or kw > Wd:
        raise ShapeError("conv2d", f"kernel {kh}x{kw} exceeds input {H}x{Wd}")
    Ho = (H - kh) // sh + 1
    Wo = (Wd - kw) // sw + 1
    xd, wd = x.data, w.data
    view = sliding_window_view(xd, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :Ho, :Wo]
    cols = np.ascontiguousarray(view.transpose(0, 2, 3, 1, 4, 5)).reshape(B * Ho * Wo, C * kh * kw)
    wm = wd.reshape(O, C * kh * kw)
    out = (cols @ wm.T).reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)

    def vjp(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, O)
        gx = gw = None
        if w.requires_grad:
            gw = (g2.T @ cols).reshape(O, C, kh, kw)
        if x.requires_grad:
            gcols = (g2 @ wm).reshape(B, Ho, Wo, C, kh, kw)
            gx = np.zeros((B, C, H, Wd))
            hs, ws = sh * (Ho - 1) + 1, sw * (Wo - 1) + 1
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i:i + hs:sh, j:j + ws:sw] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return gx, gw

    return record("conv2d", np.ascontiguousarray(out), (x, w), vjp)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return record("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def max_pool(x: Tensor, size) -> Tensor:
    """Non-overlapping max pooling; int ``size`` pools the last axis,
    a pair pools the last two. Trailing remainders are dropped."""
    sizes = (size,) if isinstance(size, int) else tuple(size)
    nd = len(sizes)
    if x.ndim < nd:
        raise ShapeError("max_pool", f"input {x.shape} has fewer than {nd} axes")
    lead = x.shape[:-nd]
    dims = x.shape[-nd:]
    outs = tuple(d // s for d, s in zip(dims, sizes))
    if any(o == 0 for o in outs):
        raise ShapeError("max_pool", f"pool {sizes} larger than pooled dims {dims}")
    crop = x.data[(...,) + tuple(slice(0, o * s) for o, s in zip(outs, sizes))]
    # -> lead + (o1, s1, o2, s2) -> lead + (o1, o2, s1*s2)
    shaped = crop.reshape(lead + tuple(v for o, s in zip(outs, sizes) for v in (o, s)))
    nl = len(lead)
    perm = tuple(range(nl)) + tuple(nl + 2 * i for i in range(nd)) + tuple(nl + 2 * i + 1 for i in range(nd))
    blocks = shaped.transpose(perm).reshape(lead + outs + (-1,))
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def vjp(g):
        gb = np.zeros(blocks.shape)
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gb = gb.reshape(lead + outs + sizes)
        inv = np.argsort(perm)
        gcrop = gb.transpose(inv).reshape(crop.shape)
        gx = np.zeros(x.shape)
        gx[(...,) + tuple(slice(0, o * s) for o, s in zip(outs, sizes))] = gcrop
        return (gx,)

    return record("max_pool", out, (x,), vjp)


# ---------------------------------------------------------------------------
# signal-processing ops

def frame_split(x: Tensor, win: int, hop: int) -> Tensor:
    """``x[..., T]`` -> ``x[..., F, win]`` with ``F = (T - win) // hop + 1``."""
    T = x.shape[-1]
    if win < 1 or hop < 1:
        raise ShapeError("frame_split", f"win and hop must be positive, got {win}, {hop}")
    if T < win:
        raise ShapeError("frame_split", f"signal length {T} shorter than window {win}")
    F = (T - win) // hop + 1
    out = sliding_window_view(x.data, win, axis=-1)[..., ::hop, :][..., :F, :]

    def vjp(g):
        gx = np.zeros(x.shape)
        for f in range(F):
            gx[..., f * hop:f * hop + win] += g[..., f, :]
        return (gx,)

    return record("frame_split", np.ascontiguousarray(out), (x,), vjp)


def window_apply(frames: Tensor, window: np.ndarray) -> Tensor:
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (frames.shape[-1],):
        raise ShapeError("window_apply", f"window {window.shape} vs frame length {frames.shape[-1]}")
    return record("window_apply", frames.data * window, (frames,), lambda g: (g * window,))


def dft_basis(n_fft: int) -> tuple[np.ndarray, np.ndarray]:
    """Real and imaginary DFT matrices; ``frame @ real.T`` gives Re(X)."""
    if n_fft < 2:
        raise ValueError(f"n_fft must be >= 2, got {n_fft}")
    k = np.arange(n_fft)
    ang = 2.0 * np.pi * np.outer(k, k) / n_fft
    return np.cos(ang), -np.sin(ang)


_basis_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def dft_power(frames: Tensor, n_fft: int, method: str = "fft") -> Tensor:
    """Full ``n_fft``-bin power spectrum of each (zero-padded) real frame.

    The "fft" path computes the non-redundant half and mirrors it, so the
    conjugate-symmetric bins are bit-identical; "basis" multiplies by the
    explicit DFT matrices.
    """
    L = frames.shape[-1]
    if L > n_fft:
        raise ShapeError("dft_power", f"frame length {L} exceeds n_fft {n_fft}")
    xd = frames.data
    if method == "basis":
        if n_fft not in _basis_cache:
            _basis_cache[n_fft] = dft_basis(n_fft)
        cr, ci = _basis_cache[n_fft]
        cr, ci = cr[:, :L], ci[:, :L]
        re = xd @ cr.T
        im = xd @ ci.T
        out = re * re + im * im

        def vjp(g):
            return (2.0 * ((g * re) @ cr + (g * im) @ ci),)

        return record("dft_power", out, (frames,), vjp)
    if method != "fft":
        raise ValueError(f"unknown dft method {method!r}")
    X = np.fft.rfft(xd, n_fft)
    half = X.real ** 2 + X.imag ** 2
    nh = half.shape[-1]
    mirror = half[..., 1:n_fft - nh + 1][..., ::-1]
    out = np.concatenate([half, mirror], axis=-1)

    def vjp(g):
        gh = g[..., :nh].copy()
        gh[..., 1:n_fft - nh + 1] += g[..., nh:][..., ::-1]
        Y = np.zeros(g.shape, dtype=np.complex128)
        Y[..., :nh] = gh * np.conj(X)
        return (2.0 * np.fft.fft(Y, axis=-1).real[..., :L],)

    return record("dft_power", out, (frames,), vjp)


def log(x: Tensor, floor: float = 1e-10) -> Tensor:
    keep = x.data > floor
    clipped = np.where(keep, x.data, floor)
    return record("log", np.log(clipped), (x,), lambda g: (np.where(keep, g / clipped, 0.0),))


def mel_project(power: Tensor, fbank: np.ndarray) -> Tensor:
    """Project the first ``fbank.shape[0]`` bins of a power spectrum onto Mel bands."""
    fbank = np.asarray(fbank, dtype=np.float64)
    nb = fbank.shape[0]
    if power.shape[-1] < nb:
        raise ShapeError("mel_project", f"spectrum has {power.shape[-1]} bins, filterbank needs {nb}")
    full = power.shape[-1]
    out = power.data[..., :nb] @ fbank

    def vjp(g):
        gp = np.zeros(power.shape)
        gp[..., :nb] = g @ fbank.T
        return (gp,)

    return record("mel_project", out, (power,), vjp)


def dct_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Orthonormal DCT-II rows, shape ``(n_out, n_in)``."""
    n = np.arange(n_in)
    k = np.arange(n_out)[:, None]
    m = np.cos(np.pi * k * (2 * n + 1) / (2 * n_in)) * np.sqrt(2.0 / n_in)
    m[0] *= 1.0 / np.sqrt(2.0)
    return m


def dct2(x: Tensor, n_out: int | None = None) -> Tensor:
    n_in = x.shape[-1]
    n_out = n_in if n_out is None else n_out
    if n_out > n_in:
        raise ShapeError("dct2", f"n_out {n_out} exceeds input length {n_in}")
    d = dct_matrix(n_in, n_out)
    return record("dct2", x.data @ d.T, (x,), lambda g: (g @ d,))


def l2_norm(x: Tensor, batch: bool = False) -> Tensor:
    """Euclidean norm of the whole tensor, or of each row along axis 0
    when ``batch`` is set. The gradient at a zero norm is taken as zero."""
    xd = x.data
    if batch:
        flat = xd.reshape(xd.shape[0], -1)
        nrm = np.sqrt((flat * flat).sum(axis=1))

        def vjp(g):
            safe = np.where(nrm > 0, nrm, 1.0)
            coef = np.where(nrm > 0, g / safe, 0.0)
            return ((flat * coef[:, None]).reshape(xd.shape),)

        return record("l2_norm", nrm, (x,), vjp)
    nrm = float(np.sqrt((xd * xd).sum()))

    def vjp(g):
        if nrm == 0.0:
            return (np.zeros(xd.shape),)
        return (xd * (float(g) / nrm),)

    return record("l2_norm", np.array(nrm), (x,), vjp)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def cross_entropy_softmax(logits: Tensor, labels) -> Tensor:
    """Per-sample softmax cross entropy.

    ``logits[B, C]`` with integer ``labels[B]`` gives a ``[B]`` tensor;
    ``logits[C]`` with a single label gives a scalar.
    """
    z = logits.data
    single = z.ndim == 1
    if single:
        z = z[None]
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ShapeError("cross_entropy_softmax", f"logits {logits.shape} vs labels {labels.shape}")
    if labels.min() < 0 or labels.max() >= z.shape[1]:
        raise ShapeError("cross_entropy_softmax", f"label out of range for {z.shape[1]} classes")
    ls = _log_softmax(z)
    rows = np.arange(z.shape[0])
    loss = -ls[rows, labels]
    p = np.exp(ls)

    def vjp(g):
        grad = p.copy()
        grad[rows, labels] -= 1.0
        grad *= np.reshape(g, (-1, 1))
        return (grad[0] if single else grad,)

    return record("cross_entropy_softmax", np.array(loss[0]) if single else loss, (logits,), vjp)


def target_set_loss(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Per-sample ``-log sum_{c in set} softmax(z)_c`` for boolean ``mask[B, C]``."""
    z = logits.data
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != z.shape or z.ndim != 2:
        raise ShapeError("target_set_loss", f"logits {z.shape} vs mask {mask.shape}")
    if not mask.any(axis=1).all():
        raise ShapeError("target_set_loss", "every row needs at least one target class")
    ls = _log_softmax(z)
    p = np.exp(ls)
    masked = np.where(mask, ls, -np.inf)
    mmax = masked.max(axis=1, keepdims=True)
    lse = mmax[:, 0] + np.log(np.exp(masked - mmax).sum(axis=1))
    loss = -lse
    # posterior restricted to the set
    q = np.where(mask, np.exp(masked - lse[:, None]), 0.0)

    def vjp(g):
        return ((p - q) * np.reshape(g, (-1, 1)),)

    return record("target_set_loss", loss, (logits,), vjp)


def soft_cross_entropy(logits: Tensor, target_probs: np.ndarray, temperature: float = 1.0) -> Tensor:
    """Per-sample ``-T^2 * sum_c q_c log softmax(z / T)_c`` (distillation loss)."""
    q = np.asarray(target_probs, dtype=np.float64)
    z = logits.data
    if q.shape != z.shape or z.ndim != 2:
        raise ShapeError("soft_cross_entropy", f"logits {z.shape} vs targets {q.shape}")
    T = float(temperature)
    ls = _log_softmax(z / T)
    loss = -(T * T) * (q * ls).sum(axis=1)
    p = np.exp(ls)

    def vjp(g):
        return (T * (p * q.sum(axis=1, keepdims=True) - q) * np.reshape(g, (-1, 1)),)

    return record("soft_cross_entropy", loss, (logits,), vjp)


def sinc_bank(low_hz: Tensor, high_hz: Tensor, taps: int, fs: float) -> Tensor:
    """Hamming-windowed band-pass FIR filters with learnable cutoffs.

    Returns ``[F, taps]``; filter ``f`` passes ``low_hz[f] .. high_hz[f]``
    with unit passband gain.
    """
    if low_hz.shape != high_hz.shape or low_hz.ndim != 1:
        raise ShapeError("sinc_bank", f"cutoff vectors {low_hz.shape} and {high_hz.shape}")
    if taps % 2 == 0:
        raise ShapeError("sinc_bank", f"taps must be odd, got {taps}")
    n = np.arange(taps) - (taps - 1) / 2.0
    win = np.hamming(taps)
    f1 = low_hz.data[:, None] / fs
    f2 = high_hz.data[:, None] / fs
    # 2 f sinc(2 f n) is the ideal low-pass response at normalized cutoff f
    out = (2 * f2 * np.sinc(2 * f2 * n) - 2 * f1 * np.sinc(2 * f1 * n)) * win

    def vjp(g):
        d2 = 2.0 * np.cos(2 * np.pi * f2 * n) * win / fs
        d1 = -2.0 * np.cos(2 * np.pi * f1 * n) * win / fs
        return (g * d1).sum(axis=1), (g * d2).sum(axis=1)

    return record("sinc_bank", out, (low_hz, high_hz), vjp)


OPS = {
    "add": add, "sub": sub, "mul": mul, "scale": scale, "matmul": matmul,
    "bias_add": bias_add, "affine": affine, "reshape": reshape, "transpose": transpose,
    "sum": sum, "mean": mean, "conv1d": conv1d, "conv2d": conv2d, "relu": relu,
    "max_pool": max_pool, "frame_split": frame_split, "window_apply": window_apply,
    "dft_power": dft_power, "log": log, "mel_project": mel_project, "dct2": dct2,
    "l2_norm": l2_norm, "cross_entropy_softmax": cross_entropy_softmax,
    "target_set_loss": target_set_loss, "soft_cross_entropy": soft_cross_entropy,
    "sinc_bank": sinc_bank,
}
