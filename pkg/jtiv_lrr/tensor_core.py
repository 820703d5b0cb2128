"""Order-3 tensor algebra in the mode-3 Fourier domain.

Tensors are plain float ``numpy`` arrays of shape (I, J, K); frontal slice k is
``x[:, :, k]``. Spectra produced here are complex arrays of the same shape.

All spectral kernels (t-product, t-SVD, TNN, t-SVT) work on the half spectrum
returned by ``numpy.fft.rfft``: for real input slice k and slice K - k are
complex conjugates, so only slices 0..K//2 are decomposed and the rest follow
by symmetry.
"""

import enum
from typing import NamedTuple

import numpy as np

from .constants import IMAG_CORRUPT_TOL, SVD_RANK_RTOL


class ModeId(enum.IntEnum):
    """Orientation of a tensor before the TNN is applied.

    MODE1 keeps (I, J, K), MODE2 is permute [1, 3, 2] and MODE3 is
    permute [3, 2, 1]. All three are involutions.
    """

    MODE1 = 1
    MODE2 = 2
    MODE3 = 3

    @property
    def axes(self):
        return _MODE_AXES[self]


_MODE_AXES = {
    ModeId.MODE1: (0, 1, 2),
    ModeId.MODE2: (0, 2, 1),
    ModeId.MODE3: (2, 1, 0),
}


class TsvdFactors(NamedTuple):
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray


def as_tensor3(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be an order-3 tensor, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: {arr.shape}")
    return arr


def mode3_dft(x, inverse: bool = False):
    """DFT of every mode-3 fiber (forward), or the normalized inverse.

    The inverse expects a conjugate-symmetric spectrum and returns a real
    tensor; an imaginary residue above 1e-6 (relative to the largest real
    entry, floored at 1) is reported as a corrupted spectrum.
    """
    arr = np.asarray(x)
    if arr.ndim != 3:
        raise ValueError(f"expected an order-3 array, got shape {arr.shape}")
    if arr.shape[2] == 0:
        raise ValueError("mode-3 length K must be at least 1")
    if not inverse:
        return np.fft.fft(arr.astype(float), axis=2)

    out = np.fft.ifft(arr, axis=2)
    if out.size == 0:
        return out.real.copy()
    residue = float(np.max(np.abs(out.imag)))
    scale = max(1.0, float(np.max(np.abs(out.real))))
    if residue > IMAG_CORRUPT_TOL * scale:
        raise ValueError(f"spectrum is not conjugate symmetric (imaginary residue {residue:.3e})")
    return np.ascontiguousarray(out.real)


def bcirc(x) -> np.ndarray:
    x = as_tensor3(x)
    I, J, K = x.shape
    out = np.empty((I * K, J * K))
    for r in range(K):
        for c in range(K):
            out[r * I:(r + 1) * I, c * J:(c + 1) * J] = x[:, :, (r - c) % K]
    return out


def unfold(x) -> np.ndarray:
    """Stack the frontal slices vertically: (I, J, K) -> (I*K, J)."""
    x = as_tensor3(x)
    I, J, K = x.shape
    return x.transpose(2, 0, 1).reshape(K * I, J).copy()


def fold(m, K: int) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"fold expects a matrix, got shape {m.shape}")
    K = int(K)
    if K < 1 or m.shape[0] % K != 0:
        raise ValueError(f"row count {m.shape[0]} is not divisible by K={K}")
    I = m.shape[0] // K
    return m.reshape(K, I, m.shape[1]).transpose(1, 2, 0).copy()


def tprod(x, y) -> np.ndarray:
    """t-product x * y of (I, J, K) and (J, L, K) tensors."""
    x = as_tensor3(x, "x")
    y = as_tensor3(y, "y")
    if x.shape[1] != y.shape[0] or x.shape[2] != y.shape[2]:
        raise ValueError(f"t-product dimension mismatch: {x.shape} * {y.shape}")
    K = x.shape[2]
    xf = np.fft.rfft(x, axis=2).transpose(2, 0, 1)
    yf = np.fft.rfft(y, axis=2).transpose(2, 0, 1)
    zf = np.matmul(xf, yf).transpose(1, 2, 0)
    return np.fft.irfft(zf, n=K, axis=2)


def tensor_transpose(x) -> np.ndarray:
    """Transpose every frontal slice and reverse slices 2..K."""
    x = as_tensor3(x)
    order = [0] + list(range(x.shape[2] - 1, 0, -1))
    return x[:, :, order].transpose(1, 0, 2).copy()


def t_identity(n: int, K: int) -> np.ndarray:
    out = np.zeros((n, n, K))
    out[:, :, 0] = np.eye(n)
    return out


def _half_weights(K: int) -> np.ndarray:
    """Multiplicity of each rfft slice in the full spectrum."""
    w = np.full(K // 2 + 1, 2.0)
    w[0] = 1.0
    if K % 2 == 0:
        w[-1] = 1.0
    return w


def _slice_svd(a, k: int, K: int, full_matrices: bool = False, compute_uv: bool = True):
    # DC and Nyquist slices of a real tensor are real matrices.
    if k == 0 or 2 * k == K:
        a = a.real
    try:
        return np.linalg.svd(a, full_matrices=full_matrices, compute_uv=compute_uv)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"SVD did not converge on Fourier slice {k + 1}") from exc


def tsvd(x) -> TsvdFactors:
    """t-SVD x = U * S * V^T with f-diagonal S."""
    x = as_tensor3(x)
    I, J, K = x.shape
    p = min(I, J)
    diag = np.arange(p)
    xf = mode3_dft(x)
    uf = np.zeros((I, I, K), dtype=complex)
    sf = np.zeros((I, J, K), dtype=complex)
    vf = np.zeros((J, J, K), dtype=complex)

    half = K // 2 + 1
    for k in range(half):
        u, s, vh = _slice_svd(xf[:, :, k], k, K, full_matrices=True)
        uf[:, :, k] = u
        sf[diag, diag, k] = s
        vf[:, :, k] = vh.conj().T
    for k in range(half, K):
        uf[:, :, k] = uf[:, :, K - k].conj()
        sf[:, :, k] = sf[:, :, K - k]
        vf[:, :, k] = vf[:, :, K - k].conj()

    return TsvdFactors(
        U=mode3_dft(uf, inverse=True),
        S=mode3_dft(sf, inverse=True),
        V=mode3_dft(vf, inverse=True),
    )


def fourier_singular_values(x) -> np.ndarray:
    """Singular values of every Fourier slice, shape (min(I, J), K)."""
    x = as_tensor3(x)
    K = x.shape[2]
    xf = np.fft.rfft(x, axis=2)
    half = np.stack([_slice_svd(xf[:, :, k], k, K, compute_uv=False) for k in range(xf.shape[2])], axis=1)
    mirror = half[:, 1:K - xf.shape[2] + 1][:, ::-1]
    return np.concatenate([half, mirror], axis=1)


def tubal_rank(x, rtol: float = SVD_RANK_RTOL) -> int:
    sv = fourier_singular_values(x)
    top = float(sv.max()) if sv.size else 0.0
    if top <= 0.0:
        return 0
    return int(np.max(np.count_nonzero(sv > rtol * top, axis=0)))


def tnn(x) -> float:
    """Tensor nuclear norm: sum of nuclear norms of all K Fourier slices (no 1/K)."""
    x = as_tensor3(x)
    K = x.shape[2]
    xf = np.fft.rfft(x, axis=2)
    w = _half_weights(K)
    total = 0.0
    for k in range(xf.shape[2]):
        total += w[k] * float(_slice_svd(xf[:, :, k], k, K, compute_uv=False).sum())
    return total


def tsvt(x, tau: float, return_tnn: bool = False):
    """Proximal operator of tau * TNN: shrink every Fourier singular value by tau.

    With ``return_tnn`` the TNN of the result is returned too; it falls out of
    the thresholded spectrum at no extra cost.
    """
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    x = as_tensor3(x)
    K = x.shape[2]
    xf = np.fft.rfft(x, axis=2)
    zf = np.zeros_like(xf)
    w = _half_weights(K)
    norm = 0.0
    for k in range(xf.shape[2]):
        u, s, vh = _slice_svd(xf[:, :, k], k, K)
        s = np.maximum(s - tau, 0.0)
        r = int(np.count_nonzero(s))
        if r:
            zf[:, :, k] = (u[:, :r] * s[:r]) @ vh[:r]
        norm += w[k] * float(s.sum())
    z = np.fft.irfft(zf, n=K, axis=2)
    if return_tnn:
        return z, norm
    return z


def permute(x, mode, inverse: bool = False) -> np.ndarray:
    # every mode permutation is its own inverse, so `inverse` changes nothing
    x = as_tensor3(x)
    return np.ascontiguousarray(np.transpose(x, ModeId(mode).axes))


def soft_threshold(x, tau: float) -> np.ndarray:
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)
