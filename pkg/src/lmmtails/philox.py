"""Counter-based normal draws (Philox4x32-10).

Every draw is a pure function of ``(seed, stream, path, index)``, so a path's
random numbers do not depend on how paths are split across workers or in
which order blocks are evaluated.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = ["philox4x32", "uniforms", "standard_normals"]

_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_ROUNDS = 10


def philox4x32(counter, key):
    """Philox4x32 with 10 rounds, vectorised over counters.

    Parameters
    ----------
    counter : sequence of four uint32 arrays (broadcastable)
    key : pair of python ints (32-bit)

    Returns
    -------
    tuple of four uint64 arrays holding 32-bit words
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for _ in range(_ROUNDS):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> np.uint64(32), p0 & _MASK32
        hi1, lo1 = p1 >> np.uint64(32), p1 & _MASK32
        c0, c1, c2, c3 = (
            hi1 ^ c1 ^ np.uint64(k0),
            lo1,
            hi0 ^ c3 ^ np.uint64(k1),
            lo0,
        )
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def _key(seed: int) -> tuple[int, int]:
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & 0xFFFFFFFF, seed >> 32


def uniforms(seed: int, stream: int, paths, n_draws: int) -> np.ndarray:
    """Uniforms in the open interval (0, 1) with 53-bit resolution.

    Row ``i`` of the result is the first ``n_draws`` uniforms of the stream
    owned by ``paths[i]``.
    """
    paths = np.asarray(paths, dtype=np.uint64).reshape(-1, 1)
    n_blocks = (n_draws + 1) // 2
    block = np.arange(n_blocks, dtype=np.uint64).reshape(1, -1)
    x0, x1, x2, x3 = philox4x32(
        (block, paths & _MASK32, paths >> np.uint64(32), np.uint64(stream)),
        _key(seed),
    )
    # two 32-bit words -> one 53-bit mantissa; +0.5 keeps u away from 0 and 1
    a = ((x0 >> np.uint64(5)) << np.uint64(26)) | (x1 >> np.uint64(6))
    b = ((x2 >> np.uint64(5)) << np.uint64(26)) | (x3 >> np.uint64(6))
    u = np.empty((paths.shape[0], 2 * n_blocks))
    u[:, 0::2] = (a.astype(np.float64) + 0.5) * 2.0**-53
    u[:, 1::2] = (b.astype(np.float64) + 0.5) * 2.0**-53
    return u[:, :n_draws]


def standard_normals(
    seed: int, stream: int, paths, n_draws: int, antithetic: bool = False
) -> np.ndarray:
    """Standard normal draws by inverse-CDF transform of :func:`uniforms`.

    With ``antithetic`` set, paths ``2k`` and ``2k + 1`` share the stream of
    pair ``k`` and the odd member receives the negated vector.
    """
    paths = np.asarray(paths, dtype=np.int64).ravel()
    if not antithetic:
        return ndtri(uniforms(seed, stream, paths, n_draws))
    z = ndtri(uniforms(seed, stream, paths // 2, n_draws))
    z[paths % 2 == 1] *= -1.0
    return z
