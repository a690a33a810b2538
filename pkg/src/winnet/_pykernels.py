"""Pure-numpy im2col/col2im, used when the compiled extension is unavailable."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xp: np.ndarray, f: int) -> np.ndarray:
    """(n, c, hp, wp) -> (n, c*f*f, ho*wo)"""
    n, c, hp, wp = xp.shape
    ho, wo = hp - f + 1, wp - f + 1
    win = sliding_window_view(xp, (f, f), axis=(2, 3))  # (n, c, ho, wo, f, f)
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c * f * f, ho * wo)


def col2im(cols: np.ndarray, c: int, hp: int, wp: int, f: int) -> np.ndarray:
    n = cols.shape[0]
    ho, wo = hp - f + 1, wp - f + 1
    blocks = cols.reshape(n, c, f, f, ho, wo)
    out = np.zeros((n, c, hp, wp))
    for i in range(f):
        for j in range(f):
            out[:, :, i:i + ho, j:j + wo] += blocks[:, :, i, j]
    return out
