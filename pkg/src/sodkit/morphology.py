"""Binary morphology and the self-guided target generator.

Masks are H×W arrays with values exactly 0 or 1; saliency maps are H×W
float arrays in [0,1].  The structuring element is a square of odd side.

``dilate``/``erode``/``close`` follow the set definitions directly (window
any/all scans with explicit padding), on purpose NOT sharing code with the
pooling kernels: the test suite proves the maxpool substitution against
these as an independent oracle.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels


def check_structuring_element(side):
    side = int(side)
    if side < 1 or side % 2 == 0:
        raise ValueError(f"structuring element side must be odd and >= 1; got {side}")
    return side


def check_binary_mask(m):
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-d; got shape {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ValueError("mask values must be exactly 0 or 1")
    return m.astype(np.uint8)


def check_saliency_map(s):
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError(f"saliency map must be 2-d; got shape {s.shape}")
    if s.size and (s.min() < 0.0 or s.max() > 1.0):
        raise ValueError("saliency values must lie in [0, 1]")
    return s


def _padded_windows(m, side, pad_value):
    r = side // 2
    mp = np.pad(m, r, constant_values=pad_value)
    return sliding_window_view(mp, (side, side))


def dilate(m, side, pad_value=0):
    """1 where any mask pixel inside the window is 1; outside counts as pad_value."""
    m = check_binary_mask(m)
    side = check_structuring_element(side)
    win = _padded_windows(m.astype(bool), side, bool(pad_value))
    return win.any(axis=(2, 3)).astype(np.uint8)


def erode(m, side, pad_value=0):
    """1 where every window pixel is 1; outside counts as pad_value."""
    m = check_binary_mask(m)
    side = check_structuring_element(side)
    win = _padded_windows(m.astype(bool), side, bool(pad_value))
    return win.all(axis=(2, 3)).astype(np.uint8)


def close(m, side):
    """Dilation followed by erosion; fills holes smaller than the element.

    The erosion counts out-of-frame pixels as 1: zero-fill dilation and
    one-fill erosion are the adjoint pair on a bounded frame, and only that
    pairing makes the composite extensive and idempotent up to the border.
    """
    return erode(dilate(m, side), side, pad_value=1)


def psg_target(pred, gt, side):
    """Soft self-guided target: max-pool-dilated prediction masked by gt.

    The max-pool plays the dilation role and the elementwise product with
    the binary gt plays the intersection, so the target always sits between
    pred·gt and gt.  The result is a plain array: a constant supervision
    signal, never part of a gradient graph.
    """
    pred = check_saliency_map(pred)
    gt = check_binary_mask(gt)
    side = check_structuring_element(side)
    if pred.shape != gt.shape:
        raise ValueError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    pooled, _ = kernels.maxpool_forward(
        pred[None, None], side, 1, side // 2)
    return pooled[0, 0] * gt


def postprocess_close(pred, side, threshold):
    """Binarize a prediction then morphologically close it."""
    pred = check_saliency_map(pred)
    mask = (pred >= float(threshold)).astype(np.uint8)
    return close(mask, side)
