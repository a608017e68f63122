"""Training losses: pixel losses, region overlap, and the self-guided pair.

Every loss maps (prediction, target) tensors of identical shape to a
non-negative scalar tensor, differentiable w.r.t. the prediction.  The
auxiliary loss re-targets the SAME formula as the main loss onto a
morphologically grown copy of the current prediction, masked by ground
truth; the target is detached, so it acts purely as supervision.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import morphology

EPSILON = 1e-7

MAIN_KINDS = ("bce", "dice", "hybrid", "l1", "l2", "kld")


@dataclass
class LossConfig:
    main_kind: str = "hybrid"
    use_psg: bool = True
    alpha: float = 1.0
    psg_kernel: int = 3
    epsilon: float = EPSILON

    def validate(self):
        if self.main_kind not in MAIN_KINDS:
            raise ValueError(f"main_kind must be one of {MAIN_KINDS}; got {self.main_kind!r}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0; got {self.alpha}")
        morphology.check_structuring_element(self.psg_kernel)
        if not (0.0 < self.epsilon <= 1e-3):
            raise ValueError(f"epsilon must lie in (0, 1e-3]; got {self.epsilon}")
        return self


class LossBreakdown:
    """Scalar values of one loss evaluation plus the differentiable total.

    ``main``, ``aux`` and ``overall`` are plain floats satisfying
    overall = main + alpha*aux; ``tensor`` is the graph node to call
    backward on.
    """

    __slots__ = ("main", "aux", "overall", "tensor")

    def __init__(self, main, aux, overall, tensor):
        self.main = main
        self.aux = aux
        self.overall = overall
        self.tensor = tensor


def _pair(pred, target):
    if not isinstance(pred, ad.Tensor):
        pred = ad.Tensor(pred)
    if not isinstance(target, ad.Tensor):
        target = ad.Tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"pred shape {pred.shape} != target shape {target.shape}")
    return pred, target


def bce(pred, target, epsilon=EPSILON):
    """Mean binary cross-entropy, with predictions clamped off 0 and 1."""
    pred, target = _pair(pred, target)
    x = pred.clamp(epsilon, 1.0 - epsilon)
    ll = target * x.log() + (1.0 - target) * (1.0 - x).log()
    return -ll.mean()


def dice(pred, target, epsilon=EPSILON):
    """One minus twice the overlap over the summed masses."""
    pred, target = _pair(pred, target)
    inter = (pred * target).sum()
    denom = pred.sum() + target.sum() + epsilon
    return 1.0 - (2.0 * inter) / denom


def hybrid(pred, target, epsilon=EPSILON):
    """Pixel-level cross-entropy plus region-level overlap."""
    return bce(pred, target, epsilon) + dice(pred, target, epsilon)


def l1(pred, target, epsilon=EPSILON):
    pred, target = _pair(pred, target)
    return (pred - target).abs().mean()


def l2(pred, target, epsilon=EPSILON):
    pred, target = _pair(pred, target)
    d = pred - target
    return (d * d).mean()


def kld(pred, target, epsilon=EPSILON):
    """Mean per-pixel Bernoulli KL divergence from target to prediction.

    Equals bce plus the (constant) negative entropy of the target, with
    0*log 0 taken as 0, so for binary targets it coincides with bce.
    """
    pred, target = _pair(pred, target)
    y = target.data
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(y > 0.0, y * np.log(y), 0.0) \
            + np.where(y < 1.0, (1.0 - y) * np.log1p(-y), 0.0)
    return bce(pred, target, epsilon) + float(ent.mean())


LOSS_FNS = {"bce": bce, "dice": dice, "hybrid": hybrid, "l1": l1, "l2": l2, "kld": kld}


def _as_batch(a):
    a = np.asarray(a)
    if a.ndim == 2:
        return a[None, None]
    if a.ndim == 3:
        return a[:, None]
    if a.ndim == 4:
        return a
    raise ValueError(f"expected 2-d, 3-d or 4-d maps; got shape {a.shape}")


def psg_target_batch(pred_values, gt, kernel):
    """Grown-and-masked target for a batch of prediction maps (plain arrays)."""
    p4 = _as_batch(pred_values)
    g4 = _as_batch(gt)
    if p4.shape != g4.shape:
        raise ValueError(f"pred shape {p4.shape} != gt shape {g4.shape}")
    out = np.empty_like(p4)
    for n in range(p4.shape[0]):
        for c in range(p4.shape[1]):
            out[n, c] = morphology.psg_target(p4[n, c], g4[n, c], kernel)
    return out.reshape(np.asarray(pred_values).shape)


def psg_aux(pred, gt, cfg):
    """Auxiliary loss: main-kind loss against the self-guided target.

    The target comes from the detached current prediction, so gradients
    flow only through the prediction argument of the loss.
    """
    if not isinstance(pred, ad.Tensor):
        pred = ad.Tensor(pred)
    target = psg_target_batch(pred.data, np.asarray(gt.data if isinstance(gt, ad.Tensor) else gt),
                              cfg.psg_kernel)
    return LOSS_FNS[cfg.main_kind](pred, ad.Tensor(target), cfg.epsilon)


def overall(pred, gt, cfg):
    """Main loss plus alpha times the auxiliary loss, as a LossBreakdown."""
    cfg.validate()
    if not isinstance(pred, ad.Tensor):
        pred = ad.Tensor(pred)
    gt_t = gt if isinstance(gt, ad.Tensor) else ad.Tensor(np.asarray(gt, dtype=np.float64))
    main_t = LOSS_FNS[cfg.main_kind](pred, gt_t, cfg.epsilon)
    if cfg.use_psg:
        aux_t = psg_aux(pred, gt_t, cfg)
        total = main_t + cfg.alpha * aux_t
        aux_v = float(aux_t.data)
    else:
        total = main_t
        aux_v = 0.0
    return LossBreakdown(float(main_t.data), aux_v, float(total.data), total)
