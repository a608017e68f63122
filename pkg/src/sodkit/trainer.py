"""Deterministic training loop: Adam, halfway LR decay, checkpointing.

Reproducibility contract: a fixed seed and single-threaded execution give
byte-identical logs and checkpoints.  Randomness never lives in mutable
generator state across epochs; every decision stream (shuffle order, flip
coins) is derived from (seed, epoch, index), so interrupting and resuming
cannot desynchronize it.

Checkpoints store arrays as little-endian float32.  To make a resumed run
bit-identical to an uninterrupted one, the live float64 state (parameters
and both moment sets) is rounded through float32 at every epoch-end save;
both runs therefore experience the same quantization at the same points.
"""

import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import dataio
from . import losses
from . import metrics
from . import model as model_mod

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CKPT_MAGIC = b"PSGCKPT1"

LOG_HEADER = "epoch, lr, main_loss, aux_loss, overall, val_maxF, val_MAE"


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 5e-5
    lr_decay_factor: float = 0.1
    seed: int = 0
    eval_every: int = 1
    psg_refresh: str = "step"    # or "epoch": freeze aux targets at epoch start
    loss: losses.LossConfig = field(default_factory=losses.LossConfig)
    model: model_mod.ModelConfig = field(default_factory=model_mod.ModelConfig)

    def validate(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1; got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1; got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0; got {self.lr}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1; got {self.eval_every}")
        if self.psg_refresh not in ("step", "epoch"):
            raise ValueError(f"psg_refresh must be 'step' or 'epoch'; got {self.psg_refresh}")
        self.loss.validate()
        self.model.validate()
        return self


@dataclass
class OptimizerState:
    m: dict
    v: dict
    step: int = 0

    @staticmethod
    def fresh(params):
        return OptimizerState({n: np.zeros_like(p.data) for n, p in params.items()},
                              {n: np.zeros_like(p.data) for n, p in params.items()}, 0)


def adam_step(params, grads, state, lr):
    """One bias-corrected update; iterates params in dict (insertion) order."""
    state.step += 1
    t = state.step
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ValueError(f"{name}: grad shape {g.shape} != param shape {p.data.shape}")
        m = state.m[name] = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        v = state.v[name] = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * (g * g)
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def lr_schedule(epoch, cfg):
    """Initial rate for the first half of training, decayed afterwards.

    The boundary is ceil(epochs/2) with 0-indexed epochs; the applied rate
    appears in every log line, so the convention is auditable."""
    if epoch < math.ceil(cfg.epochs / 2):
        return cfg.lr
    return cfg.lr * cfg.lr_decay_factor


# -- checkpoint format --------------------------------------------------------
# magic(8) | epoch i64 | seed u64 | adam step i64 | config u32+utf8
# | 3 array groups (params, first moments, second moments), each:
#   u32 count, then per array: u16 name len | name utf8 | u8 rank
#   | i64 extents | f32 payload
# little-endian throughout

def _write_group(f, arrays):
    f.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        nb = name.encode("utf-8")
        f.write(struct.pack("<H", len(nb)) + nb)
        f.write(struct.pack("<B", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
        f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_group(f):
    (count,) = struct.unpack("<I", f.read(4))
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", f.read(2))
        name = f.read(nlen).decode("utf-8")
        (rank,) = struct.unpack("<B", f.read(1))
        shape = struct.unpack(f"<{rank}q", f.read(8 * rank))
        n = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(f.read(4 * n), dtype="<f4").astype(np.float64).reshape(shape)
        out[name] = data
    return out


def save_checkpoint(path, epoch, seed, config_text, params, opt_state):
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<qQq", epoch, seed & (2**64 - 1), opt_state.step))
        cb = config_text.encode("utf-8")
        f.write(struct.pack("<I", len(cb)) + cb)
        _write_group(f, {n: p.data for n, p in params.items()})
        _write_group(f, opt_state.m)
        _write_group(f, opt_state.v)


def load_checkpoint(path):
    """Returns a dict with epoch, seed, config_text, params (name->array),
    and the optimizer state; arrays come back as float64."""
    with open(path, "rb") as f:
        if f.read(8) != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic)")
        epoch, seed, step = struct.unpack("<qQq", f.read(24))
        (clen,) = struct.unpack("<I", f.read(4))
        config_text = f.read(clen).decode("utf-8")
        params = _read_group(f)
        m = _read_group(f)
        v = _read_group(f)
    return {"epoch": epoch, "seed": seed, "config_text": config_text,
            "params": params, "opt": OptimizerState(m, v, step)}


def _quantize_state(params, opt_state):
    # mirror on-disk rounding in the live state so resumed and
    # uninterrupted runs see identical numbers
    for p in params.values():
        p.data = p.data.astype(np.float32).astype(np.float64)
    for d in (opt_state.m, opt_state.v):
        for n in d:
            d[n] = d[n].astype(np.float32).astype(np.float64)


# -- data plumbing ------------------------------------------------------------

def _to_batch(samples):
    imgs = np.stack([s.image.transpose(2, 0, 1) for s in samples])
    gts = np.stack([s.mask[None].astype(np.float64) for s in samples])
    return imgs, gts


def _epoch_order(seed, epoch, n):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1, epoch]))
    return rng.permutation(n)


def _flip_coin(seed, epoch, index):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2, epoch, index]))
    return rng.uniform() < 0.5


def _prepared(sample, size):
    if sample.image.shape[0] != size or sample.image.shape[1] != size:
        return dataio.resize_bilinear(sample, size)
    return sample


def predict(params, cfg, images):
    """Forward pass with gradient recording switched off."""
    flags = [(p, p.requires_grad) for p in params.values()]
    for p, _ in flags:
        p.requires_grad = False
    try:
        out = model_mod.model_forward(ad.Tensor(images), cfg.model, params)
    finally:
        for p, was in flags:
            p.requires_grad = was
    return out.data


def evaluate(params, cfg, samples):
    """maxF and MAE of the current model over a list of samples."""
    preds, gts = [], []
    bs = cfg.batch_size
    prepped = [_prepared(s, cfg.model.input_size) for s in samples]
    for lo in range(0, len(prepped), bs):
        chunk = prepped[lo : lo + bs]
        imgs, _ = _to_batch(chunk)
        out = predict(params, cfg, imgs)
        for i, s in enumerate(chunk):
            preds.append(out[i, 0])
            gts.append(s.mask)
    rep = metrics.evaluate_dataset(preds, gts)
    return rep.max_f, rep.mae


@dataclass
class TrainResult:
    params: dict
    opt: OptimizerState
    history: list
    log_path: str
    ckpt_path: str


def _epoch_targets(params, cfg, samples):
    """Aux targets frozen from the epoch-start model (psg_refresh="epoch")."""
    targets = []
    bs = cfg.batch_size
    for lo in range(0, len(samples), bs):
        chunk = samples[lo : lo + bs]
        imgs, gts = _to_batch(chunk)
        pred = predict(params, cfg, imgs)
        targets.append(losses.psg_target_batch(pred, gts, cfg.loss.psg_kernel))
    return np.concatenate(targets, axis=0)


def train(cfg, train_samples, val_samples, out_dir, probe_index=None,
          resume=None, config_text=None, stop_after_epoch=None):
    """Run the full loop; returns the result and writes train.log + checkpoint.

    ``resume`` names a checkpoint to continue from; the log file is then
    appended, so a stopped-and-resumed run reproduces the uninterrupted
    run's files byte for byte.  ``stop_after_epoch`` simulates an
    interruption after that epoch's checkpoint is written.
    """
    cfg.validate()
    if not train_samples:
        raise ValueError("empty training dataset")
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, "train.log")
    ckpt_path = os.path.join(out_dir, "checkpoint.ckpt")
    if config_text is None:
        from . import config as config_mod
        config_text = config_mod.render_train_config(cfg)

    if resume is not None:
        ck = load_checkpoint(resume)
        params = {n: ad.Tensor(a, requires_grad=True) for n, a in ck["params"].items()}
        expected = model_mod.param_shapes(cfg.model)
        if {n: p.data.shape for n, p in params.items()} != dict(expected):
            raise ValueError("checkpoint parameters do not match the model config")
        opt = ck["opt"]
        start_epoch = ck["epoch"] + 1
        log_f = open(log_path, "a", encoding="ascii", newline="\n")
    else:
        params = model_mod.init_params(cfg.model, cfg.seed)
        opt = OptimizerState.fresh(params)
        start_epoch = 0
        log_f = open(log_path, "w", encoding="ascii", newline="\n")
        log_f.write(LOG_HEADER + "\n")
        log_f.flush()

    train_prepped = [_prepared(s, cfg.model.input_size) for s in train_samples]
    n = len(train_prepped)
    history = []
    last_val = (float("nan"), float("nan"))
    try:
        for epoch in range(start_epoch, cfg.epochs):
            lr = lr_schedule(epoch, cfg)
            order = _epoch_order(cfg.seed, epoch, n)
            flipped = [
                dataio.hflip(train_prepped[i]) if _flip_coin(cfg.seed, epoch, int(i))
                else train_prepped[i]
                for i in order
            ]
            epoch_pgt = None
            if cfg.loss.use_psg and cfg.psg_refresh == "epoch":
                epoch_pgt = _epoch_targets(params, cfg, flipped)
            sums = np.zeros(3)
            steps = 0
            for lo in range(0, n, cfg.batch_size):
                chunk = flipped[lo : lo + cfg.batch_size]
                imgs, gts = _to_batch(chunk)
                pred = model_mod.model_forward(ad.Tensor(imgs), cfg.model, params)
                if epoch_pgt is not None:
                    fn = losses.LOSS_FNS[cfg.loss.main_kind]
                    main_t = fn(pred, ad.Tensor(gts), cfg.loss.epsilon)
                    aux_t = fn(pred, ad.Tensor(epoch_pgt[lo : lo + cfg.batch_size]),
                               cfg.loss.epsilon)
                    total = main_t + cfg.loss.alpha * aux_t
                    bd = losses.LossBreakdown(float(main_t.data), float(aux_t.data),
                                              float(total.data), total)
                else:
                    bd = losses.overall(pred, gts, cfg.loss)
                bd.tensor.backward()
                adam_step(params, {nm: p.grad for nm, p in params.items()}, opt, lr)
                for p in params.values():
                    p.zero_grad()
                sums += (bd.main, bd.aux, bd.overall)
                steps += 1
            mean_main, mean_aux, mean_overall = sums / steps
            if val_samples and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs - 1):
                last_val = evaluate(params, cfg, val_samples)
            history.append({"epoch": epoch, "lr": lr, "main": mean_main,
                            "aux": mean_aux, "overall": mean_overall,
                            "val_maxF": last_val[0], "val_MAE": last_val[1]})
            log_f.write(f"{epoch}, {lr:.8f}, {mean_main:.6f}, {mean_aux:.6f}, "
                        f"{mean_overall:.6f}, {last_val[0]:.6f}, {last_val[1]:.6f}\n")
            log_f.flush()
            if probe_index is not None:
                _dump_probe(out_dir, epoch, params, cfg, train_prepped[probe_index])
            _quantize_state(params, opt)
            save_checkpoint(ckpt_path, epoch, cfg.seed, config_text, params, opt)
            if stop_after_epoch is not None and epoch >= stop_after_epoch:
                break
    finally:
        log_f.close()
    return TrainResult(params, opt, history, log_path, ckpt_path)


def _dump_probe(out_dir, epoch, params, cfg, sample):
    probe_dir = os.path.join(out_dir, "probe")
    os.makedirs(probe_dir, exist_ok=True)
    imgs, gts = _to_batch([sample])
    pred = predict(params, cfg, imgs)[0, 0]
    pgt = losses.psg_target_batch(pred, gts[0, 0], cfg.loss.psg_kernel)
    dataio.save_pnm(pred, os.path.join(probe_dir, f"epoch_{epoch:04d}_pred.pgm"))
    dataio.save_pnm(pgt, os.path.join(probe_dir, f"epoch_{epoch:04d}_pgt.pgm"))
