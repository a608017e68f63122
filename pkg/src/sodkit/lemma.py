"""A distance-contraction lemma for a combined two-segment step.

Setting: triangle A, B, C with |BC| < |AB|.  Moving A toward B by a
fraction lam1 gives A1; moving A toward C by lam2 gives A3; the combined
point is A2 = A1 + (A3 - A).  Claim: A2 is strictly closer to B than A1
is, provided lam2 < 1 - lam1.  verify_lemma samples random valid
configurations and reports the worst (smallest) observed margin.
"""

from dataclasses import dataclass

import numpy as np

MIN_TRIANGLE_AREA = 1e-9


@dataclass
class LemmaConfig:
    a: tuple
    b: tuple
    c: tuple
    lam1: float
    lam2: float

    def validate(self):
        for name in ("a", "b", "c"):
            pt = getattr(self, name)
            if len(pt) != 2:
                raise ValueError(f"{name} must be a 2-d point; got {pt!r}")
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        c = np.asarray(self.c, dtype=np.float64)
        if not (0.0 < self.lam1 < 1.0):
            raise ValueError(f"lam1 must lie in (0, 1); got {self.lam1}")
        if not (0.0 < self.lam2 < 1.0):
            raise ValueError(f"lam2 must lie in (0, 1); got {self.lam2}")
        if self.lam2 >= 1.0 - self.lam1:
            raise ValueError(
                f"need lam2 < 1 - lam1; got lam1={self.lam1}, lam2={self.lam2}")
        ab, ac = b - a, c - a
        area = 0.5 * abs(float(ab[0] * ac[1] - ab[1] * ac[0]))
        if area <= MIN_TRIANGLE_AREA:
            raise ValueError(f"points are (near-)collinear; area {area:g}")
        if np.linalg.norm(c - b) >= np.linalg.norm(b - a):
            raise ValueError("need |BC| < |AB|")
        return self


@dataclass
class StepResult:
    a1: tuple
    a2: tuple
    a3: tuple
    dist_a1b: float
    dist_a2b: float

    @property
    def margin(self):
        return self.dist_a1b - self.dist_a2b


def combined_step(cfg):
    """Apply both moves and measure the two distances to B."""
    cfg.validate()
    a = np.asarray(cfg.a, dtype=np.float64)
    b = np.asarray(cfg.b, dtype=np.float64)
    c = np.asarray(cfg.c, dtype=np.float64)
    a1 = a + cfg.lam1 * (b - a)
    a3 = a + cfg.lam2 * (c - a)
    a2 = a1 + (a3 - a)
    return StepResult(tuple(map(float, a1)), tuple(map(float, a2)),
                      tuple(map(float, a3)),
                      float(np.linalg.norm(b - a1)),
                      float(np.linalg.norm(b - a2)))


@dataclass
class LemmaReport:
    checked: int
    violations: int
    min_margin: float


def _sample_valid(rng, want):
    """Vectorized rejection sampling of valid configurations.

    Returns arrays a, b, c of shape (want, 2) and lam1, lam2 of (want,)."""
    outs = []
    got = 0
    while got < want:
        batch = max(64, 4 * (want - got))
        pts = rng.uniform(-1.0, 1.0, (batch, 6))
        lam = rng.uniform(0.0, 1.0, (batch, 2))
        a, b, c = pts[:, 0:2], pts[:, 2:4], pts[:, 4:6]
        ab, ac = b - a, c - a
        area = 0.5 * np.abs(ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
        ok = (
            (np.linalg.norm(c - b, axis=1) < np.linalg.norm(b - a, axis=1))
            & (area > MIN_TRIANGLE_AREA)
            & (lam[:, 0] > 0.0) & (lam[:, 0] < 1.0)
            & (lam[:, 1] > 0.0) & (lam[:, 1] < 1.0 - lam[:, 0])
        )
        outs.append((a[ok], b[ok], c[ok], lam[ok, 0], lam[ok, 1]))
        got += int(ok.sum())
    a = np.concatenate([o[0] for o in outs])[:want]
    b = np.concatenate([o[1] for o in outs])[:want]
    c = np.concatenate([o[2] for o in outs])[:want]
    l1 = np.concatenate([o[3] for o in outs])[:want]
    l2 = np.concatenate([o[4] for o in outs])[:want]
    return a, b, c, l1, l2


def verify_lemma(n=10000, seed=0):
    """Check the claim on n random valid configurations."""
    if n < 1:
        raise ValueError(f"n must be >= 1; got {n}")
    rng = np.random.default_rng(seed)
    a, b, c, l1, l2 = _sample_valid(rng, n)
    a1 = a + l1[:, None] * (b - a)
    a3 = a + l2[:, None] * (c - a)
    a2 = a1 + (a3 - a)
    d1 = np.linalg.norm(b - a1, axis=1)
    d2 = np.linalg.norm(b - a2, axis=1)
    margins = d1 - d2
    return LemmaReport(n, int(np.count_nonzero(margins <= 0.0)),
                       float(margins.min()))
