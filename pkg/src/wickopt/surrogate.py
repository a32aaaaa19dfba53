"""Latent-map Gaussian processes for mixed quantitative/categorical inputs.

Each categorical group (e.g. fidelity, orientation) gets its own
two-dimensional latent space; a level enters the kernel through its latent
point, so correlations between levels are learned as distances.

Hyperparameters are fitted by maximizing the concentrated log marginal
likelihood (constant mean and process variance profiled out) with
multi-start L-BFGS-B on an analytic gradient, falling back to a compass
search when the gradient method fails.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.optimize import minimize

log = logging.getLogger(__name__)

LN10 = math.log(10.0)
LATENT_DIM = 2
LATENT_BOUND = 10.0
JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


class CholeskyError(np.linalg.LinAlgError):
    """Covariance stayed indefinite after the largest jitter step."""


@dataclass(frozen=True)
class GpData:
    """Training table.

    Parameters
    ----------
    x : (n, d) quantitative inputs in original units.
    cats : (n, g) integer level codes, one column per categorical group.
    y : (n,) outputs.
    n_levels : number of levels in each group (codes are ``0..n_levels-1``).
    nugget_group : index of the group whose levels get separate nuggets
        (the fidelity group), or None for a single shared nugget.
    """

    x: np.ndarray
    cats: np.ndarray
    y: np.ndarray
    n_levels: tuple[int, ...] = ()
    nugget_group: int | None = None
    names: tuple[str, ...] = ()
    group_names: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        cats = np.asarray(self.cats, dtype=np.int64).reshape(len(y), -1) if np.size(self.cats) else \
            np.zeros((len(y), 0), dtype=np.int64)
        if x.shape[0] != y.size:
            raise ValueError("x and y disagree on the number of rows")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise ValueError("inputs and outputs must be finite")
        n_levels = tuple(self.n_levels) or tuple(int(c.max()) + 1 for c in cats.T)
        if len(n_levels) != cats.shape[1]:
            raise ValueError("n_levels must list every categorical group")
        for g, L in enumerate(n_levels):
            if cats.shape[0] and (cats[:, g].min() < 0 or cats[:, g].max() >= L):
                raise ValueError(f"level code out of range in group {g}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "cats", cats)
        object.__setattr__(self, "n_levels", n_levels)

    @property
    def n(self) -> int:
        return self.y.size

    def subset(self, idx) -> "GpData":
        return replace(self, x=self.x[idx], cats=self.cats[idx], y=self.y[idx])

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.x, self.cats, self.y):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class LmgpSpec:
    """Fitting options."""

    n_starts: int = 8
    seed: int = 0
    omega_bounds: tuple[float, float] = (-3.0, 3.0)
    nugget_bounds: tuple[float, float] = (-8.0, -2.0)  # log10, relative to process variance
    max_iter: int = 500
    pattern_search_evals: int = 2000


def _latent_layout(n_levels) -> list[int]:
    """Free latent parameters per group under the gauge (first level at the origin, second on the axis)."""
    return [0 if L <= 1 else 2 * L - 3 for L in n_levels]


def latent_from_free(free: np.ndarray, L: int) -> np.ndarray:
    z = np.zeros((L, LATENT_DIM))
    if L >= 2:
        z[1, 0] = free[0]
        z[2:] = np.asarray(free[1:]).reshape(L - 2, LATENT_DIM)
    return z


def _free_from_latent(z: np.ndarray) -> np.ndarray:
    if len(z) < 2:
        return np.zeros(0)
    return np.concatenate([[z[1, 0]], z[2:].ravel()])


def gauge_fix(z: np.ndarray) -> np.ndarray:
    """Rigid motion taking level 0 to the origin and level 1 onto the positive first axis."""
    z = np.asarray(z, dtype=float) - z[0]
    if len(z) >= 2:
        ang = math.atan2(z[1, 1], z[1, 0])
        c, s = math.cos(ang), math.sin(ang)
        z = z @ np.array([[c, -s], [s, c]])
    return z


def correlation(x1: np.ndarray, c1: np.ndarray, x2: np.ndarray, c2: np.ndarray,
                omega: np.ndarray, latents: list[np.ndarray]) -> np.ndarray:
    """Kernel matrix between scaled inputs ``(x1, c1)`` and ``(x2, c2)``."""
    x1 = np.atleast_2d(x1)
    x2 = np.atleast_2d(x2)
    w = 10.0 ** np.asarray(omega)
    expo = np.zeros((x1.shape[0], x2.shape[0]))
    for k in range(x1.shape[1]):
        d = x1[:, k][:, None] - x2[:, k][None, :]
        expo -= w[k] * d * d
    for g, z in enumerate(latents):
        a = z[c1[:, g]]
        b = z[c2[:, g]]
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        expo -= d2
    return np.exp(expo)


def nrmse(pred, test) -> float:
    """Root mean squared error over the sample standard deviation (n - 1) of ``test``."""
    pred = np.asarray(pred, dtype=float)
    test = np.asarray(test, dtype=float)
    n = test.size
    var = test.var(ddof=1)
    return float(math.sqrt(((pred - test) ** 2).sum() / (n * var)))


def mae(pred, test) -> float:
    return float(np.mean(np.abs(np.asarray(pred, float) - np.asarray(test, float))))


@dataclass
class Prediction:
    mean: np.ndarray
    variance: np.ndarray
    extrapolated: np.ndarray


@dataclass
class LmgpModel:
    """Fitted latent-map GP. Construct with :func:`fit` or :meth:`from_json`."""

    omega: np.ndarray
    latents: list[np.ndarray]
    log10_nuggets: np.ndarray
    data: GpData
    x_lo: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_std: float
    nll: float = math.nan
    jitter: float = 0.0
    zero_signal: bool = False
    trace: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self._condition()

    # -- internals -------------------------------------------------------
    def _scaled(self, x) -> np.ndarray:
        return (np.atleast_2d(np.asarray(x, dtype=float)) - self.x_lo) / self.x_scale

    def _nugget_vector(self) -> np.ndarray:
        nug = 10.0 ** np.asarray(self.log10_nuggets)
        if self.data.nugget_group is None:
            return np.full(self.data.n, nug[0])
        return nug[self.data.cats[:, self.data.nugget_group]]

    def _condition(self):
        xs = self._scaled(self.data.x)
        ys = (self.data.y - self.y_mean) / self.y_std
        R = correlation(xs, self.data.cats, xs, self.data.cats, self.omega, self.latents)
        K = R + np.diag(self._nugget_vector())
        cho, jitter = _cholesky(K)
        self.jitter = jitter
        self._cho = cho
        one = np.ones(self.data.n)
        ki1 = linalg.cho_solve(cho, one)
        self.beta = float(ki1 @ ys / (one @ ki1))
        self._alpha = linalg.cho_solve(cho, ys - self.beta)
        self.sigma2 = float((ys - self.beta) @ self._alpha / self.data.n)
        self._xs = xs

    # -- public API ------------------------------------------------------
    @property
    def process_variance(self) -> float:
        """Prior variance of the output in original units."""
        return self.sigma2 * self.y_std ** 2

    def predict(self, x, cats=None) -> Prediction:
        """Posterior mean and variance (original units) of the noise-free response."""
        xs = self._scaled(x)
        n = xs.shape[0]
        cats = np.zeros((n, 0), np.int64) if cats is None else np.asarray(cats, np.int64).reshape(n, -1)
        if cats.shape[1] != len(self.latents):
            raise ValueError("one level code per categorical group is required")
        if self.zero_signal:
            return Prediction(np.full(n, self.y_mean), np.zeros(n), np.zeros(n, bool))
        r = correlation(xs, cats, self._xs, self.data.cats, self.omega, self.latents)
        mean = self.beta + r @ self._alpha
        v = linalg.cho_solve(self._cho, r.T)
        var = self.sigma2 * np.maximum(0.0, 1.0 - np.einsum("ij,ji->i", r, v))
        outside = ((xs < -1e-9) | (xs > 1 + 1e-9)).any(axis=1)
        return Prediction(self.y_mean + self.y_std * mean, var * self.y_std ** 2, outside)

    def with_latents(self, latents: list[np.ndarray]) -> "LmgpModel":
        """Same model with the latent coordinates replaced (no refit)."""
        return replace(self, latents=[np.asarray(z, dtype=float) for z in latents], trace=[])

    def with_data(self, data: GpData) -> "LmgpModel":
        """Condition the same hyperparameters and scaling on different rows."""
        return replace(self, data=data, trace=[])

    def to_json(self) -> str:
        return json.dumps({
            "format": "wickopt-lmgp", "version": 1,
            "omega": list(map(float, self.omega)),
            "latents": [z.tolist() for z in self.latents],
            "log10_nuggets": list(map(float, self.log10_nuggets)),
            "x_lo": self.x_lo.tolist(), "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean, "y_std": self.y_std, "nll": self.nll,
            "zero_signal": self.zero_signal,
            "kernel": "exp(-sum 10^omega_k dx_k^2 - sum_g |z_g(a)-z_g(b)|^2)",
            "optimizer": "multi-start L-BFGS-B (analytic gradient) + compass search fallback",
            "input_scaling": "min-max to [0, 1]", "output_scaling": "standardized",
            "data": {"x": self.data.x.tolist(), "cats": self.data.cats.tolist(), "y": self.data.y.tolist(),
                     "n_levels": list(self.data.n_levels), "nugget_group": self.data.nugget_group,
                     "names": list(self.data.names), "group_names": list(self.data.group_names)},
            "dataset_digest": self.data.digest(),
        })

    @classmethod
    def from_json(cls, text: str) -> "LmgpModel":
        d = json.loads(text)
        if d.get("format") != "wickopt-lmgp":
            raise ValueError("not a wickopt LMGP model record")
        dd = d["data"]
        data = GpData(np.array(dd["x"]), np.array(dd["cats"], dtype=np.int64), np.array(dd["y"]),
                      tuple(dd["n_levels"]), dd["nugget_group"], tuple(dd["names"]), tuple(dd["group_names"]))
        if data.digest() != d["dataset_digest"]:
            raise ValueError("dataset digest mismatch")
        return cls(np.array(d["omega"]), [np.array(z, dtype=float).reshape(-1, LATENT_DIM) for z in d["latents"]],
                   np.array(d["log10_nuggets"]), data, np.array(d["x_lo"]), np.array(d["x_scale"]),
                   d["y_mean"], d["y_std"], d["nll"], zero_signal=d["zero_signal"])

    def latent_csv(self) -> str:
        lines = ["group,level,z1,z2"]
        names = self.data.group_names or tuple(str(g) for g in range(len(self.latents)))
        for name, z in zip(names, self.latents):
            for lvl, (a, b) in enumerate(z):
                lines.append(f"{name},{lvl},{a:.10g},{b:.10g}")
        return "\n".join(lines) + "\n"


def _cholesky(K: np.ndarray):
    """Cholesky factor with a deterministic diagonal-jitter ladder."""
    for jitter in JITTER_LADDER:
        try:
            A = K if jitter == 0.0 else K + jitter * np.eye(K.shape[0])
            cho = linalg.cho_factor(A, lower=True, check_finite=True)
            if jitter:
                log.info("covariance needed jitter %.1e", jitter)
            return cho, jitter
        except (np.linalg.LinAlgError, ValueError):
            continue
    raise CholeskyError("covariance not positive definite after maximum jitter")


class _Objective:
    """Concentrated negative log likelihood and its gradient in packed parameters."""

    def __init__(self, data: GpData, xs: np.ndarray, ys: np.ndarray):
        self.data = data
        self.ys = ys
        self.n, self.d = xs.shape
        self.diff2 = (xs[:, None, :] - xs[None, :, :]) ** 2  # (n, n, d)
        self.layout = _latent_layout(data.n_levels)
        self.onehot = [np.eye(L)[data.cats[:, g]] for g, L in enumerate(data.n_levels)]
        self.n_nug = data.n_levels[data.nugget_group] if data.nugget_group is not None else 1
        self.nug_masks = (np.eye(self.n_nug)[data.cats[:, data.nugget_group]] if data.nugget_group is not None
                          else np.ones((self.n, 1)))

    @property
    def size(self) -> int:
        return self.d + sum(self.layout) + self.n_nug

    def unpack(self, p):
        p = np.asarray(p, dtype=float)
        omega = p[: self.d]
        latents = []
        i = self.d
        for L, k in zip(self.data.n_levels, self.layout):
            latents.append(latent_from_free(p[i:i + k], L))
            i += k
        return omega, latents, p[i:i + self.n_nug]

    def bounds(self, spec: LmgpSpec):
        b = [spec.omega_bounds] * self.d
        b += [(-LATENT_BOUND, LATENT_BOUND)] * sum(self.layout)
        b += [spec.nugget_bounds] * self.n_nug
        return b

    def __call__(self, p, need_grad: bool = True):
        omega, latents, lognug = self.unpack(p)
        w = 10.0 ** omega
        expo = -(self.diff2 @ w)
        for g, z in enumerate(latents):
            zc = self.onehot[g] @ z
            expo -= ((zc[:, None, :] - zc[None, :, :]) ** 2).sum(axis=2)
        R = np.exp(expo)
        nug = self.nug_masks @ (10.0 ** lognug)
        K = R + np.diag(nug)
        try:
            cho = linalg.cho_factor(K, lower=True)
        except (np.linalg.LinAlgError, ValueError):
            return (math.inf, np.zeros_like(p)) if need_grad else math.inf
        one = np.ones(self.n)
        ki1 = linalg.cho_solve(cho, one)
        beta = ki1 @ self.ys / (one @ ki1)
        resid = self.ys - beta
        alpha = linalg.cho_solve(cho, resid)
        sigma2 = resid @ alpha / self.n
        if not sigma2 > 0:
            return (math.inf, np.zeros_like(p)) if need_grad else math.inf
        logdet = 2.0 * np.log(np.diag(cho[0])).sum()
        f = 0.5 * (self.n * math.log(sigma2) + logdet)
        if not need_grad:
            return f
        Kinv = linalg.cho_solve(cho, np.eye(self.n))
        G = Kinv - np.outer(alpha, alpha) / sigma2
        E = G * R
        grad = np.empty_like(p)
        # d R / d omega_k = -ln10 * w_k * diff2_k * R
        grad[: self.d] = -0.5 * LN10 * w * np.einsum("ij,ijk->k", E, self.diff2)
        i = self.d
        for g, (L, k) in enumerate(zip(self.data.n_levels, self.layout)):
            if k:
                z = latents[g]
                A = self.onehot[g].T @ E @ self.onehot[g]
                # gradient w.r.t. each latent point: -2 * sum_b A_lb (z_l - z_b)
                gz = -2.0 * (A.sum(axis=1)[:, None] * z - A @ z)
                grad[i:i + k] = _free_from_latent(gz)
            i += k
        grad[i:] = 0.5 * LN10 * (10.0 ** lognug) * (np.diag(G)[:, None] * self.nug_masks).sum(axis=0)
        return f, grad


def _compass_search(fun, x0, bounds, max_evals: int, step: float = 0.5, min_step: float = 1e-6):
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    fx = fun(x)
    evals = 1
    while step > min_step and evals < max_evals:
        improved = False
        for k in range(x.size):
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[k] = np.clip(y[k] + sgn * step, lo[k], hi[k])
                if y[k] == x[k]:
                    continue
                fy = fun(y)
                evals += 1
                if fy < fx:
                    x, fx, improved = y, fy, True
                    break
        if not improved:
            step *= 0.5
    return x, fx


def _scaling(x: np.ndarray):
    lo = x.min(axis=0)
    scale = x.max(axis=0) - lo
    scale[scale <= 0] = 1.0
    return lo, scale


def fit(data: GpData, spec: LmgpSpec | None = None) -> LmgpModel:
    """Maximum-likelihood LMGP from ``spec.n_starts`` seeded starting points."""
    spec = spec or LmgpSpec()
    for g, L in enumerate(data.n_levels):
        counts = np.bincount(data.cats[:, g], minlength=L)
        if counts.min() < 2:
            raise ValueError(f"categorical group {g} needs >= 2 rows per level, got {counts.tolist()}")
    x_lo, x_scale = _scaling(data.x)
    y_mean = float(data.y.mean())
    y_std = float(data.y.std())
    if y_std <= 0:
        n_nug = data.n_levels[data.nugget_group] if data.nugget_group is not None else 1
        return LmgpModel(np.zeros(data.x.shape[1]), [np.zeros((L, LATENT_DIM)) for L in data.n_levels],
                         np.full(n_nug, spec.nugget_bounds[0]), data, x_lo, x_scale, y_mean, 1.0,
                         zero_signal=True)
    xs = (data.x - x_lo) / x_scale
    ys = (data.y - y_mean) / y_std
    obj = _Objective(data, xs, ys)
    bounds = obj.bounds(spec)
    rng = np.random.Generator(np.random.Philox(spec.seed))
    trace = []
    best_p, best_f = None, math.inf
    for s in range(spec.n_starts):
        p0 = _start(obj, spec, rng, s)
        f0 = obj(p0, need_grad=False)
        res = minimize(obj, p0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": spec.max_iter})
        p, f = res.x, float(res.fun)
        method = "L-BFGS-B"
        if not res.success or not math.isfinite(f):
            start = p if math.isfinite(f) else p0
            p, f = _compass_search(lambda q: obj(q, need_grad=False), start, bounds, spec.pattern_search_evals)
            method = "compass"
        if f0 < f:
            p, f = p0, f0
        trace.append({"start": s, "initial_nll": float(f0), "final_nll": float(f), "method": method})
        if f < best_f:
            best_p, best_f = p, f
    omega, latents, lognug = obj.unpack(best_p)
    return LmgpModel(omega, latents, lognug, data, x_lo, x_scale, y_mean, y_std, best_f, trace=trace)


def _start(obj: _Objective, spec: LmgpSpec, rng: np.random.Generator, s: int) -> np.ndarray:
    lo_w, hi_w = spec.omega_bounds
    lo_n, hi_n = spec.nugget_bounds
    if s == 0:
        omega = np.zeros(obj.d)
        lat = np.full(sum(obj.layout), 0.5)
        nug = np.full(obj.n_nug, max(lo_n, min(hi_n, -6.0)))
    else:
        omega = rng.uniform(max(lo_w, -2.0), min(hi_w, 2.0), obj.d)
        lat = rng.uniform(-2.0, 2.0, sum(obj.layout))
        nug = rng.uniform(lo_n, hi_n, obj.n_nug)
    return np.concatenate([omega, lat, nug])


def negative_log_likelihood(model: LmgpModel) -> float:
    """Concentrated NLL of ``model``'s hyperparameters on its own data."""
    xs = model._scaled(model.data.x)
    ys = (model.data.y - model.y_mean) / model.y_std
    obj = _Objective(model.data, xs, ys)
    p = np.concatenate([model.omega] + [_free_from_latent(gauge_fix(z)) for z in model.latents]
                       + [model.log10_nuggets])
    return float(obj(p, need_grad=False))


def _fold_ids(data: GpData, folds: int, rng: np.random.Generator, attempts: int = 20) -> np.ndarray:
    n = data.n
    for _ in range(attempts):
        ids = rng.permutation(np.arange(n) % folds)
        if _folds_ok(data, ids, folds):
            return ids
    # stratify on the joint categorical level
    key = np.zeros(n, dtype=np.int64)
    for g, L in enumerate(data.n_levels):
        key = key * L + data.cats[:, g]
    ids = np.empty(n, dtype=np.int64)
    offset = 0
    for k in np.unique(key):
        rows = rng.permutation(np.flatnonzero(key == k))
        ids[rows] = (np.arange(rows.size) + offset) % folds
        offset += rows.size
    return ids


def _folds_ok(data: GpData, ids: np.ndarray, folds: int) -> bool:
    for f in range(folds):
        train = ids != f
        for g, L in enumerate(data.n_levels):
            if np.bincount(data.cats[train, g], minlength=L).min() < 2:
                return False
    return True


@dataclass
class CvReport:
    nrmse: float
    mae: float
    predictions: np.ndarray
    fold_ids: np.ndarray

    def to_dict(self) -> dict:
        return {"nrmse": self.nrmse, "mae": self.mae}


def cross_validate(data: GpData, folds: int = 5, spec: LmgpSpec | None = None, seed: int = 0,
                   predict_cats=None) -> CvReport:
    """Seeded k-fold CV; held-out predictions are pooled before scoring.

    ``predict_cats`` optionally overrides the level codes used when
    predicting held-out rows (default: their own codes).
    """
    if data.n < folds:
        raise ValueError("need at least as many rows as folds")
    spec = spec or LmgpSpec()
    rng = np.random.Generator(np.random.Philox(seed))
    ids = _fold_ids(data, folds, rng)
    pred = np.empty(data.n)
    cats = data.cats if predict_cats is None else np.asarray(predict_cats, np.int64)
    for f in range(folds):
        test = ids == f
        model = fit(data.subset(~test), spec)
        pred[test] = model.predict(data.x[test], cats[test]).mean
    return CvReport(nrmse(pred, data.y), mae(pred, data.y), pred, ids)
