"""NSGA-II over box-bounded real genomes (all objectives maximized)."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class GaConfig:
    population: int = 500
    offspring: int = 100
    sbx_prob: float = 0.9
    sbx_eta: float = 15.0
    sbx_var_prob: float = 0.5
    pm_eta: float = 20.0
    pm_prob: float | None = None  # per variable; None means 1 / n_var
    generations: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.population < self.offspring:
            raise ValueError("population must be at least the offspring count")
        if self.offspring < 2 or self.offspring % 2:
            raise ValueError("offspring must be an even number >= 2")

    def to_dict(self) -> dict:
        return asdict(self)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def dominance_matrix(F: np.ndarray) -> np.ndarray:
    """``D[i, j]`` is True when row i dominates row j (maximization)."""
    F = np.asarray(F, dtype=float)
    ge = (F[:, None, :] >= F[None, :, :]).all(axis=2)
    gt = (F[:, None, :] > F[None, :, :]).any(axis=2)
    return ge & gt


def nondominated_sort(F, maximize: bool = True) -> list[np.ndarray]:
    """Partition row indices of ``F`` into successive non-dominated fronts."""
    F = np.asarray(F, dtype=float)
    if not maximize:
        F = -F
    n = F.shape[0]
    if n == 0:
        return []
    D = dominance_matrix(F)
    count = D.sum(axis=0)  # how many rows dominate each row
    fronts = []
    current = np.flatnonzero(count == 0)
    assigned = np.zeros(n, dtype=bool)
    while current.size:
        fronts.append(current)
        assigned[current] = True
        count = count - D[current].sum(axis=0)
        current = np.flatnonzero((count == 0) & ~assigned)
    return fronts


def crowding_distance(F: np.ndarray) -> np.ndarray:
    """Crowding distance within one front; boundary points get ``inf``."""
    F = np.asarray(F, dtype=float)
    n, m = F.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(m):
        order = np.argsort(F[:, k], kind="stable")
        span = F[order[-1], k] - F[order[0], k]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span <= 0:
            continue
        dist[order[1:-1]] += (F[order[2:], k] - F[order[:-2], k]) / span
    return dist


def rank_and_crowd(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rank = np.empty(len(F), dtype=np.int64)
    crowd = np.empty(len(F))
    for r, front in enumerate(nondominated_sort(F), start=1):
        rank[front] = r
        crowd[front] = crowding_distance(F[front])
    return rank, crowd


def sbx_crossover(p1, p2, lo, hi, rng: np.random.Generator, eta: float = 15.0, prob: float = 0.9,
                  var_prob: float = 0.5, clip: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Simulated binary crossover of two parents.

    With probability ``prob`` the pair recombines. Each variable is then
    recombined with probability ``var_prob``, and the two child values of a
    recombined variable trade places with probability 1/2. The children's
    mean equals the parents' mean before clipping to ``[lo, hi]``.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    c1, c2 = p1.copy(), p2.copy()
    if rng.random() < prob:
        u = rng.random(p1.size)
        # coinciding parent values are left alone to avoid rounding drift
        swap = (rng.random(p1.size) < var_prob) & (np.abs(p1 - p2) > 1e-14)
        beta = np.where(u <= 0.5, (2.0 * u) ** (1.0 / (eta + 1.0)),
                        (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0)))
        b1 = 0.5 * ((1.0 + beta) * p1 + (1.0 - beta) * p2)
        b2 = 0.5 * ((1.0 - beta) * p1 + (1.0 + beta) * p2)
        trade = rng.random(p1.size) < 0.5
        b1, b2 = np.where(trade, b2, b1), np.where(trade, b1, b2)
        c1 = np.where(swap, b1, p1)
        c2 = np.where(swap, b2, p2)
    if clip:
        c1 = np.clip(c1, lo, hi)
        c2 = np.clip(c2, lo, hi)
    return c1, c2


def pm_mutation(x, lo, hi, rng: np.random.Generator, eta: float = 20.0, prob: float | None = None) -> np.ndarray:
    """Bounded polynomial mutation; each variable mutates with probability ``prob`` (default 1/n)."""
    x = np.asarray(x, dtype=float).copy()
    lo = np.broadcast_to(np.asarray(lo, dtype=float), x.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), x.shape)
    prob = 1.0 / x.size if prob is None else prob
    hit = rng.random(x.size) < prob
    u = rng.random(x.size)
    if not hit.any():
        return x
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    d1 = (x - lo) / safe
    d2 = (hi - x) / safe
    p = 1.0 / (eta + 1.0)
    low = u < 0.5
    val_lo = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)
    val_hi = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)
    dq = np.where(low, val_lo ** p - 1.0, 1.0 - val_hi ** p)
    x = np.where(hit & (span > 0), x + dq * span, x)
    return np.clip(x, lo, hi)


def binary_tournament(rank: np.ndarray, crowd: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Pick ``k`` indices; lower rank wins, then larger crowding distance, then the first drawn."""
    a = rng.integers(0, rank.size, k)
    b = rng.integers(0, rank.size, k)
    a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] >= crowd[b]))
    return np.where(a_wins, a, b)


def survival(F: np.ndarray, n: int) -> np.ndarray:
    """Indices of the ``n`` survivors: whole fronts first, the last one cut by crowding."""
    keep = []
    for front in nondominated_sort(F):
        if len(keep) + front.size <= n:
            keep.extend(front.tolist())
            if len(keep) == n:
                break
            continue
        crowd = crowding_distance(F[front])
        order = np.argsort(-crowd, kind="stable")
        keep.extend(front[order[: n - len(keep)]].tolist())
        break
    return np.asarray(keep, dtype=np.int64)


def hypervolume(F, ref) -> float:
    """Exact hypervolume dominated by ``F`` above reference point ``ref`` (2 or 3 objectives, maximized)."""
    F = np.asarray(F, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if F.size == 0:
        return 0.0
    F = F[(F > ref).all(axis=1)]
    if F.shape[0] == 0:
        return 0.0
    if F.shape[1] == 2:
        return _hv2(F, ref)
    if F.shape[1] == 3:
        order = np.argsort(-F[:, 2], kind="stable")
        F = F[order]
        vol = 0.0
        for i in range(F.shape[0]):
            lower = F[i + 1, 2] if i + 1 < F.shape[0] else ref[2]
            depth = F[i, 2] - lower
            if depth > 0:
                vol += depth * _hv2(F[: i + 1, :2], ref[:2])
        return float(vol)
    raise ValueError("hypervolume supports 2 or 3 objectives")


def _hv2(F: np.ndarray, ref: np.ndarray) -> float:
    order = np.argsort(-F[:, 0], kind="stable")
    best_y = ref[1]
    area = 0.0
    for x, y in F[order]:
        if y > best_y:
            area += (x - ref[0]) * (y - best_y)
            best_y = y
    return float(area)


def _unique_rows(cand: np.ndarray, existing: np.ndarray) -> np.ndarray:
    """Mask of candidate rows that repeat neither an existing row nor an earlier candidate."""
    keep = np.ones(len(cand), dtype=bool)
    seen = {row.tobytes() for row in existing}
    for i, row in enumerate(cand):
        key = row.tobytes()
        if key in seen:
            keep[i] = False
        seen.add(key)
    return keep


def _offspring(X, rank, crowd, lo, hi, cfg: GaConfig, rng, max_rounds: int = 100) -> np.ndarray:
    """``cfg.offspring`` children by tournament, SBX and PM, with duplicates redrawn.

    Clipping to the bounds tends to produce exact copies; keeping them would
    let clones crowd out the population.
    """
    d = X.shape[1]
    out = np.empty((0, d))
    for _ in range(max_rounds):
        parents = binary_tournament(rank, crowd, cfg.offspring, rng)
        kids = np.empty((cfg.offspring, d))
        for i in range(0, cfg.offspring, 2):
            c1, c2 = sbx_crossover(X[parents[i]], X[parents[i + 1]], lo, hi, rng,
                                   cfg.sbx_eta, cfg.sbx_prob, cfg.sbx_var_prob)
            kids[i] = pm_mutation(c1, lo, hi, rng, cfg.pm_eta, cfg.pm_prob)
            kids[i + 1] = pm_mutation(c2, lo, hi, rng, cfg.pm_eta, cfg.pm_prob)
        kids = kids[_unique_rows(kids, np.vstack([X, out]))]
        out = np.vstack([out, kids])[: cfg.offspring]
        if len(out) == cfg.offspring:
            break
    return out


@dataclass
class GaResult:
    X: np.ndarray
    F: np.ndarray
    rank: np.ndarray
    crowding: np.ndarray
    n_evaluations: int
    hv_history: list = field(default_factory=list)

    @property
    def front(self) -> np.ndarray:
        return np.flatnonzero(self.rank == 1)


def run_nsga2(objective: Callable[[np.ndarray], np.ndarray], lo, hi, cfg: GaConfig | None = None,
              hv_reference=None, on_generation: Callable | None = None) -> GaResult:
    """Evolve a population under ``objective`` (rows of genomes -> rows of objectives to maximize).

    ``hv_reference`` records the first-front hypervolume every generation.
    """
    cfg = cfg or GaConfig()
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi >= lo)):
        raise ValueError("bounds must be finite with hi >= lo")
    rng = make_rng(cfg.seed)
    d = lo.size
    X = lo + rng.random((cfg.population, d)) * (hi - lo)
    F = np.asarray(objective(X), dtype=float)
    n_eval = cfg.population
    rank, crowd = rank_and_crowd(F)
    hv = []
    for gen in range(cfg.generations):
        kids = _offspring(X, rank, crowd, lo, hi, cfg, rng)
        Fk = np.asarray(objective(kids), dtype=float)
        n_eval += len(kids)
        allX = np.vstack([X, kids])
        allF = np.vstack([F, Fk])
        keep = survival(allF, cfg.population)
        X, F = allX[keep], allF[keep]
        rank, crowd = rank_and_crowd(F)
        if hv_reference is not None:
            hv.append(hypervolume(F[rank == 1], hv_reference))
        if on_generation is not None:
            on_generation(gen, X, F, rank)
    return GaResult(X, F, rank, crowd, n_eval, hv)


def zdt1(X: np.ndarray) -> np.ndarray:
    """ZDT1 objectives (to be minimized)."""
    X = np.atleast_2d(X)
    f1 = X[:, 0]
    g = 1.0 + 9.0 * X[:, 1:].sum(axis=1) / (X.shape[1] - 1)
    return np.column_stack([f1, g * (1.0 - np.sqrt(f1 / g))])


def igd(front: np.ndarray, reference: np.ndarray) -> float:
    """Mean distance from each reference point to its nearest member of ``front``."""
    d = np.sqrt(((reference[:, None, :] - front[None, :, :]) ** 2).sum(axis=2))
    return float(d.min(axis=1).mean())
