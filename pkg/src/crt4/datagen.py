"""Trial layouts, treatment assignment, and correlated binary generation.

Observations are ordered with patients fastest, then providers, then
facilities, so a cluster's outcome vector lines up with the block layout
of the nested exchangeable correlation matrix.

Binary outcomes come from a sequential conditional-linear draw: with
marginal means mu and covariance Sigma = A^(1/2) R A^(1/2), observation j
is Bernoulli with conditional mean

    lambda_j = mu_j + s_j' B_j^(-1) (y_<j - mu_<j)

where B_j is the covariance of the history and s_j its covariance with
observation j.  The regression coefficients b_j = B_j^(-1) s_j come from
two triangular solves against leading minors of one Cholesky factor, and
are shared by every cluster with the same realized structure and
treatment pattern.  Marginal means and all pairwise correlations then
match the targets exactly in expectation.

Each cluster draws from its own RNG stream, split deterministically from
the call seed as SeedSequence(entropy=seed, spawn_key=(salt, cluster)),
so parallel generation and sequential generation agree bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .correlation import VALIDITY_FLOOR, BlockDims, CorrelationParams
from .errors import (
    AllocationError,
    GenerationRangeError,
    InvalidCorrelationError,
)

__all__ = [
    "PanelSizeModel",
    "TrialLayout",
    "Dataset",
    "make_layout",
    "generate_binary",
    "export_dataset",
    "load_dataset",
    "cluster_stream",
]

# spawn-key salts keep layout draws and outcome draws on disjoint streams
_LAYOUT_SALT = 101
_OUTCOME_SALT = 303
_RANGE_TOL = 1e-9

_HEADER_MAGIC = "# crt4-dataset v1"
_COLUMNS = "cluster,facility,provider,patient,treat,y"


def cluster_stream(seed, cluster_index: int, salt: int = _OUTCOME_SALT):
    """Independent generator for one cluster, stable across process counts."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(salt, cluster_index))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class PanelSizeModel:
    """Gamma panel-size draw with mean mean_l and coefficient of variation cv.

    cv = 0 reproduces the balanced design exactly.  Draws are rounded to
    the nearest integer and floored at `floor`; the default floor of 2
    keeps within-provider correlations estimable in every provider.
    """

    mean_l: float
    cv: float = 0.0
    floor: int = 2

    def __post_init__(self):
        if not (self.mean_l > 0.0):
            raise ValueError(f"mean_l must be positive, got {self.mean_l!r}")
        if self.cv < 0.0:
            raise ValueError(f"cv must be nonnegative, got {self.cv!r}")
        if not isinstance(self.floor, int) or self.floor < 1:
            raise ValueError(f"floor must be an integer >= 1, got {self.floor!r}")

    def draw_raw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Raw gamma draws before rounding and flooring."""
        if self.cv == 0.0:
            return np.full(n, float(self.mean_l))
        shape = 1.0 / self.cv ** 2
        scale = self.mean_l * self.cv ** 2
        return rng.gamma(shape, scale, size=n)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        sizes = np.rint(self.draw_raw(n, rng)).astype(int)
        return np.maximum(sizes, self.floor)


@dataclass(frozen=True, eq=True)
class TrialLayout:
    """Realized trial structure: unit counts and treatment assignment.

    panels[i][j][k] is the panel size of provider k in facility j of
    cluster i; treat[i] holds one 0/1 flag per observation in block order.
    """

    pi_c: float
    rand_level: int
    panels: tuple[tuple[tuple[int, ...], ...], ...]
    treat: tuple[tuple[int, ...], ...]

    @property
    def n_clusters(self) -> int:
        return len(self.panels)

    def facility_count(self, i: int) -> int:
        return len(self.panels[i])

    def provider_counts(self, i: int) -> tuple[int, ...]:
        return tuple(len(row) for row in self.panels[i])

    def cluster_size(self, i: int) -> int:
        return sum(l for row in self.panels[i] for l in row)

    def labels(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Facility and (cluster-global) provider index per observation."""
        fac = []
        prov = []
        p = 0
        for j, row in enumerate(self.panels[i]):
            for l in row:
                fac.extend([j] * l)
                prov.extend([p] * l)
                p += 1
        return np.asarray(fac), np.asarray(prov)

    @property
    def balanced(self) -> bool:
        first = self.panels[0]
        m = len(first)
        k = len(first[0])
        l = first[0][0]
        return all(
            len(block) == m and all(len(row) == k and all(x == l for x in row)
                                    for row in block)
            for block in self.panels
        )

    @property
    def dims(self) -> BlockDims | None:
        """Common block dimensions, or None when the layout is unbalanced."""
        if not self.balanced:
            return None
        first = self.panels[0]
        return BlockDims(len(first), len(first[0]), first[0][0])


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcomes for one generated trial plus the layout that produced them."""

    layout: TrialLayout
    y: tuple[np.ndarray, ...]
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_outcomes(cls, layout: TrialLayout, outcomes, metadata=None):
        y = tuple(np.asarray(v, dtype=np.int8) for v in outcomes)
        for i, yi in enumerate(y):
            if yi.size != layout.cluster_size(i):
                raise ValueError(
                    f"cluster {i} expects {layout.cluster_size(i)} outcomes, "
                    f"got {yi.size}"
                )
        return cls(layout=layout, y=y, metadata=dict(metadata or {}))


def _control_count(pi_c: float, count: int, where: str) -> int:
    target = pi_c * count
    rounded = round(target)
    if abs(target - rounded) > 1e-9 or not (0 < rounded < count):
        raise AllocationError(
            f"cannot allocate fraction {pi_c} of {count} units to control "
            f"at {where}: the split must be whole and leave both arms "
            f"non-empty"
        )
    return int(rounded)


def _assign(rng: np.random.Generator, pi_c: float, count: int,
            where: str) -> np.ndarray:
    flags = np.ones(count, dtype=int)
    flags[: _control_count(pi_c, count, where)] = 0
    return rng.permutation(flags)


def make_layout(n_clusters: int, dims: BlockDims, pi_c: float = 0.5,
                rand_level: int = 4,
                panel_model: PanelSizeModel | None = None,
                seed=None) -> TrialLayout:
    """Build a layout with randomization at the requested level.

    Assignment is stratified within the immediate parent unit (clusters
    for rand_level 4, each cluster's facilities for 3, each facility's
    providers for 2, each provider's panel for 1), so pi_c must split
    every stratum exactly.  A panel_model with cv > 0 replaces dims.l
    with per-provider gamma draws; cv = 0 or no model keeps the design
    balanced.  Deterministic given seed.
    """
    if n_clusters < 1:
        raise ValueError(f"n_clusters must be >= 1, got {n_clusters!r}")
    if not (0.0 < pi_c < 1.0):
        raise ValueError(f"pi_c must be in (0, 1), got {pi_c!r}")
    if rand_level not in (1, 2, 3, 4):
        raise ValueError(f"rand_level must be 1..4, got {rand_level!r}")

    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(_LAYOUT_SALT,))))

    m, k = dims.m, dims.k
    if panel_model is None or panel_model.cv == 0.0:
        base = dims.l if panel_model is None else int(round(panel_model.mean_l))
        sizes = np.full(n_clusters * m * k, base, dtype=int)
    else:
        sizes = panel_model.draw(n_clusters * m * k, rng)
    sizes = sizes.reshape(n_clusters, m, k)
    panels = tuple(
        tuple(tuple(int(x) for x in row) for row in block) for block in sizes
    )

    if rand_level == 4:
        cluster_flags = _assign(rng, pi_c, n_clusters, "the cluster level")
        treat = tuple(
            (int(cluster_flags[i]),) * int(sizes[i].sum())
            for i in range(n_clusters)
        )
    else:
        treat_list = []
        for i in range(n_clusters):
            flags = []
            if rand_level == 3:
                fac_flags = _assign(rng, pi_c, m, f"cluster {i} facilities")
                for j in range(m):
                    flags.extend([int(fac_flags[j])] * int(sizes[i, j].sum()))
            elif rand_level == 2:
                for j in range(m):
                    prov_flags = _assign(rng, pi_c, k,
                                         f"cluster {i} facility {j} providers")
                    for kk in range(k):
                        flags.extend([int(prov_flags[kk])] * int(sizes[i, j, kk]))
            else:
                for j in range(m):
                    for kk in range(k):
                        pat = _assign(rng, pi_c, int(sizes[i, j, kk]),
                                      f"cluster {i} provider ({j}, {kk})")
                        flags.extend(int(x) for x in pat)
            treat_list.append(tuple(flags))
        treat = tuple(treat_list)

    return TrialLayout(pi_c=pi_c, rand_level=rand_level, panels=panels,
                       treat=treat)


def _pair_class_matrix(fac: np.ndarray, prov: np.ndarray,
                       corr: CorrelationParams) -> np.ndarray:
    same_prov = prov[:, None] == prov[None, :]
    same_fac = fac[:, None] == fac[None, :]
    r = np.where(same_prov, corr.alpha0,
                 np.where(same_fac, corr.alpha1, corr.alpha2))
    np.fill_diagonal(r, 1.0)
    return r


def _clf_coefficients(mu: np.ndarray, r: np.ndarray, cluster_index: int):
    """Regression coefficients b_j plus first-column means, corner-checked.

    Raises GenerationRangeError when some 0/1 history would push a
    conditional mean outside [0, 1]; cluster_index only labels the error.
    """
    sd = np.sqrt(mu * (1.0 - mu))
    sigma = sd[:, None] * r * sd[None, :]
    eigs = np.linalg.eigvalsh(r)
    if eigs[0] <= VALIDITY_FLOOR:
        raise InvalidCorrelationError(_RaggedReport(
            (f"minimum correlation eigenvalue {eigs[0]:.3e} <= 0 for the "
             f"realized structure of cluster {cluster_index}",)))
    chol = np.linalg.cholesky(sigma)
    n = mu.size
    coefs = []
    for j in range(1, n):
        s = sigma[:j, j]
        w = solve_triangular(chol[:j, :j], s, lower=True)
        b = solve_triangular(chol[:j, :j].T, w, lower=False)
        hi = mu[j] + np.maximum(b * (1.0 - mu[:j]), -b * mu[:j]).sum()
        lo = mu[j] + np.minimum(b * (1.0 - mu[:j]), -b * mu[:j]).sum()
        if lo < -_RANGE_TOL or hi > 1.0 + _RANGE_TOL:
            value = lo if lo < -_RANGE_TOL else hi
            raise GenerationRangeError(cluster_index, j, value)
        coefs.append(b)
    return coefs


class _RaggedReport:
    """Minimal violations carrier for per-cluster validity failures."""

    def __init__(self, violations):
        self.violations = violations


def generate_binary(layout: TrialLayout, corr: CorrelationParams,
                    p0: float, p1: float, seed=None) -> Dataset:
    """Correlated Bernoulli outcomes for every cluster in the layout.

    p0 and p1 are the control and treated marginal means.  Clusters that
    share a realized structure and treatment pattern reuse one set of
    conditional coefficients; draws still come from per-cluster streams.
    """
    for name, p in (("p0", p0), ("p1", p1)):
        if not (0.0 < p < 1.0):
            raise ValueError(f"{name} must be in (0, 1), got {p!r}")

    n_clusters = layout.n_clusters
    uniforms = [
        cluster_stream(seed, i).random(layout.cluster_size(i))
        for i in range(n_clusters)
    ]

    groups: dict[tuple, list[int]] = {}
    for i in range(n_clusters):
        groups.setdefault((layout.panels[i], layout.treat[i]), []).append(i)

    outcomes: list[np.ndarray | None] = [None] * n_clusters
    for (_, treat), members in groups.items():
        rep = members[0]
        fac, prov = layout.labels(rep)
        mu = np.where(np.asarray(treat, dtype=bool), p1, p0)
        r = _pair_class_matrix(fac, prov, corr)
        coefs = _clf_coefficients(mu, r, rep)
        u = np.stack([uniforms[i] for i in members])
        batch, n = u.shape
        resid = np.empty((batch, n))
        y = np.empty((batch, n), dtype=np.int8)
        y[:, 0] = u[:, 0] < mu[0]
        resid[:, 0] = y[:, 0] - mu[0]
        for j in range(1, n):
            lam = mu[j] + resid[:, :j] @ coefs[j - 1]
            # corner check already bounds lam; clip strips fp noise
            np.clip(lam, 0.0, 1.0, out=lam)
            y[:, j] = u[:, j] < lam
            resid[:, j] = y[:, j] - mu[j]
        for row, i in enumerate(members):
            outcomes[i] = y[row]

    metadata = {
        "p0": p0,
        "p1": p1,
        "alpha": (corr.alpha0, corr.alpha1, corr.alpha2),
        "seed": seed,
    }
    return Dataset(layout=layout, y=tuple(outcomes), metadata=metadata)


def export_dataset(dataset: Dataset, dest) -> None:
    """Write a dataset as commented-header CSV.

    Two header lines carry the layout and generation parameters as JSON;
    data rows are cluster,facility,provider,patient,treat,y with patient
    numbering restarting inside each provider.
    """
    own = isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__")
    fh = open(dest, "w", encoding="utf-8") if own else dest
    try:
        layout = dataset.layout
        header = {
            "pi_c": layout.pi_c,
            "rand_level": layout.rand_level,
            "panels": [[list(row) for row in block] for block in layout.panels],
        }
        fh.write(f"{_HEADER_MAGIC}\n")
        fh.write(f"# layout {json.dumps(header, sort_keys=True)}\n")
        fh.write(f"# params {json.dumps(dataset.metadata, sort_keys=True)}\n")
        fh.write(f"{_COLUMNS}\n")
        for i in range(layout.n_clusters):
            fac, prov = layout.labels(i)
            treat = layout.treat[i]
            yi = dataset.y[i]
            patient = 0
            prev = None
            for idx in range(yi.size):
                if prov[idx] != prev:
                    patient = 0
                    prev = prov[idx]
                fh.write(f"{i},{fac[idx]},{prov[idx]},{patient},"
                         f"{treat[idx]},{int(yi[idx])}\n")
                patient += 1
    finally:
        if own:
            fh.close()


def load_dataset(src) -> Dataset:
    """Read a dataset written by export_dataset."""
    own = isinstance(src, (str, bytes)) or hasattr(src, "__fspath__")
    fh = open(src, "r", encoding="utf-8") if own else src
    try:
        lines = [ln.rstrip("\n") for ln in fh]
    finally:
        if own:
            fh.close()
    if not lines or lines[0] != _HEADER_MAGIC:
        raise ValueError("not a recognized dataset file")
    layout_info = params = None
    body_start = 0
    for idx, ln in enumerate(lines):
        if ln.startswith("# layout "):
            layout_info = json.loads(ln[len("# layout "):])
        elif ln.startswith("# params "):
            params = json.loads(ln[len("# params "):])
        elif ln == _COLUMNS:
            body_start = idx + 1
            break
    else:
        raise ValueError("missing column header row")
    if layout_info is None or params is None:
        raise ValueError("missing layout or params header")

    panels = tuple(
        tuple(tuple(int(x) for x in row) for row in block)
        for block in layout_info["panels"]
    )
    n_clusters = len(panels)
    treat_rows: list[list[int]] = [[] for _ in range(n_clusters)]
    y_rows: list[list[int]] = [[] for _ in range(n_clusters)]
    for ln in lines[body_start:]:
        if not ln:
            continue
        c, _f, _p, _pat, t, y = ln.split(",")
        treat_rows[int(c)].append(int(t))
        y_rows[int(c)].append(int(y))
    layout = TrialLayout(
        pi_c=float(layout_info["pi_c"]),
        rand_level=int(layout_info["rand_level"]),
        panels=panels,
        treat=tuple(tuple(row) for row in treat_rows),
    )
    if "alpha" in params:
        params["alpha"] = tuple(params["alpha"])
    return Dataset.from_outcomes(layout, y_rows, params)
