"""GEE fitting with small-sample variance corrections for two-arm trials.

The marginal model has two coefficients, intercept and treatment effect,
with treatment constant within each cluster.  Fitting alternates three
updates until the joint parameter change falls below tolerance:

  1. Fisher scoring for beta given the working correlation parameters,
     run to convergence within each outer iteration;
  2. a moment update of the dispersion phi from Pearson residuals
     (held at 1 for binomial and poisson families);
  3. a bias-corrected moment update of the working correlation triple:
     each cluster's residual vector is premultiplied by the inverse
     leverage (I - H_i)^(-1), standardized, and cross-products are pooled
     over the three within-cluster pair classes (same provider / same
     facility, different provider / different facility).

Working "independence" skips step 3.  All covariance matrices are stored
on the sqrt(N) scale, Var(sqrt(N) beta-hat), so entries stay O(1) as the
number of clusters grows:

  MB    model-based, inverse of the bread matrix Sigma1
  BC0   uncorrected sandwich
  BC1   sandwich with per-cluster factor (I - Q_i)^(-1/2)
  BC2   per-cluster factor (I - Q_i)^(-1)
  BC3   per-cluster diagonal factor {1 - min(bound, [Q_i]_jj)}^(-1/2)
  BC4   c * BC0 plus an additive stabilizer delta_N * phi_M * MB
  AVG   standard errors averaged between BC1 and BC2 per component

with Q_i = D_i' V_i^(-1) D_i (N Sigma1)^(-1).  The leverage inverse uses
the rank-2 identity (I - H_i)^(-1) r_i = r_i + D_i (W - O_i)^(-1) g_i, so
no observation-level matrix is ever inverted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .correlation import VALIDITY_FLOOR, CorrelationParams, eigen_spectrum
from .errors import DomainError
from .families import get_link, get_variance_family

__all__ = [
    "WorkingCorrelation",
    "GeeFit",
    "WaldTest",
    "fit",
    "variance_estimators",
    "wald_t_test",
    "ESTIMATOR_NAMES",
]

ESTIMATOR_NAMES = ("MB", "BC0", "BC1", "BC2", "AVG", "BC3", "BC4")

_P = 2  # intercept + treatment
_INNER_TOL = 1e-11
_INNER_MAX = 60
_HALVINGS = 10


@dataclass(frozen=True)
class WorkingCorrelation:
    """Working correlation choice: "independence" or "ene"."""

    kind: str = "ene"

    def __post_init__(self):
        if self.kind not in ("independence", "ene"):
            raise ValueError(
                f'working correlation must be "independence" or "ene", '
                f"got {self.kind!r}"
            )


@dataclass
class GeeFit:
    """Fitted coefficients, correlation estimates, and all covariances.

    Covariances are Var(sqrt(N) beta-hat); se() rescales to the plain
    beta-hat scale.  ee_residual records the final estimating-equation
    gaps: "beta" is the score inf-norm divided by N, "alpha" the largest
    self-consistency gap of the correlation moments (None when not
    estimated).
    """

    beta: np.ndarray
    alpha: np.ndarray | None
    phi: float
    sigma1: np.ndarray
    covariances: dict
    n_clusters: int
    n_obs: int
    n_iter: int
    converged: bool
    degenerate: bool
    ee_residual: dict
    working: str
    link: str
    variance_family: str

    def se(self, estimator: str = "BC1") -> np.ndarray:
        cov = self.covariances[estimator]
        # clamp: rounding can leave a zero diagonal entry tiny and negative
        return np.sqrt(np.maximum(np.diag(cov), 0.0) / self.n_clusters)

    def to_record(self) -> dict:
        return {
            "beta": [float(x) for x in self.beta],
            "alpha": None if self.alpha is None else [float(x) for x in self.alpha],
            "phi": float(self.phi),
            "sigma1": np.asarray(self.sigma1).tolist(),
            "covariances": {k: np.asarray(v).tolist()
                            for k, v in self.covariances.items()},
            "n_clusters": self.n_clusters,
            "n_obs": self.n_obs,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "degenerate": self.degenerate,
            "ee_residual": dict(self.ee_residual),
            "working": self.working,
            "link": self.link,
            "variance_family": self.variance_family,
        }

    @classmethod
    def from_record(cls, record: dict) -> "GeeFit":
        return cls(
            beta=np.asarray(record["beta"], dtype=float),
            alpha=None if record["alpha"] is None
            else np.asarray(record["alpha"], dtype=float),
            phi=float(record["phi"]),
            sigma1=np.asarray(record["sigma1"], dtype=float),
            covariances={k: np.asarray(v, dtype=float)
                         for k, v in record["covariances"].items()},
            n_clusters=int(record["n_clusters"]),
            n_obs=int(record["n_obs"]),
            n_iter=int(record["n_iter"]),
            converged=bool(record["converged"]),
            degenerate=bool(record["degenerate"]),
            ee_residual=dict(record["ee_residual"]),
            working=record["working"],
            link=record["link"],
            variance_family=record["variance_family"],
        )


@dataclass(frozen=True)
class WaldTest:
    statistic: float
    df: int
    p_value: float
    reject: bool
    estimator: str


class _State:
    """Per-dataset precomputation shared by every iteration."""

    def __init__(self, dataset, link, var_family, engine):
        layout = dataset.layout
        n = layout.n_clusters
        if n < 3:
            raise DomainError(f"need at least 3 clusters, got {n}")
        self.n_clusters = n
        self.link = link
        self.var = var_family
        z = []
        for t in layout.treat:
            if len(set(t)) != 1:
                raise ValueError(
                    "treatment varies within a cluster; only cluster-level "
                    "assignment is supported for fitting"
                )
            z.append(t[0])
        self.z = np.asarray(z, dtype=float)
        self.sizes = np.asarray([layout.cluster_size(i) for i in range(n)])
        self.n_obs = int(self.sizes.sum())
        self.y = [np.asarray(yi, dtype=float) for yi in dataset.y]
        dims = layout.dims
        self.fast = engine != "general" and dims is not None
        if self.fast:
            self.dims = dims
            self.ymat = np.stack(self.y)
            m, k, l = dims.m, dims.k, dims.l
            self.pair_counts = np.array([
                m * k * l * (l - 1) / 2.0,
                m * k * l * (k * l - l) / 2.0,
                ((m * k * l) ** 2 - m * (k * l) ** 2) / 2.0,
            ]) * n
        else:
            self.labels = [layout.labels(i) for i in range(n)]
            self.panels = layout.panels
            counts = np.zeros(3)
            for i in range(n):
                fac, prov = self.labels[i]
                ni = self.sizes[i]
                prov_sq = np.bincount(prov).astype(float)
                fac_sq = np.bincount(fac).astype(float)
                c0 = ((prov_sq ** 2).sum() - ni) / 2.0
                c1 = ((fac_sq ** 2).sum() - (prov_sq ** 2).sum()) / 2.0
                c2 = (ni ** 2 - (fac_sq ** 2).sum()) / 2.0
                counts += (c0, c1, c2)
            self.pair_counts = counts
            self.structures = {}
            self.structure_of = []
            for i in range(n):
                key = layout.panels[i]
                self.structures.setdefault(key, []).append(i)
                self.structure_of.append(key)
            # provider sizes and facility labels per unique structure,
            # for the reduced eigenvalue check and the R^(-1) 1 solves
            self.structure_info = {}
            for key in self.structures:
                t = [l for row in key for l in row]
                fl = [j for j, row in enumerate(key) for _ in row]
                self.structure_info[key] = (
                    np.asarray(t, dtype=float), np.asarray(fl))


def _reduced_min_eig(t: np.ndarray, fac: np.ndarray,
                     params: CorrelationParams) -> float:
    """Smallest eigenvalue of a (possibly ragged) nested block matrix.

    Within-provider contrasts contribute eigenvalue 1 - alpha0; the rest
    of the spectrum lives on provider aggregates and comes from a small
    symmetric matrix of order (number of providers).
    """
    a0, a1, a2 = params.alpha0, params.alpha1, params.alpha2
    rt = np.sqrt(t)
    outer = rt[:, None] * rt[None, :]
    same_fac = fac[:, None] == fac[None, :]
    g = np.where(same_fac, a1, a2) * outer
    g[np.diag_indices_from(g)] += 1.0 - a0 + (a0 - a1) * t
    lo = float(np.linalg.eigvalsh(g)[0])
    if np.any(t > 1):
        lo = min(lo, 1.0 - a0)
    return lo


def _solve_ones(t: np.ndarray, fac: np.ndarray,
                params: CorrelationParams) -> np.ndarray:
    """Provider-level weights q with R^(-1) 1 = repeat(q, panel sizes).

    R^(-1) 1 is constant within providers, so it suffices to solve the
    reduced provider-aggregate system G q = 1.
    """
    a0, a1, a2 = params.alpha0, params.alpha1, params.alpha2
    same_fac = fac[:, None] == fac[None, :]
    g = np.where(same_fac, a1, a2) * t[None, :]
    g[np.diag_indices_from(g)] += 1.0 - a0 + (a0 - a1) * t
    return np.linalg.solve(g, np.ones(t.size))


def _inv2(mat: np.ndarray) -> np.ndarray:
    det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
    if det == 0.0 or not np.isfinite(det):
        raise DomainError("singular bread matrix")
    return np.array([[mat[1, 1], -mat[0, 1]], [-mat[1, 0], mat[0, 0]]]) / det


def _beta_solve(state: _State, beta, alpha, phi, working):
    """Fisher scoring to convergence at fixed working parameters.

    Returns (beta, per-cluster score pieces); the pieces are reused by the
    correlation update and the covariance assembly:
      sw  scalar weight of cluster i in the score, g_i = sw_i [1, z_i]'
      ow  scalar weight in O_i = ow_i [[1, z],[z, z]]
    """
    link = state.link
    var = state.var
    z = state.z
    n = state.n_clusters

    lam4 = 1.0
    q_map = None
    if working == "ene":
        if state.fast:
            lam4 = eigen_spectrum(alpha, state.dims).lambda4
            u_base = state.sizes / lam4
        else:
            q_map = {key: _solve_ones(*state.structure_info[key], alpha)
                     for key in state.structures}
            u_base = np.array([
                float(q_map[state.structure_of[i]]
                      @ np.bincount(state.labels[i][1]))
                for i in range(n)
            ])
    else:
        u_base = state.sizes.astype(float)

    # the logit-binomial pair saturates: an unbounded iterate sends the
    # variance function to exact zero and poisons the weights, so cap the
    # coefficients far outside any estimable value; a capped iterate keeps
    # failing the step tolerance and surfaces as non-convergence
    cap = 30.0 if (link.name, var.name) == ("logit", "binomial") else None

    converged = False
    for _ in range(_INNER_MAX):
        eta = beta[0] + beta[1] * z
        mu = link.inverse(eta)
        d = link.mu_eta(mu)
        v = var.nu(mu)
        if q_map is not None:
            s = np.empty(n)
            for i in range(n):
                q = q_map[state.structure_of[i]]
                prov = state.labels[i][1]
                resid_sums = np.bincount(
                    prov, weights=state.y[i] - mu[i])
                s[i] = q @ resid_sums
        else:
            if state.fast:
                totals = state.ymat.sum(axis=1) - state.sizes * mu
            else:
                totals = np.array(
                    [state.y[i].sum() - state.sizes[i] * mu[i]
                     for i in range(n)])
            s = totals / lam4
        sw = d / (phi * v) * s
        ow = d * d / (phi * v) * u_base
        w = np.array([
            [ow.sum(), ow @ z],
            [ow @ z, ow @ (z * z)],
        ])
        score = np.array([sw.sum(), sw @ z])
        step = _inv2(w) @ score
        beta = beta + step
        if cap is not None:
            beta = np.clip(beta, -cap, cap)
        if np.max(np.abs(step)) < _INNER_TOL:
            converged = True
            break
    return beta, converged


def _cluster_pieces(state: _State, beta, alpha, phi, working):
    """Final per-cluster scalars at the current parameters."""
    link, var, z, n = state.link, state.var, state.z, state.n_clusters
    eta = beta[0] + beta[1] * z
    mu = link.inverse(eta)
    d = link.mu_eta(mu)
    v = var.nu(mu)
    if working == "ene":
        if state.fast:
            lam4 = eigen_spectrum(alpha, state.dims).lambda4
            u = state.sizes / lam4
            s = (state.ymat.sum(axis=1) - state.sizes * mu) / lam4
        else:
            u = np.empty(n)
            s = np.empty(n)
            q_map = {key: _solve_ones(*state.structure_info[key], alpha)
                     for key in state.structures}
            for i in range(n):
                q = q_map[state.structure_of[i]]
                prov = state.labels[i][1]
                u[i] = q @ np.bincount(prov)
                s[i] = q @ np.bincount(prov, weights=state.y[i] - mu[i])
    else:
        u = state.sizes.astype(float)
        if state.fast:
            s = state.ymat.sum(axis=1) - state.sizes * mu
        else:
            s = np.array([state.y[i].sum() - state.sizes[i] * mu[i]
                          for i in range(n)])
    sw = d / (phi * v) * s
    ow = d * d / (phi * v) * u
    return mu, d, v, sw, ow


def _alpha_moment(state: _State, beta, alpha, phi, working):
    """Pooled pair-class products of leverage-adjusted residuals.

    The adjustment multiplies the product matrix one-sided:
    E[(I - H_i)^(-1) r_i r_i'] equals the working covariance exactly under
    the beta linearization, so each unordered pair contributes the
    symmetrized product (adjusted_a raw_b + adjusted_b raw_a) / 2.  With
    the rank-2 identity the adjusted residual is raw plus a per-cluster
    constant c, which reduces every class sum to block subtotals of the
    standardized raw residuals.
    """
    link, var, z, n = state.link, state.var, state.z, state.n_clusters
    mu, d, v, sw, ow = _cluster_pieces(state, beta, alpha, phi, working)
    w = np.array([[ow.sum(), ow @ z], [ow @ z, ow @ (z * z)]])
    # leverage shift: r + D_i (W - O_i)^(-1) g_i is constant per cluster
    shift = np.empty(n)
    for i in range(n):
        o_i = ow[i] * np.array([[1.0, z[i]], [z[i], z[i]]])
        g_i = sw[i] * np.array([1.0, z[i]])
        m_i = w - o_i
        shift[i] = d[i] * (np.array([1.0, z[i]]) @ (_inv2(m_i) @ g_i))
    scale = np.sqrt(phi * v)
    c = shift / scale
    sums = np.zeros(3)
    if state.fast:
        dims = state.dims
        m, k, l = dims.m, dims.k, dims.l
        e = (state.ymat - mu[:, None]) / scale[:, None]
        tens = e.reshape(n, m, k, l)
        s_prov = tens.sum(axis=3)
        f_fac = s_prov.sum(axis=2)
        tot = f_fac.sum(axis=1)
        sq = (tens ** 2).sum(axis=(1, 2, 3))
        sp2 = (s_prov ** 2).sum(axis=(1, 2))
        ff2 = (f_fac ** 2).sum(axis=1)
        sums[0] = ((sp2 - sq + c * tot * (l - 1)) / 2.0).sum()
        sums[1] = ((ff2 - sp2 + c * tot * l * (k - 1)) / 2.0).sum()
        sums[2] = ((tot * tot - ff2 + c * tot * k * l * (m - 1)) / 2.0).sum()
    else:
        for i in range(n):
            fac, prov = state.labels[i]
            e = (state.y[i] - mu[i]) / scale[i]
            sq = float(e @ e)
            sp = np.bincount(prov, weights=e)
            sf = np.bincount(fac, weights=e)
            t_p = np.bincount(prov).astype(float)
            n_f = np.bincount(fac).astype(float)
            sp2 = float(sp @ sp)
            ff2 = float(sf @ sf)
            tot = float(e.sum())
            tp_sp = float(t_p @ sp)
            nf_sf = float(n_f @ sf)
            ci = c[i]
            sums[0] += (sp2 + ci * tp_sp - sq - ci * tot) / 2.0
            sums[1] += (ff2 + ci * nf_sf - sp2 - ci * tp_sp) / 2.0
            sums[2] += (tot * tot + ci * state.sizes[i] * tot
                        - ff2 - ci * nf_sf) / 2.0
    return sums / state.pair_counts


def _candidate_valid(state: _State, cand: np.ndarray) -> bool:
    if not np.all(np.isfinite(cand)):
        return False
    if np.any(cand < 0.0) or np.any(cand >= 1.0):
        return False
    params = CorrelationParams(*cand)
    if state.fast:
        return eigen_spectrum(params, state.dims).min_value > VALIDITY_FLOOR
    return all(
        _reduced_min_eig(*info, params) > VALIDITY_FLOOR
        for info in state.structure_info.values()
    )


def _phi_update(state: _State, beta):
    """Pearson moment estimate with a p-degree-of-freedom correction."""
    link, var, z = state.link, state.var, state.z
    eta = beta[0] + beta[1] * z
    mu = link.inverse(eta)
    v = var.nu(mu)
    total = 0.0
    if state.fast:
        total = float((((state.ymat - mu[:, None]) ** 2)
                       / v[:, None]).sum())
    else:
        for i in range(state.n_clusters):
            total += float(((state.y[i] - mu[i]) ** 2).sum() / v[i])
    return total / (state.n_obs - _P)


def _sqrt2(mat: np.ndarray):
    """Principal square root of a 2x2 matrix with positive determinant."""
    det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
    if det <= 0.0 or not np.isfinite(det):
        return None
    root_det = math.sqrt(det)
    denom = mat[0, 0] + mat[1, 1] + 2.0 * root_det
    if denom <= 0.0:
        return None
    return (mat + root_det * np.eye(2)) / math.sqrt(denom)


def _corrected_meat(g: np.ndarray, q: np.ndarray, kind: str,
                    bound: float):
    """Sum of C_i g_i g_i' C_i' for one correction kind.

    g is (N, 2) of cluster scores, q is (N, 2, 2) of Q_i matrices.
    kind "BC0" uses C_i = I, "BC1" (I - Q_i)^(-1/2), "BC2" (I - Q_i)^(-1),
    "BC3" the bounded diagonal correction.  Returns (meat, degenerate).
    """
    n = g.shape[0]
    meat = np.zeros((2, 2))
    degenerate = False
    eye = np.eye(2)
    for i in range(n):
        if kind == "BC0":
            a = g[i]
        elif kind == "BC3":
            dd = 1.0 / np.sqrt(1.0 - np.minimum(bound, np.diag(q[i])))
            a = dd * g[i]
        else:
            iq = eye - q[i]
            if kind == "BC2":
                det = iq[0, 0] * iq[1, 1] - iq[0, 1] * iq[1, 0]
                if det <= 0.0 or not np.isfinite(det):
                    degenerate = True
                    continue
                a = np.array([[iq[1, 1], -iq[0, 1]],
                              [-iq[1, 0], iq[0, 0]]]) @ g[i] / det
            else:
                root = _sqrt2(iq)
                if root is None:
                    degenerate = True
                    continue
                a = np.linalg.solve(root, g[i])
        meat += np.outer(a, a)
    return meat, degenerate


def _covariances(state: _State, beta, alpha, phi, working, bound):
    mu, d, v, sw, ow = _cluster_pieces(state, beta, alpha, phi, working)
    z = state.z
    n = state.n_clusters
    w = np.array([[ow.sum(), ow @ z], [ow @ z, ow @ (z * z)]])
    w_inv = _inv2(w)
    g = np.column_stack((sw, sw * z))
    base = np.stack([np.array([[1.0, zi], [zi, zi]]) for zi in z])
    q = ow[:, None, None] * base @ w_inv

    sigma1 = w / n
    mb = n * w_inv
    covs = {}
    degenerate = False
    for kind in ("BC0", "BC1", "BC2", "BC3"):
        meat, bad = _corrected_meat(g, q, kind, bound)
        degenerate = degenerate or bad
        covs[kind] = w_inv @ meat @ w_inv * n
    covs["MB"] = mb
    f = state.n_obs
    c = (f - 1) / (f - _P) * n / (n - 1)
    delta = min(0.5, _P / (n - _P))
    sigma0 = (g.T @ g) / n
    phi_m = max(1.0, c * float(np.trace(sigma0 @ np.linalg.inv(sigma1))) / _P)
    covs["BC4"] = c * covs["BC0"] + delta * phi_m * mb
    # sandwich products are PSD in exact arithmetic; cancellation can leave
    # diagonals at tiny negative values, so clamp before taking roots
    se1 = np.sqrt(np.maximum(np.diag(covs["BC1"]), 0.0))
    se2 = np.sqrt(np.maximum(np.diag(covs["BC2"]), 0.0))
    avg = (covs["BC1"] + covs["BC2"]) / 2.0
    avg_se = (se1 + se2) / 2.0
    avg[0, 0] = avg_se[0] ** 2
    avg[1, 1] = avg_se[1] ** 2
    covs["AVG"] = avg
    return sigma1, covs, degenerate


def fit(dataset, *, link: str = "logit", variance_family: str = "binomial",
        working="ene", tol: float = 1e-9, max_iter: int = 200,
        bc3_bound: float = 0.75, fix_alpha=None,
        engine: str = "auto") -> GeeFit:
    """Fit the two-arm marginal model by GEE.

    working accepts "independence", "ene", or a WorkingCorrelation.  With
    fix_alpha the ENE triple is held at the given values instead of being
    estimated.  engine="general" forces the per-cluster code path that
    unbalanced layouts use (balanced layouts normally take a vectorized
    shortcut); results agree to floating-point accuracy.
    """
    if isinstance(working, WorkingCorrelation):
        working = working.kind
    if working not in ("independence", "ene"):
        raise ValueError(f"unknown working correlation {working!r}")
    link_obj = get_link(link)
    var_obj = get_variance_family(variance_family)
    state = _State(dataset, link_obj, var_obj, engine)

    # link-transformed arm means, nudged off the boundary
    y_all = np.concatenate(state.y)
    z_obs = np.repeat(state.z, state.sizes)
    if not (np.any(z_obs == 0) and np.any(z_obs == 1)):
        raise DomainError("both arms must be represented in the data")
    eps = 0.5 / state.n_obs
    mean_c = float(y_all[z_obs == 0].mean())
    mean_t = float(y_all[z_obs == 1].mean())
    if variance_family == "binomial":
        mean_c = min(max(mean_c, eps), 1.0 - eps)
        mean_t = min(max(mean_t, eps), 1.0 - eps)
    elif variance_family == "poisson":
        mean_c = max(mean_c, eps)
        mean_t = max(mean_t, eps)
    beta = np.array([link_obj.value(mean_c),
                     link_obj.value(mean_t) - link_obj.value(mean_c)])

    estimate_alpha = working == "ene" and fix_alpha is None
    if working == "ene":
        alpha = (np.array([0.01, 0.005, 0.001]) if fix_alpha is None
                 else np.asarray(fix_alpha, dtype=float))
        if not _candidate_valid(state, alpha):
            raise DomainError(
                "initial working correlation is invalid for this layout")
        alpha_params = CorrelationParams(*alpha)
    else:
        alpha = None
        alpha_params = None
    phi = 1.0
    estimate_phi = not var_obj.fixed_phi

    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        beta_prev = beta.copy()
        alpha_prev = None if alpha is None else alpha.copy()
        beta, beta_ok = _beta_solve(state, beta, alpha_params, phi, working)
        if estimate_phi:
            phi = _phi_update(state, beta)
        if estimate_alpha:
            cand = _alpha_moment(state, beta, alpha_params, phi, working)
            # sampling noise sends small components negative routinely;
            # project onto the box, then step-halve only if positive
            # definiteness still fails
            cand = np.clip(cand, 0.0, 1.0 - 1e-9)
            step_ok = False
            for _ in range(_HALVINGS + 1):
                if _candidate_valid(state, cand):
                    step_ok = True
                    break
                cand = (cand + alpha) / 2.0
            if not step_ok:
                converged = False
                break
            alpha = cand
            alpha_params = CorrelationParams(*alpha)
        delta = float(np.max(np.abs(beta - beta_prev)))
        if alpha_prev is not None:
            delta = max(delta, float(np.max(np.abs(alpha - alpha_prev))))
        if beta_ok and delta < tol:
            converged = True
            break

    # honest residuals at the returned parameters
    _, _, _, sw, _ = _cluster_pieces(state, beta, alpha_params, phi, working)
    score = np.array([sw.sum(), sw @ state.z])
    ee = {"beta": float(np.max(np.abs(score)) / state.n_clusters),
          "alpha": None}
    if estimate_alpha:
        # self-consistency gap of the projected update map
        moment = np.clip(_alpha_moment(state, beta, alpha_params, phi,
                                       working), 0.0, 1.0 - 1e-9)
        ee["alpha"] = float(np.max(np.abs(moment - alpha)))

    sigma1, covs, degenerate = _covariances(
        state, beta, alpha_params, phi, working, bc3_bound)

    return GeeFit(
        beta=beta,
        alpha=None if alpha is None else np.asarray(alpha, dtype=float),
        phi=float(phi),
        sigma1=sigma1,
        covariances=covs,
        n_clusters=state.n_clusters,
        n_obs=state.n_obs,
        n_iter=n_iter,
        converged=converged,
        degenerate=degenerate,
        ee_residual=ee,
        working=working,
        link=link,
        variance_family=variance_family,
    )


def variance_estimators(fit_result: GeeFit) -> dict:
    """The seven 2x2 covariance matrices, keyed by estimator name."""
    return {k: np.asarray(v).copy() for k, v in fit_result.covariances.items()}


def wald_t_test(fit_result: GeeFit, estimator: str = "BC1",
                alpha_level: float = 0.05) -> WaldTest:
    """Two-sided t-test of the treatment coefficient.

    statistic = sqrt(N) beta2 / sqrt(cov22) referred to t with N - 2
    degrees of freedom.
    """
    cov = fit_result.covariances[estimator]
    var22 = float(cov[1, 1])
    if not np.isfinite(var22) or var22 <= 0.0:
        raise DomainError(
            f"estimator {estimator} has non-positive variance {var22!r}")
    df = fit_result.n_clusters - _P
    stat = math.sqrt(fit_result.n_clusters) * float(fit_result.beta[1]) \
        / math.sqrt(var22)
    p = 2.0 * float(special.stdtr(df, -abs(stat)))
    return WaldTest(statistic=stat, df=df, p_value=p,
                    reject=p < alpha_level, estimator=estimator)
