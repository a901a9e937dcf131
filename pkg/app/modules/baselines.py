"""Comparison estimators: difference in means, eigenvector matching (first
and all eigenvectors), treated-degree stratification and the closed-form
SANIA linear unbiased estimator."""
import logging
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import comb

from app.errors import EstimationUndefinedError, InputError
from app.models.estimators import EigenSpectrum, EstimatorResult, SaniaWeights
from app.models.graph import Graph
from app.modules.graph_core import treated_degrees
from app.utils.constants import (
    ALL_EIGEN,
    ERROR_MESSAGES,
    FIRST_EIGEN,
    NAIVE,
    SANIA,
    STRATIFIED,
)

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12


def _arms(y, t):
    y = np.asarray(y, dtype=float)
    t = np.asarray(t).astype(int)
    if y.shape != t.shape:
        raise InputError("outcomes and treatments differ in length")
    if not (t == 1).any() or not (t == 0).any():
        raise InputError(ERROR_MESSAGES["MISSING_ARM"])
    return y, t


def naive_dim(y, t) -> float:
    y, t = _arms(y, t)
    return float(y[t == 1].mean() - y[t == 0].mean())


def sym_eigen(adjacency: np.ndarray) -> EigenSpectrum:
    matrix = np.asarray(adjacency, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InputError("eigendecomposition needs a square matrix")
    if not np.allclose(matrix, matrix.T, atol=SYMMETRY_TOL, rtol=0):
        raise InputError("eigendecomposition needs a symmetric matrix")
    values, vectors = np.linalg.eigh(matrix)
    order = np.argsort(-values, kind="stable")
    return EigenSpectrum(values[order], vectors[:, order])


def eigen_match(
    spectrum: EigenSpectrum,
    y,
    t,
    mode: str = "all",
    standardize: bool = True,
) -> EstimatorResult:
    """Pair each treated unit with its nearest control in eigenvector
    coordinates; coordinate k is scaled by its sample sd and weighted 1/k.

    Controls may be reused; ties go to the smallest control id.
    """
    y, t = _arms(y, t)
    if mode not in ("first", "all"):
        raise InputError(f"unknown eigen matching mode {mode!r}")

    coords = spectrum.vectors[:, :1] if mode == "first" else spectrum.vectors
    weights = 1.0 / np.arange(1, coords.shape[1] + 1)
    if standardize and coords.shape[0] > 1:
        sd = coords.std(axis=0, ddof=1)
        coords = coords / np.where(sd > 0, sd, 1.0)
    scaled = coords * np.sqrt(weights)

    treated = np.flatnonzero(t == 1)
    control = np.flatnonzero(t == 0)
    distances = cdist(scaled[treated], scaled[control], metric="sqeuclidean")
    nearest = control[np.argmin(distances, axis=1)]
    estimate = float(np.mean(y[treated] - y[nearest]))
    return EstimatorResult(
        estimate,
        {"mode": mode, "standardized": standardize, "reused_controls": int(len(nearest) - len(set(nearest)))},
        pairs=[(int(i), int(j)) for i, j in zip(treated, nearest)],
    )


def stratified_naive(g: Graph, y, t) -> float:
    """Difference in means within treated-degree strata, averaged with
    stratum-size weights over strata containing both arms."""
    y, t = _arms(y, t)
    strata = treated_degrees(g, t)
    total, weight = 0.0, 0
    for d in np.unique(strata):
        members = strata == d
        arm_t = members & (t == 1)
        arm_c = members & (t == 0)
        if not arm_t.any() or not arm_c.any():
            continue
        size = int(members.sum())
        total += size * (y[arm_t].mean() - y[arm_c].mean())
        weight += size
    if weight == 0:
        raise EstimationUndefinedError(ERROR_MESSAGES["NO_STRATUM"])
    return float(total / weight)


def sania_weights(
    degrees: Sequence[int], z, p: float, treated: Optional[Sequence[int]] = None
) -> SaniaWeights:
    """w_i = (2z_i - 1) C(d_i, d_i^z) / (n pi(z_i) sum_d C(d_i,d)^2 p^d (1-p)^(d_i-d))

    pi(1) = p and pi(0) = 1 - p. Without treated degrees every d_i^z is
    taken as 0."""
    if not 0 < p < 1:
        raise InputError(f"treatment probability must lie strictly between 0 and 1, got {p}")
    degrees = np.asarray(degrees, dtype=int)
    z = np.asarray(z).astype(int)
    if degrees.shape != z.shape:
        raise InputError("degrees and treatments differ in length")
    treated = np.zeros_like(degrees) if treated is None else np.asarray(treated, dtype=int)
    if treated.shape != degrees.shape:
        raise InputError("degrees and treated degrees differ in length")
    if (treated < 0).any() or (treated > degrees).any():
        raise InputError("treated degrees must lie between 0 and the degree")
    n = len(z)

    denominators = np.empty(n)
    for i, d_i in enumerate(degrees):
        d = np.arange(d_i + 1)
        denominators[i] = np.sum(comb(d_i, d) ** 2 * p ** d * (1 - p) ** (d_i - d))

    numerators = (z / (n * p) - (1 - z) / (n * (1 - p))) * comb(degrees, treated)
    return SaniaWeights(numerators / denominators, p)


def sania_estimate(weights: SaniaWeights, y) -> float:
    y = np.asarray(y, dtype=float)
    if y.shape != weights.weights.shape:
        raise InputError("weights and outcomes differ in length")
    return float(weights.weights @ y)


# Uniform interface: (graph, Y, T, options) -> EstimatorResult

def run_naive(g: Graph, y, t, options: Optional[Dict[str, Any]] = None) -> EstimatorResult:
    return EstimatorResult(naive_dim(y, t))


def _spectrum(g: Graph, options: Dict[str, Any]) -> EigenSpectrum:
    cached = options.get("spectrum")
    return cached if cached is not None else sym_eigen(g.adjacency_matrix())


def run_first_eigen(g: Graph, y, t, options: Optional[Dict[str, Any]] = None) -> EstimatorResult:
    options = options or {}
    return eigen_match(_spectrum(g, options), y, t, "first", options.get("standardize", True))


def run_all_eigen(g: Graph, y, t, options: Optional[Dict[str, Any]] = None) -> EstimatorResult:
    options = options or {}
    return eigen_match(_spectrum(g, options), y, t, "all", options.get("standardize", True))


def run_stratified(g: Graph, y, t, options: Optional[Dict[str, Any]] = None) -> EstimatorResult:
    return EstimatorResult(stratified_naive(g, y, t))


def run_sania(g: Graph, y, t, options: Optional[Dict[str, Any]] = None) -> EstimatorResult:
    """SANIA with the design's treatment probability; under complete
    randomization the plug-in p = n1/n is used and flagged."""
    options = options or {}
    t = np.asarray(t).astype(int)
    p = options.get("p")
    plug_in = p is None
    if plug_in:
        p = float(t.mean())
        logger.debug("SANIA uses plug-in treatment probability %.4f", p)
    weights = sania_weights(g.degrees(), t, p, treated_degrees(g, t))
    return EstimatorResult(sania_estimate(weights, y), {"p": p, "plug_in_p": plug_in})


BASELINES: Dict[str, Callable[..., EstimatorResult]] = {
    NAIVE: run_naive,
    FIRST_EIGEN: run_first_eigen,
    ALL_EIGEN: run_all_eigen,
    STRATIFIED: run_stratified,
    SANIA: run_sania,
}


def run_baselines(
    g: Graph, y, t, names: Optional[Sequence[str]] = None, options: Optional[Dict[str, Any]] = None
) -> Dict[str, EstimatorResult]:
    """Run the named baselines (all by default), sharing one eigendecomposition"""
    options = dict(options or {})
    names = list(names or BASELINES)
    unknown = [n for n in names if n not in BASELINES]
    if unknown:
        raise InputError(f"unknown baselines: {unknown}")
    if {FIRST_EIGEN, ALL_EIGEN} & set(names) and "spectrum" not in options:
        options["spectrum"] = sym_eigen(g.adjacency_matrix())
    return {name: BASELINES[name](g, y, t, options) for name in names}
