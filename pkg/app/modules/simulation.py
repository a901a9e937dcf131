"""Simulated network experiments: graph generators, treatment designs,
outcome models with additive / multiplicative / misspecified interference,
and the replication loop that scores every estimator."""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist
from tqdm import tqdm

from app.dependencies import get_rng, get_worker_count, replication_seed
from app.errors import EstimationUndefinedError, InputError, NetMatchError
from app.models.estimators import EstimatorResult
from app.models.graph import Graph, LabeledGraph
from app.models.simulation import (
    ExperimentReport,
    OutcomeDraw,
    RandomizationSpec,
    ReplicationRecord,
    SimConfig,
)
from app.modules.baselines import BASELINES, sym_eigen
from app.modules.flame import run_flame
from app.modules.graph_core import remove_control_edges
from app.modules.interference import default_components, treated_triangles, zscore_normalize
from app.modules.match_quality import match_quality_eval
from app.modules.motif_census import (
    binarize,
    census_all_units,
    census_table,
    enumerate_connected_subgraphs,
)
from app.utils.constants import (
    ALL_EIGEN,
    COMPONENT_NAMES,
    ERROR_MESSAGES,
    FIRST_EIGEN,
    FLAME,
    TRUE_F,
)
from app.utils.io import load_edge_list

logger = logging.getLogger(__name__)


def gen_er(n: int, q: float, rng: np.random.Generator) -> Graph:
    """Every unordered pair becomes an edge independently with probability q"""
    if n < 0 or not 0 <= q <= 1:
        raise InputError(f"invalid Erdos-Renyi parameters n={n}, q={q}")
    rows, cols = np.triu_indices(n, k=1)
    keep = rng.random(len(rows)) < q
    return Graph(n, zip(rows[keep].tolist(), cols[keep].tolist()))


def gen_sbm(
    block_sizes: Sequence[int], p_within: float, p_between: float, rng: np.random.Generator
) -> Tuple[Graph, np.ndarray]:
    """Stochastic block model; returns the graph and each vertex's block"""
    if not (0 <= p_within <= 1 and 0 <= p_between <= 1):
        raise InputError("block model probabilities must lie in [0, 1]")
    blocks = np.repeat(np.arange(len(block_sizes)), block_sizes)
    n = len(blocks)
    rows, cols = np.triu_indices(n, k=1)
    prob = np.where(blocks[rows] == blocks[cols], p_within, p_between)
    keep = rng.random(len(rows)) < prob
    return Graph(n, zip(rows[keep].tolist(), cols[keep].tolist())), blocks


def randomize(
    n: int,
    design: RandomizationSpec,
    rng: np.random.Generator,
    blocks: Optional[np.ndarray] = None,
) -> np.ndarray:
    if design.design == "complete":
        n_treated = design.n_treated if design.n_treated is not None else n // 2
        if n_treated > n:
            raise InputError(f"cannot treat {n_treated} of {n} units")
        t = np.zeros(n, dtype=int)
        t[rng.choice(n, size=n_treated, replace=False)] = 1
        return t

    if design.design == "cluster":
        if blocks is None:
            raise InputError("cluster randomization needs block memberships")
        t = np.zeros(n, dtype=int)
        for block in np.unique(blocks):
            members = np.flatnonzero(blocks == block)
            per_block = (
                design.treated_per_block if design.treated_per_block is not None else len(members) // 2
            )
            if per_block > len(members):
                raise InputError(f"cannot treat {per_block} of {len(members)} units in block {block}")
            t[rng.choice(members, size=per_block, replace=False)] = 1
        return t

    if design.design == "bernoulli":
        return (rng.random(n) < design.p).astype(int)

    raise InputError(f"unknown randomization design {design.design!r}")


def interference_values(config: SimConfig, g: Graph, t: np.ndarray) -> Tuple[np.ndarray, Optional[pd.DataFrame]]:
    params = config.interference
    if params.kind == "none":
        return np.zeros(g.n), None

    if params.kind == "additive":
        if len(params.gamma) != len(COMPONENT_NAMES):
            raise InputError(f"additive interference needs {len(COMPONENT_NAMES)} weights, got {len(params.gamma)}")
        comps = default_components(
            g, t, scope=params.scope, normalize=params.z_scored, ego_label=params.ego_label
        )
        return comps.to_numpy() @ np.asarray(params.gamma, dtype=float), comps

    if params.kind == "multiplicative":
        if not params.components:
            raise InputError("multiplicative interference needs at least one component")
        comps = default_components(
            g, t, scope=params.scope, normalize=params.z_scored, ego_label=params.ego_label
        )
        return params.alpha * comps[params.components].prod(axis=1).to_numpy(), comps

    if params.kind == "misspecified":
        # degree and triangles on the graph without control-control edges
        pruned = remove_control_edges(g, t)
        comps = pd.DataFrame(
            {
                "degree": pruned.degrees(),
                "treated_triangles": [
                    treated_triangles(pruned, t, i, params.ego_label) for i in pruned.vertices()
                ],
            },
            index=pd.Index(range(g.n), name="unit"),
            dtype=float,
        )
        if params.z_scored:
            comps = zscore_normalize(comps)
        gamma = params.misspecified_gamma
        f = (5.0 - gamma) * comps["degree"] + gamma * comps["treated_triangles"]
        return f.to_numpy(), comps

    raise InputError(f"unknown interference kind {params.kind!r}")


def gen_outcomes(config: SimConfig, g: Graph, t: np.ndarray, rng: np.random.Generator) -> OutcomeDraw:
    """Y_i = t_i tau_i + f_i + beta x_i + eps_i with tau_i ~ N(tau_mean, tau_sd^2)"""
    n = g.n
    tau = rng.normal(config.tau_mean, config.tau_sd, n)
    if config.errors.kind == "heteroskedastic":
        variance = rng.uniform(0.0, 1.0, n)
        eps = rng.normal(0.0, np.sqrt(variance))
    else:
        eps = rng.normal(0.0, config.errors.sigma, n)

    f, comps = interference_values(config, g, t)
    y = t * tau + f + eps

    x = None
    if config.covariate is not None:
        x = rng.choice(np.asarray(config.covariate.levels), size=n)
        y = y + config.covariate.beta * x

    true_ade = config.tau_mean if config.fixed_true_ade else float(tau.mean())
    return OutcomeDraw(y=y, true_ade=true_ade, tau=tau, f=f, components=comps, x=x)


def residualize(y, x) -> np.ndarray:
    """Residuals of an OLS fit of y on the levels of x plus an intercept"""
    y = np.asarray(y, dtype=float)
    dummies = pd.get_dummies(pd.Series(np.asarray(x)).astype(str), drop_first=True, dtype=float)
    design = np.column_stack([np.ones(len(y)), dummies.to_numpy()])
    beta = np.linalg.lstsq(design, y, rcond=None)[0]
    return y - design @ beta


def match_on_true_f(f, y, t) -> EstimatorResult:
    """Pair each treated unit with the control closest in true interference"""
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t).astype(int)
    treated = np.flatnonzero(t == 1)
    control = np.flatnonzero(t == 0)
    if len(treated) == 0 or len(control) == 0:
        raise InputError(ERROR_MESSAGES["MISSING_ARM"])
    distances = np.abs(f[treated][:, None] - f[control][None, :])
    nearest = control[np.argmin(distances, axis=1)]
    return EstimatorResult(
        float(np.mean(y[treated] - y[nearest])),
        pairs=[(int(i), int(j)) for i, j in zip(treated, nearest)],
    )


def draw_graph(config: SimConfig, rng: np.random.Generator) -> Tuple[Graph, Optional[np.ndarray]]:
    params = config.graph
    if params.model == "er":
        return gen_er(params.n, params.q, rng), None
    if params.model == "sbm":
        return gen_sbm(params.block_sizes, params.p_within, params.p_between, rng)
    graph, _ = load_edge_list(params.path)
    return graph, None


def _flame_estimate(config: SimConfig, g: Graph, t, draw: OutcomeDraw, seed: int):
    census, universe = census_all_units(g, t, config.flame.census, workers=1)
    counts = census_table(census, universe)
    covariates = pd.DataFrame({"x": draw.x}) if draw.x is not None else None
    if covariates is not None:
        covariates.index.name = "unit"
    scheme = "quantile" if config.flame.bins else "exact"
    features = binarize(counts, scheme, config.flame.bins or 10, covariates)
    match_config = config.flame.match.model_copy(update={"seed": seed})
    return run_flame(features, draw.y, t, g, counts, match_config)


def run_replication(
    config: SimConfig,
    index: int,
    setting: str,
    fixed: Optional[Tuple[Graph, Optional[np.ndarray]]] = None,
) -> List[ReplicationRecord]:
    """One draw of graph (unless fixed), treatment and outcomes, scored by
    every configured estimator. Estimator failures become records with an
    error message."""
    seed = replication_seed(config.seed, index)
    rng = get_rng(seed)
    g, blocks = fixed if fixed is not None else draw_graph(config, rng)
    t = randomize(g.n, config.randomization, rng, blocks)
    draw = gen_outcomes(config, g, t, rng)
    y_base = residualize(draw.y, draw.x) if draw.x is not None else draw.y

    results: Dict[str, EstimatorResult] = {}
    failures: Dict[str, str] = {}
    distances: Dict[str, float] = {}
    options: Dict[str, object] = {}
    if config.randomization.design == "bernoulli":
        options["p"] = config.randomization.p
    if {FIRST_EIGEN, ALL_EIGEN} & set(config.estimators):
        options["spectrum"] = sym_eigen(g.adjacency_matrix())

    def attempt(name: str, fn):
        try:
            results[name] = fn()
        except (NetMatchError, ValueError, np.linalg.LinAlgError) as e:
            failures[name] = str(e)
            logger.warning("Replication %d: %s failed: %s", index, name, e)

    for name in config.estimators:
        if name == FLAME:
            def flame_fn():
                result = _flame_estimate(config, g, t, draw, seed)
                if config.match_quality and result.groups:
                    distances[FLAME] = match_quality_eval(result.groups, g, t)
                if not result.defined:
                    raise EstimationUndefinedError(ERROR_MESSAGES["NO_MATCHES"])
                return EstimatorResult(result.ade, {"groups": len(result.groups)})
            attempt(name, flame_fn)
        else:
            attempt(name, lambda name=name: BASELINES[name](g, y_base, t, options))

    if config.match_on_true_f:
        attempt(TRUE_F, lambda: match_on_true_f(draw.f, y_base, t))

    if config.match_quality:
        for name in (ALL_EIGEN, TRUE_F):
            if name in results and results[name].pairs:
                distances[name] = match_quality_eval(results[name].pairs, g, t)

    records = []
    for name in list(config.estimators) + ([TRUE_F] if config.match_on_true_f else []):
        result = results.get(name)
        estimate = result.estimate if result is not None else None
        records.append(
            ReplicationRecord(
                setting=setting,
                replication=index,
                seed=seed,
                method=name,
                true_ade=draw.true_ade,
                estimate=estimate,
                abs_error=abs(estimate - draw.true_ade) if estimate is not None else None,
                graph_distance=distances.get(name),
                error=failures.get(name),
            )
        )
    return records


def _settings(config: SimConfig) -> List[Tuple[str, SimConfig]]:
    if not config.sweep:
        return [(config.name, config)]
    out = []
    for gamma in config.sweep:
        interference = config.interference.model_copy(update={"misspecified_gamma": gamma})
        out.append((f"{config.name}-gamma{gamma:g}", config.model_copy(update={"interference": interference})))
    return out


def _replication_job(args) -> List[ReplicationRecord]:
    return run_replication(*args)


def summarize(records: Sequence[ReplicationRecord]) -> pd.DataFrame:
    """Per setting and method: absolute-error mean, median, quartiles and sd,
    failure count, and mean graph distance when recorded."""
    frame = pd.DataFrame([r.model_dump() for r in records])
    if frame.empty:
        return pd.DataFrame()
    rows = []
    for (setting, method), part in frame.groupby(["setting", "method"], sort=False):
        errors = part["abs_error"].dropna().astype(float)
        distance = part["graph_distance"].dropna().astype(float)
        rows.append(
            {
                "setting": setting,
                "method": method,
                "replications": len(part),
                "failures": int(part["error"].notna().sum()),
                "mean_error": errors.mean() if len(errors) else None,
                "median_error": errors.median() if len(errors) else None,
                "q25_error": errors.quantile(0.25) if len(errors) else None,
                "q75_error": errors.quantile(0.75) if len(errors) else None,
                "sd_error": errors.std(ddof=1) if len(errors) > 1 else None,
                "mean_graph_distance": distance.mean() if len(distance) else None,
            }
        )
    return pd.DataFrame(rows)


def run_experiment(
    config: SimConfig,
    workers: Optional[int] = None,
    progress: bool = False,
) -> ExperimentReport:
    """Run every replication of every setting; identical config and seed give
    identical records whatever the worker count."""
    workers = workers or get_worker_count()
    fixed = None
    if config.graph.fixed:
        fixed = draw_graph(config, get_rng(config.seed))
        logger.info("Using one fixed graph with %d vertices and %d edges", fixed[0].n, fixed[0].num_edges)

    jobs = [
        (sub, index, label, fixed)
        for label, sub in _settings(config)
        for index in range(config.replications)
    ]
    logger.info("Running %d replications of %s", len(jobs), config.name)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(tqdm(pool.map(_replication_job, jobs), total=len(jobs), disable=not progress))
    else:
        batches = [_replication_job(job) for job in tqdm(jobs, disable=not progress)]

    records = [record for batch in batches for record in batch]
    return ExperimentReport(config=config, records=records, summary=summarize(records))


def independent_neighborhoods_error(
    n_units: int,
    rng: np.random.Generator,
    size: int = 4,
    q: float = 0.5,
    tau_mean: float = 5.0,
) -> float:
    """One trial of nearest-census matching when every unit owns an
    independently drawn labeled neighborhood graph.

    Interference depends only on the labeled neighborhood (2 per treated
    neighbor, 3 per edge touching a treated neighbor), so exact census
    matches remove interference bias.
    """
    t = np.zeros(n_units, dtype=int)
    t[rng.choice(n_units, size=n_units // 2, replace=False)] = 1

    hoods = []
    f = np.empty(n_units)
    for i in range(n_units):
        g = gen_er(size, q, rng)
        labels = (rng.random(size) < 0.5).astype(int)
        hoods.append(LabeledGraph.from_edges(size, g.edges, labels))
        touched = sum(1 for u, v in g.edges if labels[u] or labels[v])
        f[i] = 2.0 * labels.sum() + 3.0 * touched

    censuses = [enumerate_connected_subgraphs(h, size) for h in hoods]
    universe = sorted(set().union(*(c.counts for c in censuses)))
    counts = census_table(censuses, universe).to_numpy(dtype=float)

    tau = rng.normal(tau_mean, 1.0, n_units)
    y = t * tau + f + rng.normal(0.0, 1.0, n_units)

    treated = np.flatnonzero(t == 1)
    control = np.flatnonzero(t == 0)
    nearest = control[np.argmin(cdist(counts[treated], counts[control], metric="cityblock"), axis=1)]
    estimate = float(np.mean(y[treated] - y[nearest]))
    return abs(estimate - float(tau.mean()))


def regime_trend(
    sizes: Sequence[int] = (10, 50, 250),
    replications: int = 200,
    seed: int = 0,
    neighborhood_size: int = 4,
    q: float = 0.5,
) -> Dict[int, float]:
    """Mean nearest-census matching error for each number of units"""
    trend = {}
    for k, n_units in enumerate(sizes):
        errors = [
            independent_neighborhoods_error(
                n_units, get_rng(replication_seed(seed, k * replications + r)), neighborhood_size, q
            )
            for r in range(replications)
        ]
        trend[int(n_units)] = float(np.mean(errors))
    return trend
