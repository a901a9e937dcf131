"""Almost-exact matching by greedy backward covariate elimination.

Round 0 matches units exactly on every covariate. Each later round tries
removing every remaining covariate, scores the reduced set with

    MQ = C * BF - PE_Y -/+ D * PE_G

(BF from a tentative match, PE_Y from a ridge fit scored on a holdout split
or out of fold, PE_G the AIC of an edge logistic model on subgraph counts),
drops the best one and matches every unit that became matchable. Matched
units leave the pool.
"""
import logging
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.special import expit, xlogy

from app.errors import EstimationUndefinedError, InputError, InternalError
from app.models.census import FeatureTable
from app.models.graph import Graph
from app.models.matching import DropRecord, GroupMember, MatchConfig, MatchedGroup, MatchResult
from app.dependencies import get_rng
from app.utils.constants import ERROR_MESSAGES

logger = logging.getLogger(__name__)

# Jitter added to the logistic Hessian so collinear count columns stay solvable
IRLS_JITTER = 1e-8
IRLS_TOL = 1e-8
SEPARATION_ETA = 30.0


def _as_series(values, index, name: str) -> pd.Series:
    if isinstance(values, pd.Series):
        return values.reindex(index)
    arr = np.asarray(values)
    if arr.shape[0] != len(index):
        raise InputError(f"{name} has {arr.shape[0]} entries, feature table has {len(index)} units")
    return pd.Series(arr, index=index, name=name)


def _plain(value):
    return value.item() if hasattr(value, "item") else value


def split_holdout(
    features: FeatureTable,
    outcomes,
    treatments,
    config: Optional[MatchConfig] = None,
) -> Tuple[List[int], List[int]]:
    """Split units into a matching set and a holdout set, stratified by arm"""
    config = config or MatchConfig()
    units = features.units
    t = _as_series(treatments, units, "treatment").astype(int)
    _as_series(outcomes, units, "outcome")

    if config.holdout_ids is not None:
        holdout = sorted(set(config.holdout_ids))
        unknown = set(holdout) - set(units)
        if unknown:
            raise InputError(f"holdout ids not in the feature table: {sorted(unknown)[:5]}")
    else:
        fraction = config.holdout_fraction
        if not 0 < fraction < 1:
            raise InputError(f"holdout fraction must lie strictly between 0 and 1, got {fraction}")
        rng = get_rng(config.seed)
        holdout = []
        for arm in (1, 0):
            members = sorted(t.index[t == arm])
            take = int(round(fraction * len(members)))
            if take < 1 or take >= len(members):
                raise InputError(
                    f"too few units to stratify: arm {arm} has {len(members)} units "
                    f"for holdout fraction {fraction}"
                )
            holdout.extend(rng.choice(members, size=take, replace=False).tolist())
        holdout = sorted(holdout)

    held = set(holdout)
    match_set = [u for u in units if u not in held]
    for name, part in (("matching", match_set), ("holdout", holdout)):
        arms = set(t.loc[part])
        if arms != {0, 1}:
            raise InputError(f"{ERROR_MESSAGES['MISSING_ARM']} in the {name} split")
    return match_set, holdout


def exact_match(
    features: FeatureTable,
    active: Sequence[str],
    unmatched: Sequence[int],
    treatments,
    outcomes=None,
    iteration: int = 0,
) -> List[MatchedGroup]:
    """Group unmatched units by their values on the active covariates and keep
    the groups that contain both arms."""
    units = features.units
    t = _as_series(treatments, units, "treatment").astype(int)
    y = _as_series(outcomes if outcomes is not None else np.zeros(len(units)), units, "outcome")
    pool = sorted(unmatched)
    if not pool:
        return []

    active = list(active)
    if active:
        grouped = features.data.loc[pool, active].groupby(active, sort=True).groups
        buckets = [
            (key if isinstance(key, tuple) else (key,), list(index))
            for key, index in grouped.items()
        ]
    else:
        buckets = [((), pool)]

    groups = []
    for key, members in sorted(buckets, key=lambda item: item[0]):
        arms = t.loc[members]
        if arms.max() == 1 and arms.min() == 0:
            groups.append(
                MatchedGroup(
                    signature={c: _plain(v) for c, v in zip(active, key)},
                    members=[
                        GroupMember(int(u), bool(t.loc[u]), float(y.loc[u]))
                        for u in sorted(members)
                    ],
                    iteration=iteration,
                )
            )
    return groups


def balancing_factor(new_treated: int, new_control: int, pool_treated: int, pool_control: int) -> float:
    """Share of the treated pool plus share of the control pool matched this round"""
    bf = 0.0
    if pool_treated:
        bf += new_treated / pool_treated
    if pool_control:
        bf += new_control / pool_control
    return bf


def assign_folds(treatments, n_folds: int, seed: Optional[int] = 0) -> pd.Series:
    """Fold id of every unit; each arm is shuffled and dealt round-robin so
    every fold gets its share of treated and control units."""
    if n_folds < 2:
        raise InputError(f"cross-fitting needs at least 2 folds, got {n_folds}")
    t = treatments if isinstance(treatments, pd.Series) else pd.Series(np.asarray(treatments))
    t = t.astype(int)
    rng = get_rng(seed)
    folds = pd.Series(0, index=t.index, name="fold", dtype=int)
    for arm in (1, 0):
        members = sorted(t.index[t == arm])
        if len(members) < 2:
            raise InputError(f"too few units to cross-fit: arm {arm} has {len(members)} units")
        order = rng.permutation(members)
        folds.loc[order] = np.arange(len(order)) % n_folds
    return folds


class OutcomeModel:
    """Ridge regression of outcome on one-hot covariates, treatment and an
    unpenalized intercept and treatment effect.

    Without folds the fit is scored on the units it was fit on. With folds
    every unit is predicted by the fit on the other folds and the error is the
    total out-of-fold squared residual. Errors are cached per covariate set.
    """

    def __init__(self, features: FeatureTable, outcomes, treatments, ridge_penalty: float = 0.1, folds=None):
        if ridge_penalty < 0:
            raise InputError(f"ridge penalty must be non-negative, got {ridge_penalty}")
        units = features.units
        self.y = _as_series(outcomes, units, "outcome").to_numpy(dtype=float)
        t = _as_series(treatments, units, "treatment").to_numpy()
        self.base = np.column_stack([np.ones(len(units)), t.astype(float)])
        self.blocks = {
            c: pd.get_dummies(features.data[c].astype(str), dtype=float).to_numpy()
            for c in features.columns
        }
        self.ridge_penalty = ridge_penalty
        self.folds = None if folds is None else _as_series(folds, units, "fold").to_numpy(dtype=int)
        self._cache: Dict[FrozenSet[str], float] = {}

    def design(self, active: Sequence[str]) -> Tuple[np.ndarray, int]:
        dummies = [self.blocks[c] for c in active]
        if not dummies:
            return self.base, 0
        block = np.hstack(dummies)
        return np.hstack([self.base, block]), block.shape[1]

    def _solve(self, X: np.ndarray, y: np.ndarray, n_dummies: int) -> np.ndarray:
        penalty = np.diag([0.0, 0.0] + [self.ridge_penalty] * n_dummies)
        try:
            return linalg.solve(X.T @ X + penalty, X.T @ y, assume_a="sym")
        except (linalg.LinAlgError, ValueError):
            return np.linalg.lstsq(X, y, rcond=None)[0]

    def error(self, active: Sequence[str]) -> float:
        key = frozenset(active)
        if key not in self._cache:
            self._cache[key] = self._score(sorted(key))
        return self._cache[key]

    def _score(self, active: List[str]) -> float:
        X, n_dummies = self.design(active)
        if self.folds is None:
            residual = self.y - X @ self._solve(X, self.y, n_dummies)
            return float(residual @ residual)
        total = 0.0
        for fold in np.unique(self.folds):
            held = self.folds == fold
            beta = self._solve(X[~held], self.y[~held], n_dummies)
            residual = self.y[held] - X[held] @ beta
            total += float(residual @ residual)
        return total


def pe_outcome(
    features: FeatureTable,
    outcomes,
    treatments,
    active: Sequence[str],
    ridge_penalty: float = 0.1,
    folds=None,
) -> float:
    """Outcome prediction error of the active covariates; see `OutcomeModel`"""
    return OutcomeModel(features, outcomes, treatments, ridge_penalty, folds).error(active)


class EdgeModel:
    """Bernoulli model of every unordered pair being an edge, with logit
    intercept + beta . (S(i) + S(j)) on the units' subgraph counts.

    The pair design is built once; `aic` fits any column subset by Newton/IRLS.
    """

    def __init__(self, graph: Graph, counts: pd.DataFrame, max_iter: int = 50):
        if counts.shape[0] != graph.n:
            raise InputError("census rows must match the graph's vertex count")
        rows, cols = np.triu_indices(graph.n, k=1)
        adjacency = graph.adjacency_matrix()
        self.y = adjacency[rows, cols]
        values = counts.to_numpy(dtype=float)
        self.pair_features = values[rows] + values[cols]
        self.columns = {c: k for k, c in enumerate(counts.columns)}
        self.max_iter = max_iter
        self._cache: Dict[FrozenSet[str], float] = {}

    @property
    def n_pairs(self) -> int:
        return len(self.y)

    def intercept_only_aic(self) -> float:
        m, total = self.y.sum(), len(self.y)
        if total == 0:
            return 2.0
        p = m / total
        loglik = xlogy(m, p) + xlogy(total - m, 1 - p)
        return float(2.0 - 2.0 * loglik)

    def aic(self, columns: Sequence[str]) -> float:
        key = frozenset(c for c in columns if c in self.columns)
        if key not in self._cache:
            self._cache[key] = self._fit(sorted(key, key=self.columns.get))
        return self._cache[key]

    def _fit(self, columns: List[str]) -> float:
        if not columns or self.n_pairs == 0:
            return self.intercept_only_aic()

        X = np.column_stack(
            [np.ones(self.n_pairs), self.pair_features[:, [self.columns[c] for c in columns]]]
        )
        y = self.y
        beta = np.zeros(X.shape[1])
        m, total = y.sum(), len(y)
        if 0 < m < total:
            beta[0] = np.log(m / (total - m))

        converged = False
        for _ in range(self.max_iter):
            mu = expit(X @ beta)
            w = mu * (1.0 - mu)
            hessian = (X * w[:, None]).T @ X + IRLS_JITTER * np.eye(X.shape[1])
            step = np.linalg.lstsq(hessian, X.T @ (y - mu), rcond=None)[0]
            beta = beta + step
            if np.max(np.abs(step)) < IRLS_TOL:
                converged = True
                break

        eta = X @ beta
        if not converged or np.max(np.abs(eta)) > SEPARATION_ETA:
            logger.warning(
                "Edge model on %d columns did not converge cleanly (possible separation); "
                "reporting the capped-iteration fit",
                len(columns),
            )
        loglik = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
        return 2.0 * X.shape[1] - 2.0 * loglik


def pe_network(graph: Graph, counts: pd.DataFrame, active: Sequence[str], max_iter: int = 50) -> float:
    """AIC of the edge logistic model on the active subgraph columns"""
    return EdgeModel(graph, counts, max_iter=max_iter).aic(active)


def _match_quality(config: MatchConfig, bf: float, pe_y: float, pe_g: float) -> float:
    sign = -1.0 if config.pe_g_sign == "reward-fit" else 1.0
    return config.c * bf - pe_y + sign * config.d * pe_g


def run_flame(
    features: FeatureTable,
    outcomes,
    treatments,
    graph: Optional[Graph] = None,
    census: Optional[pd.DataFrame] = None,
    config: Optional[MatchConfig] = None,
) -> MatchResult:
    config = config or MatchConfig()
    units = features.units
    if not units:
        raise InputError("feature table is empty")
    y = _as_series(outcomes, units, "outcome").astype(float)
    t = _as_series(treatments, units, "treatment").astype(int)
    if set(t) != {0, 1}:
        raise InputError(ERROR_MESSAGES["MISSING_ARM"])

    if config.cross_fit_folds:
        match_set, holdout = list(units), []
        folds = assign_folds(t, config.cross_fit_folds, config.seed)
        outcome_model = OutcomeModel(features, y, t, config.ridge_penalty, folds)
    else:
        match_set, holdout = split_holdout(features, y, t, config)
        outcome_model = OutcomeModel(
            features.subset(holdout), y.loc[holdout], t.loc[holdout], config.ridge_penalty
        )

    edge_model = None
    if config.use_network_fit and graph is not None and census is not None:
        edge_model = EdgeModel(graph, census, max_iter=config.max_irls_iter)

    def network_term(active: Sequence[str]) -> float:
        if edge_model is None:
            return 0.0
        return edge_model.aic([c for c in active if c in features.subgraph_columns])

    unmatched: Set[int] = set(match_set)
    active = list(features.columns)
    result = MatchResult(holdout=holdout, weighting=config.group_weighting)

    def commit(groups: List[MatchedGroup]) -> int:
        matched = [m.unit for g in groups for m in g.members]
        unmatched.difference_update(matched)
        result.groups.extend(groups)
        return len(matched)

    newly = commit(exact_match(features, active, unmatched, t, y, iteration=0))
    logger.info("Round 0 matched %d units on all %d covariates", newly, len(active))

    first_mq = None
    lowest_pe = outcome_model.error(active)
    iteration = 0
    while active:
        pool_t = sum(1 for u in unmatched if t.loc[u] == 1)
        pool_c = len(unmatched) - pool_t
        if pool_t == 0 or pool_c == 0:
            break

        iteration += 1
        best = None
        for candidate in sorted(active):
            reduced = [c for c in active if c != candidate]
            tentative = exact_match(features, reduced, unmatched, t, y, iteration=iteration)
            new_t = sum(g.n_treated for g in tentative)
            new_c = sum(g.size - g.n_treated for g in tentative)
            bf = balancing_factor(new_t, new_c, pool_t, pool_c)
            pe_y = outcome_model.error(reduced)
            pe_g = network_term(reduced)
            mq = _match_quality(config, bf, pe_y, pe_g)
            logger.debug(
                "round %d drop %s: BF=%.4f PE_Y=%.4f PE_G=%.4f MQ=%.4f",
                iteration, candidate, bf, pe_y, pe_g, mq,
            )
            if best is None or mq > best[0]:
                best = (mq, candidate, reduced, tentative, bf, pe_y, pe_g)

        mq, dropped, reduced, tentative, bf, pe_y, pe_g = best
        if config.stop_rule == "mq-drop" and first_mq is not None:
            if mq < first_mq - config.mq_drop_tolerance * abs(first_mq):
                logger.info("Stopping: match quality fell from %.4f to %.4f", first_mq, mq)
                break
        if config.stop_rule == "pe-rise" and pe_y > (1.0 + config.pe_rise_tolerance) * lowest_pe:
            logger.info("Stopping: outcome error rose from %.4f to %.4f", lowest_pe, pe_y)
            break
        if first_mq is None:
            first_mq = mq
        lowest_pe = min(lowest_pe, pe_y)

        active = reduced
        newly = commit(tentative)
        result.drop_log.append(DropRecord(iteration, dropped, bf, pe_y, pe_g, mq, newly))
        logger.info("Round %d dropped %s and matched %d units (MQ=%.4f)", iteration, dropped, newly, mq)

        if config.stop_rule == "all-treated-matched" and not any(t.loc[u] == 1 for u in unmatched):
            break

    result.retained = list(active)
    result.unmatched = sorted(unmatched)
    check_groups(features, result)
    if result.groups:
        result.ade = estimate_ade(result, config.group_weighting)
    else:
        logger.warning(ERROR_MESSAGES["NO_MATCHES"])
    return result


def check_groups(features: FeatureTable, result: MatchResult) -> None:
    """Raise if a group mixes covariate values on its signature or lacks an arm"""
    for number, group in enumerate(result.groups):
        if group.n_treated == 0 or group.n_treated == group.size:
            raise InternalError(f"matched group {number} is missing an arm")
        if not group.signature:
            continue
        rows = features.data.loc[[m.unit for m in group.members], list(group.signature)]
        if not (rows == pd.Series(group.signature)).to_numpy().all():
            raise InternalError(f"matched group {number} disagrees with its signature")


def estimate_ade(result: MatchResult, weighting: Optional[str] = None) -> float:
    """Weighted average of within-group differences in means; weights are group
    sizes, or treated counts with weighting='treated'."""
    if not result.groups:
        raise EstimationUndefinedError(ERROR_MESSAGES["NO_MATCHES"])
    weighting = weighting or result.weighting
    weights = np.array(
        [g.size if weighting == "size" else g.n_treated for g in result.groups], dtype=float
    )
    diffs = np.array([g.difference for g in result.groups])
    return float(weights @ diffs / weights.sum())
