import numpy as np
import pandas as pd
import pytest
from scipy.special import xlogy

from app.errors import EstimationUndefinedError, InputError, InternalError
from app.models.census import FeatureTable
from app.models.graph import Graph
from app.models.matching import GroupMember, MatchConfig, MatchedGroup, MatchResult
from app.modules.flame import (
    EdgeModel,
    OutcomeModel,
    _match_quality,
    assign_folds,
    balancing_factor,
    check_groups,
    estimate_ade,
    exact_match,
    pe_network,
    pe_outcome,
    run_flame,
    split_holdout,
)
from app.utils.constants import SUBGRAPH_KIND


def features(**columns) -> FeatureTable:
    frame = pd.DataFrame(columns)
    return FeatureTable(frame, {c: SUBGRAPH_KIND for c in frame.columns})


def group(treated, control, iteration=0):
    members = [GroupMember(k, True, y) for k, y in enumerate(treated)]
    members += [GroupMember(len(treated) + k, False, y) for k, y in enumerate(control)]
    return MatchedGroup({}, members, iteration)


def matchable_units(data: pd.DataFrame, columns, pool, t):
    """Units of the pool sharing their values on `columns` with a unit of the other arm"""
    buckets = {}
    for u in pool:
        buckets.setdefault(tuple(data.loc[u, c] for c in columns), []).append(u)
    found = set()
    for members in buckets.values():
        if len({t[u] for u in members}) == 2:
            found.update(members)
    return found


def ridge_error(data: pd.DataFrame, columns, y, t, penalty):
    blocks = [np.ones((len(y), 1)), np.asarray(t, dtype=float)[:, None]]
    for c in columns:
        values = data[c].to_numpy()
        blocks.append((values[:, None] == np.unique(values)[None, :]).astype(float))
    X = np.hstack(blocks)
    P = np.diag([0.0, 0.0] + [penalty] * (X.shape[1] - 2))
    beta = np.linalg.solve(X.T @ X + P, X.T @ y)
    residual = y - X @ beta
    return float(residual @ residual)


def brute_force_drops(data: pd.DataFrame, y, t, holdout, c, penalty):
    """Every round scores every single-covariate drop from scratch and keeps
    the first argmax"""
    y = np.asarray(y, dtype=float)
    held = data.loc[holdout]
    unmatched = set(data.index) - set(holdout)
    active = list(data.columns)
    unmatched -= matchable_units(data, active, unmatched, t)
    drops = []
    while active:
        pool_t = sum(1 for u in unmatched if t[u])
        pool_c = len(unmatched) - pool_t
        if pool_t == 0 or pool_c == 0:
            break
        scores = []
        for candidate in sorted(active):
            reduced = [col for col in active if col != candidate]
            newly = matchable_units(data, reduced, unmatched, t)
            new_t = sum(1 for u in newly if t[u])
            bf = new_t / pool_t + (len(newly) - new_t) / pool_c
            pe = ridge_error(held, reduced, y[holdout], [t[u] for u in holdout], penalty)
            scores.append((c * bf - pe, candidate, reduced, newly))
        mq, dropped, active, newly = max(scores, key=lambda score: score[0])
        unmatched -= newly
        drops.append((dropped, mq))
    return drops


class TestSplitHoldout:
    """Test the stratified holdout split"""

    def test_fraction_split_keeps_both_arms(self):
        """Test fraction split keeps both arms"""
        table = features(g=[0] * 40)
        t = [1, 0] * 20
        match_set, holdout = split_holdout(table, np.zeros(40), t, MatchConfig(holdout_fraction=0.3))
        assert (len(match_set), len(holdout)) == (28, 12)
        assert sum(t[u] for u in holdout) == 6
        assert set(match_set).isdisjoint(holdout)

    def test_zero_fraction_rejected(self):
        """Test zero fraction rejected"""
        with pytest.raises(InputError):
            split_holdout(features(g=[0] * 4), np.zeros(4), [1, 0, 1, 0], MatchConfig(holdout_fraction=0.0))

    def test_explicit_ids(self):
        """Test explicit ids"""
        config = MatchConfig(holdout_ids=[3, 0])
        match_set, holdout = split_holdout(features(g=[0] * 6), np.zeros(6), [1, 0, 1, 0, 1, 0], config)
        assert holdout == [0, 3]
        assert match_set == [1, 2, 4, 5]

    def test_same_seed_same_split(self):
        """Test same seed same split"""
        table = features(g=[0] * 20)
        t = [1, 0] * 10
        first = split_holdout(table, np.zeros(20), t, MatchConfig(seed=3))
        second = split_holdout(table, np.zeros(20), t, MatchConfig(seed=3))
        assert first == second

    def test_holdout_missing_an_arm(self):
        """Test holdout missing an arm"""
        with pytest.raises(InputError):
            split_holdout(features(g=[0] * 4), np.zeros(4), [1, 0, 1, 0], MatchConfig(holdout_ids=[0, 2]))


class TestAssignFolds:
    """Test the arm-stratified fold assignment"""

    def test_folds_balance_both_arms(self):
        """Test every fold gets the same share of each arm"""
        t = [1, 0] * 10
        folds = assign_folds(t, 5, seed=0)
        for fold in range(5):
            members = folds.index[folds == fold]
            assert sorted(t[u] for u in members) == [0, 0, 1, 1]

    def test_same_seed_same_folds(self):
        """Test fold assignment is reproducible under a seed"""
        t = [1, 0, 0] * 8
        assert assign_folds(t, 3, seed=4).equals(assign_folds(t, 3, seed=4))

    def test_single_fold_rejected(self):
        """Test cross-fitting with one fold"""
        with pytest.raises(InputError):
            assign_folds([1, 0, 1, 0], 1)

    def test_arm_too_small(self):
        """Test an arm with a single unit cannot be cross-fit"""
        with pytest.raises(InputError):
            assign_folds([1, 0, 0, 0], 2)

    def test_config_rejects_one_fold(self):
        """Test the matching config refuses a single fold"""
        with pytest.raises(ValueError):
            MatchConfig(cross_fit_folds=1)


class TestExactMatch:
    """Test grouping of unmatched units on the active covariates"""

    def test_identical_pair(self):
        """Test identical pair"""
        groups = exact_match(features(g=[1, 1]), ["g"], [0, 1], [1, 0], [4.0, 1.0])
        assert len(groups) == 1
        assert groups[0].size == 2
        assert groups[0].difference == 3.0
        assert groups[0].signature == {"g": 1}

    def test_all_treated_pool(self):
        """Test all treated pool"""
        assert exact_match(features(g=[1, 1]), ["g"], [0, 1], [1, 1]) == []

    def test_only_mixed_signatures_form_groups(self):
        """Test only mixed signatures form groups"""
        table = features(g=["A", "A", "A", "B"])
        groups = exact_match(table, ["g"], [0, 1, 2, 3], [1, 0, 0, 1])
        assert [g.signature for g in groups] == [{"g": "A"}]
        assert groups[0].treated_units == [0]
        assert groups[0].control_units == [1, 2]

    def test_matched_units_are_excluded(self):
        """Test matched units are excluded"""
        groups = exact_match(features(g=[1, 1, 1]), ["g"], [1, 2], [1, 0, 1])
        assert [m.unit for m in groups[0].members] == [1, 2]

    def test_empty_active_set_is_one_bucket(self):
        """Test empty active set is one bucket"""
        groups = exact_match(features(g=[1, 2, 3]), [], [0, 1, 2], [1, 0, 0])
        assert len(groups) == 1 and groups[0].size == 3


class TestBalancingFactor:
    """Test the matched share of each arm"""

    def test_partial(self):
        """Test partial"""
        assert balancing_factor(4, 6, 10, 10) == pytest.approx(1.0)

    def test_nothing_matched(self):
        """Test nothing matched"""
        assert balancing_factor(0, 0, 10, 10) == 0.0

    def test_everything_matched(self):
        """Test everything matched"""
        assert balancing_factor(10, 10, 10, 10) == 2.0


class TestOutcomeError:
    """Test the ridge prediction error on held-out units"""

    def test_constant_outcome(self):
        """Test constant outcome"""
        table = features(g=[0, 1, 0, 1])
        assert pe_outcome(table, [3.0] * 4, [1, 0, 0, 1], ["g"]) == pytest.approx(0.0, abs=1e-9)

    def test_outcome_equal_to_feature(self):
        """Test outcome equal to feature"""
        table = features(g=[0, 1, 0, 1, 1, 0])
        y = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0]
        assert pe_outcome(table, y, [1, 0, 0, 1, 0, 1], ["g"], ridge_penalty=1e-10) == pytest.approx(0.0, abs=1e-6)

    def test_pure_noise(self, rng):
        """Test pure noise"""
        n = 400
        table = features(g=[0] * n)
        y = rng.normal(size=n)
        t = rng.integers(0, 2, n)
        total = float(((y - y.mean()) ** 2).sum())
        assert pe_outcome(table, y, t, ["g"]) == pytest.approx(total, rel=0.1)

    def test_negative_penalty(self):
        """Test negative penalty"""
        with pytest.raises(InputError):
            pe_outcome(features(g=[0, 1]), [1.0, 2.0], [1, 0], ["g"], ridge_penalty=-1.0)

    def test_out_of_fold_error_exceeds_in_sample(self, rng):
        """Test out-of-fold error is never below the least-squares fit"""
        n = 40
        table = features(g=rng.integers(0, 3, n))
        y = rng.normal(size=n)
        t = [1, 0] * (n // 2)
        folds = assign_folds(t, 4, seed=0)
        in_sample = pe_outcome(table, y, t, ["g"], ridge_penalty=1e-10)
        assert pe_outcome(table, y, t, ["g"], ridge_penalty=1e-10, folds=folds) >= in_sample

    def test_singleton_category_is_not_fit_out_of_fold(self):
        """Test an outlier alone in its category is predicted by the other units"""
        table = features(g=[0] * 9 + [1])
        y = [0.0] * 9 + [100.0]
        t = [1, 0] * 5
        folds = assign_folds(t, 2, seed=0)
        assert pe_outcome(table, y, t, ["g"], ridge_penalty=1e-6) < 1.0
        assert pe_outcome(table, y, t, ["g"], ridge_penalty=1e-6, folds=folds) > 1000.0

    def test_error_ignores_covariate_order(self, rng):
        """Test the cached error depends on the covariate set only"""
        n = 30
        table = features(a=rng.integers(0, 3, n), b=rng.integers(0, 2, n))
        model = OutcomeModel(table, rng.normal(size=n), [1, 0] * (n // 2))
        assert model.error(["a", "b"]) == model.error(["b", "a"])


class TestNetworkError:
    """Test the edge logistic model AIC"""

    def test_intercept_only_closed_form(self, path4):
        """Test intercept only closed form"""
        counts = pd.DataFrame({"g": [1, 2, 2, 1]})
        m, total = 3, 6
        p = m / total
        expected = 2 - 2 * (xlogy(m, p) + xlogy(total - m, 1 - p))
        assert pe_network(path4, counts, []) == pytest.approx(expected)

    def test_newton_fit_matches_intercept_only_with_no_columns(self, cycle4):
        """Test newton fit matches intercept only with no columns"""
        model = EdgeModel(cycle4, pd.DataFrame({"g": [2, 2, 2, 2]}))
        assert model.aic([]) == pytest.approx(model.intercept_only_aic())

    def test_informative_column_lowers_aic(self, rng):
        """Test informative column lowers AIC"""
        n = 40
        hub = (np.arange(n) < 10).astype(int)
        edges = [(u, v) for u in range(n) for v in range(u + 1, n)
                 if rng.random() < (0.6 if hub[u] and hub[v] else 0.03)]
        g = Graph(n, edges)
        counts = pd.DataFrame({"hub": hub * 5})
        assert pe_network(g, counts, ["hub"]) < pe_network(g, counts, [])

    def test_unknown_columns_ignored(self, path4):
        """Test unknown columns ignored"""
        counts = pd.DataFrame({"g": [1, 2, 2, 1]})
        model = EdgeModel(path4, counts)
        assert model.aic(["age"]) == model.aic([])

    def test_row_count_checked(self, path4):
        """Test row count checked"""
        with pytest.raises(InputError):
            EdgeModel(path4, pd.DataFrame({"g": [1, 2]}))

    def test_sign_conventions(self):
        """Test sign conventions"""
        assert _match_quality(MatchConfig(c=1, d=1), 2.0, 3.0, 10.0) == pytest.approx(-11.0)
        assert _match_quality(MatchConfig(c=1, d=1, pe_g_sign="literal"), 2.0, 3.0, 10.0) == pytest.approx(9.0)


class TestRunFlame:
    """Test the greedy matching loop"""

    def test_identical_pairs_match_in_round_zero(self):
        """Test identical pairs match in round zero"""
        table = features(g=["a", "a", "b", "b", "c", "c"])
        y = [5.0, 1.0, 9.0, 2.0, 0.0, 0.0]
        t = [1, 0, 1, 0, 1, 0]
        result = run_flame(table, y, t, config=MatchConfig(holdout_ids=[4, 5]))
        assert result.drop_log == []
        assert len(result.groups) == 2
        assert result.ade == pytest.approx((4.0 + 7.0) / 2)
        assert result.unmatched == []

    def test_noise_covariate_dropped_first(self):
        """Test noise covariate dropped first"""
        signal = [0, 0, 0, 0, 1, 1, 1, 1] * 2
        t = [1, 0] * 8
        noise = list(range(8)) + [0] * 8
        y = [10.0 * s + 5.0 * z for s, z in zip(signal, t)]
        table = features(noise=noise, signal=signal)
        result = run_flame(table, y, t, config=MatchConfig(holdout_ids=list(range(8, 16))))
        assert [record.dropped for record in result.drop_log] == ["noise"]
        assert result.drop_log[0].newly_matched == 8
        assert result.drop_log[0].bf == pytest.approx(2.0)
        assert result.ade == pytest.approx(5.0)
        assert result.importance_order == ["signal", "noise"]

    def test_exhausted_covariates_match_everyone(self):
        """Test exhausted covariates match everyone"""
        table = features(x=[0, 1, 2, 3, 4, 5])
        y = [3.0, 1.0, 5.0, 1.0, 0.0, 0.0]
        t = [1, 0, 1, 0, 1, 0]
        result = run_flame(table, y, t, config=MatchConfig(holdout_ids=[4, 5]))
        assert len(result.groups) == 1
        assert result.groups[0].size == 4
        assert result.groups[0].iteration == 1
        assert result.ade == pytest.approx(3.0)
        assert result.retained == []

    def test_groups_are_exact_on_active_covariates(self, rng):
        """Test groups are exact on active covariates"""
        n = 60
        table = features(a=rng.integers(0, 3, n), b=rng.integers(0, 3, n), c=rng.integers(0, 2, n))
        t = np.array([1, 0] * (n // 2))
        result = run_flame(table, rng.normal(size=n), t, config=MatchConfig(seed=1))
        matched = [m.unit for g in result.groups for m in g.members]
        assert len(matched) == len(set(matched))
        assert set(matched).isdisjoint(result.holdout)
        for g in result.groups:
            rows = table.data.loc[[m.unit for m in g.members], list(g.signature)]
            assert (rows.nunique() <= 1).all()
            assert g.n_treated >= 1 and g.size - g.n_treated >= 1

    def test_network_term_runs_with_census(self, rng):
        """Test network term runs with census"""
        n = 30
        edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.1]
        g = Graph(n, edges)
        counts = pd.DataFrame({"g1": g.degrees(), "g2": rng.integers(0, 3, n)})
        table = features(g1=g.degrees(), g2=counts["g2"])
        t = np.array([1, 0] * (n // 2))
        result = run_flame(table, rng.normal(size=n), t, g, counts, MatchConfig(seed=2))
        assert all(np.isfinite(record.pe_g) for record in result.drop_log)

    def test_all_treated_matched_stop_rule(self):
        """Test all treated matched stop rule"""
        table = features(x=[0, 1, 2, 3, 4, 5], w=[0, 0, 1, 1, 0, 0])
        t = [1, 0, 1, 0, 1, 0]
        config = MatchConfig(holdout_ids=[4, 5], stop_rule="all-treated-matched")
        result = run_flame(table, [1.0] * 6, t, config=config)
        assert not any(t[u] for u in result.unmatched)
        assert len(result.drop_log) == 1

    def test_single_arm_rejected(self):
        """Test single arm rejected"""
        with pytest.raises(InputError):
            run_flame(features(g=[0, 0]), [1.0, 2.0], [1, 1])

    def test_cross_fit_matches_every_unit(self, rng):
        """Test cross-fitting leaves no unit out of the matching set"""
        n = 40
        table = features(a=rng.integers(0, 3, n), b=rng.integers(0, 2, n))
        t = np.array([1, 0] * (n // 2))
        result = run_flame(table, rng.normal(size=n), t, config=MatchConfig(cross_fit_folds=4))
        assert result.holdout == []
        assert sorted(result.matched_units() + result.unmatched) == list(range(n))
        assert len(result.matched_units()) > n // 2

    def test_outcome_error_rise_stops_matching(self):
        """Test the pe-rise rule keeps units whose only matches differ on outcome-relevant covariates"""
        a = [0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1]
        b = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 0, 0]
        t = [1, 0, 1, 0, 1, 0, 1, 0, 1, 1, 0, 0]
        y = [10.0 * x + 10.0 * w + 5.0 * z for x, w, z in zip(a, b, t)]
        table = features(a=a, b=b)
        config = MatchConfig(cross_fit_folds=2, stop_rule="pe-rise")
        result = run_flame(table, y, t, config=config)
        assert result.drop_log == []
        assert result.unmatched == [8, 9, 10, 11]
        assert result.ade == pytest.approx(5.0)

        loose = run_flame(table, y, t, config=config.model_copy(update={"pe_rise_tolerance": 1e9}))
        assert loose.unmatched == []


class TestEstimateAde:
    """Test aggregation of group differences"""

    def test_size_weighted(self):
        """Test size weighted"""
        result = MatchResult(groups=[group([3.0, 3.0], [1.0, 1.0]), group([5.0], [0.0])])
        assert estimate_ade(result) == pytest.approx(3.0)

    def test_treated_weighted(self):
        """Test treated weighted"""
        result = MatchResult(groups=[group([3.0, 3.0], [1.0]), group([5.0], [0.0, 0.0, 0.0])])
        assert estimate_ade(result, "treated") == pytest.approx((2 * 2.0 + 1 * 5.0) / 3)

    def test_single_group(self):
        """Test single group"""
        assert estimate_ade(MatchResult(groups=[group([4.0, 6.0], [1.0])])) == pytest.approx(4.0)

    def test_equal_differences(self):
        """Test equal differences"""
        result = MatchResult(groups=[group([7.0], [2.0]), group([8.0, 8.0], [3.0]), group([5.0], [0.0, 0.0])])
        assert estimate_ade(result) == pytest.approx(5.0)

    def test_no_groups(self):
        """Test no groups"""
        with pytest.raises(EstimationUndefinedError):
            estimate_ade(MatchResult())


class TestCheckGroups:
    """Test the exact-match soundness check"""

    def test_sound_groups_pass(self):
        """Test groups agreeing on their signature are accepted"""
        table = features(g=[1, 1, 2, 2])
        result = MatchResult(groups=exact_match(table, ["g"], [0, 1, 2, 3], [1, 0, 1, 0]))
        check_groups(table, result)

    def test_signature_mismatch(self):
        """Test a member whose value differs from the signature"""
        table = features(g=[1, 2])
        members = [GroupMember(0, True, 1.0), GroupMember(1, False, 0.0)]
        with pytest.raises(InternalError):
            check_groups(table, MatchResult(groups=[MatchedGroup({"g": 1}, members, 0)]))

    def test_single_arm_group(self):
        """Test a group without a control unit"""
        table = features(g=[1, 1])
        members = [GroupMember(0, True, 1.0), GroupMember(1, True, 0.0)]
        with pytest.raises(InternalError):
            check_groups(table, MatchResult(groups=[MatchedGroup({"g": 1}, members, 0)]))


class TestBruteForceAgreement:
    """Test the greedy loop against a from-scratch search of every drop"""

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5])
    def test_drop_sequence_matches_brute_force(self, seed):
        """Test every round drops the covariate with the highest match quality"""
        rng = np.random.default_rng(seed)
        n = 12
        table = features(**{name: rng.integers(0, 3, n) for name in ("a", "b", "c", "d")})
        t = [1, 0] * (n // 2)
        y = rng.normal(size=n) + 3.0 * table.data["a"].to_numpy()
        holdout = [0, 1, 2, 3]
        config = MatchConfig(c=1.0, ridge_penalty=0.1, holdout_ids=holdout)
        result = run_flame(table, y, t, config=config)

        expected = brute_force_drops(table.data, y, t, holdout, config.c, config.ridge_penalty)
        assert [record.dropped for record in result.drop_log] == [name for name, _ in expected]
        assert [record.mq for record in result.drop_log] == pytest.approx([mq for _, mq in expected])


class TestNoInterferenceBias:
    """Test matching without interference over many randomizations"""

    def test_mean_error_within_monte_carlo_error(self):
        """Test the mean estimation error is within 3 standard errors of zero"""
        n, reps = 30, 500
        errors = []
        for r in range(reps):
            rng = np.random.default_rng(1000 + r)
            table = features(a=rng.integers(0, 3, n), b=rng.integers(0, 2, n))
            t = np.zeros(n, dtype=int)
            t[rng.choice(n, size=n // 2, replace=False)] = 1
            tau = rng.normal(5.0, 1.0, n)
            y = t * tau + rng.normal(size=n)
            result = run_flame(table, y, t, config=MatchConfig(seed=r))
            errors.append(result.ade - tau.mean())
        errors = np.array(errors)
        se = errors.std(ddof=1) / np.sqrt(reps)
        assert abs(errors.mean()) < 3 * se
