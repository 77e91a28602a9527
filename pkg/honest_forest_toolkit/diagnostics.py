import logging
import math

from collections import namedtuple
from enum import Enum

import numpy as np

from .estimators import LeafTable
from .splitters import NODE_SIZE_KINDS, ScheduleKind, grow_centered
from .streams import make_generator
from .weights import WeightKind


LOG = logging.getLogger()

AssumptionTrace = namedtuple('AssumptionTrace', [
    'n', 'side_lengths', 'leaf_mass', 'balance_fractions', 'min_volume', 'sup_side_lengths',
    'sup_balance_fractions', 'depth', 'per_coord_depth',
])

RegularityAudit = namedtuple('RegularityAudit', [
    'n_leaves', 'window_leaves', 'window_fraction', 'depth_bound', 'node_size_violations',
    'depth_violations', 'realized_alpha', 'balance_violations', 'realized_balance_violations',
    'j_balance_violations',
])

RecursionReport = namedtuple('RecursionReport', ['g1', 'limit', 'zero_prob_limit'])

ProbeResult = namedtuple('ProbeResult', [
    'mode', 'n', 'log_terms', 'log_partial_sums', 'horizon_log_n', 'horizon_log_terms',
    'final_log_term', 'horizon_final_log_term', 'verdict',
])

IntervalViolation = namedtuple('IntervalViolation', ['leaf', 'coordinate', 'probability',
                                                     'lower_bound', 'upper_bound'])

EMPIRICAL_MAX_DEPTH = 16
PROBE_MAX_N = 10 ** 7
PROBE_HORIZON = 1e300
PROBE_DECAY_LEVEL = 1e-10
PROBE_DELTAS = (1e-3, 1e-2, 1e-1, 1.0)

# comparisons of products of slab fractions
_RELATIVE_SLACK = 1e-12


class ProbeMode(Enum):
    WEAK_CONDITION = 'weak'
    STRONG_PARTIAL_SUM = 'strong'
    BOOTSTRAP_PARTIAL_SUM = 'bootstrap'
    DELTA_SERIES = 'delta'

    @property
    def is_partial_sum(self):
        return self is not ProbeMode.WEAK_CONDITION


def trace_assumptions(tree, i_sample, x, weights=None, mean_w=1.0, leaf_table=None):
    """
    Measure the splitting-rule quantities at one query point.

    Leaf mass is n_I E[W_1] lambda(L) and the balance fractions divide the
    weighted slab counts by n_I E[W_1]. The sup and min fields scan every leaf.
    """
    table = leaf_table or LeafTable(tree, i_sample, weights, mean_w)
    node = tree.leaf_node(x)
    counts = tree.counts[node]
    return AssumptionTrace(
        n=i_sample.n,
        side_lengths=tree.upper[node] - tree.lower[node],
        leaf_mass=i_sample.n * mean_w * table.volume[node],
        balance_fractions=table.balance_fractions(node),
        min_volume=float(table.volume[tree.leaves].min()),
        sup_side_lengths=tree.leaf_side_lengths().max(axis=0),
        sup_balance_fractions=table.sup_balance(),
        depth=int(counts.sum()),
        per_coord_depth=counts.copy(),
    )


def _realized_alpha(tree, table):
    alpha = np.full(tree.d, 0.5)
    split_on = np.zeros(tree.d, dtype=bool)
    for node in np.flatnonzero(tree.feature >= 0):
        j = tree.feature[node]
        parent = table.interval_mass(j, tree.lower[node, j], tree.upper[node, j])
        if parent <= 0.0:
            continue
        left = table.interval_mass(j, tree.lower[node, j], tree.threshold[node])
        alpha[j] = min(alpha[j], min(left, parent - left) / parent)
        split_on[j] = True
    return np.where(split_on, alpha, 0.0)


def _balance_violations(tree, table, alpha):
    violations = []
    n_i = table.sample.n
    for leaf in tree.leaves:
        fractions = table.per_coordinate_in_interval(leaf) / n_i
        bounds = (1.0 - alpha) ** tree.counts[leaf]
        for j in np.flatnonzero(fractions > bounds * (1.0 + _RELATIVE_SLACK)):
            violations.append((int(leaf), int(j)))
    return violations


def regularity_audit(tree, i_sample, alpha, k_n):
    """
    Check the (alpha, k_n)-regularity consequences on the prediction set.

    Leaves holding between k_n and 2 k_n - 1 prediction-set points must be at
    least log(n_I / (2 k_n - 1)) / log(1 / alpha) deep, and every slab fraction
    N_L^j / n_I must stay below (1 - alpha_j)^{s_j}. The slab bound is checked
    against the configured alpha and against the realized per-coordinate
    worst-case slab balance.
    """
    if not 0.0 < alpha <= 0.5:
        raise ValueError(f'alpha must lie in (0, 1/2], got {alpha}')
    if k_n < 1:
        raise ValueError(f'k_n must be at least 1, got {k_n}')

    table = LeafTable(tree, i_sample)
    n_i = i_sample.n
    depth_bound = math.log(n_i / (2 * k_n - 1)) / math.log(1.0 / alpha)

    node_size_violations = []
    depth_violations = []
    for leaf in tree.leaves:
        n_in_leaf = table.mass[leaf]
        if not k_n <= n_in_leaf <= 2 * k_n - 1:
            node_size_violations.append(int(leaf))
        elif tree.depth[leaf] < depth_bound:
            depth_violations.append(int(leaf))

    realized = _realized_alpha(tree, table)

    j_balance_violations = []
    if tree.node_mass is not None:
        for node in np.flatnonzero(tree.feature >= 0):
            floor = alpha * tree.node_mass[node] - tree.mass_slack
            children = (tree.node_mass[tree.left[node]], tree.node_mass[tree.right[node]])
            if min(children) < floor:
                j_balance_violations.append(int(node))

    n_leaves = tree.n_leaves
    window = n_leaves - len(node_size_violations)
    return RegularityAudit(
        n_leaves=n_leaves,
        window_leaves=window,
        window_fraction=window / n_leaves,
        depth_bound=depth_bound,
        node_size_violations=node_size_violations,
        depth_violations=depth_violations,
        realized_alpha=realized,
        balance_violations=_balance_violations(tree, table, np.full(tree.d, alpha)),
        realized_balance_violations=_balance_violations(tree, table, realized),
        j_balance_violations=j_balance_violations,
    )


def min_split_probability(p, depth, m=1):
    """
    G_depth(m): probability that every leaf of a centered tree of the given
    depth carries at least m splits on a feature chosen with probability p.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f'p must lie in (0, 1], got {p}')
    if depth < 0 or m < 0:
        raise ValueError(f'depth and m must be non-negative, got depth={depth}, m={m}')

    # g[k] holds G(k) for k = 0..m at the current depth
    g = np.zeros(m + 1)
    g[0] = 1.0
    for _ in range(depth):
        shifted = np.concatenate(([1.0], g[:-1]))
        g = p * shifted ** 2 + (1.0 - p) * g ** 2
        g[0] = 1.0
    return float(g[m])


def centered_min_split_recursion(p, depth):
    if not 0.0 < p < 1.0:
        raise ValueError(f'p must lie in (0, 1), got {p}')
    if depth < 1:
        raise ValueError(f'depth must be at least 1, got {depth}')

    g1 = min_split_probability(p, depth, 1)
    if p < 0.5:
        return RecursionReport(g1, p / (1.0 - p), (1.0 - 2.0 * p) / (1.0 - p))
    return RecursionReport(g1, 1.0, 0.0)


def empirical_min_split(p, depth, reps, seed):
    """Fraction of centered trees with a leaf that never splits on the tracked feature."""
    if depth > EMPIRICAL_MAX_DEPTH:
        raise ValueError(f'depth {depth} exceeds {EMPIRICAL_MAX_DEPTH}, too many leaves to enumerate')
    if not 0.0 < p <= 1.0:
        raise ValueError(f'p must lie in (0, 1], got {p}')
    if reps < 1:
        raise ValueError(f'reps must be at least 1, got {reps}')

    probs = (1.0,) if p == 1.0 else (p, 1.0 - p)
    rng = make_generator(seed)
    hits = 0
    for _ in range(reps):
        tree = grow_centered(len(probs), probs, depth, rng)
        if tree.counts[tree.leaves, 0].min() == 0:
            hits += 1
    return hits / reps


def _log_terms(mode, log_n, log_k, d, mean_weight, delta):
    if mode is ProbeMode.DELTA_SERIES:
        return -delta * np.exp(log_k)
    # k^2 / n computed in log space so the horizon never overflows
    ratio = np.exp(2.0 * log_k - log_n)
    if mode is ProbeMode.BOOTSTRAP_PARTIAL_SUM:
        weight = mean_weight(np.exp(log_n)) if callable(mean_weight) else mean_weight
        return 4.0 * d * log_n - ratio / (8.0 * weight)
    return 4.0 * d * log_n - ratio / 2.0


def _tail_decays(log_n, log_terms, partial_sum):
    tail = log_terms[3 * log_terms.size // 4:]
    decreasing = bool(np.all(np.diff(tail) < 0.0))
    small = log_terms[-1] < math.log(PROBE_DECAY_LEVEL)
    if not partial_sum:
        return decreasing and small
    # terms below 1/n^2 along the tail leave a convergent remainder
    summable = bool(np.all(tail + 2.0 * log_n[3 * log_n.size // 4:] < 0.0))
    return decreasing and small and summable


def summability_probe(schedule, d, n_max, mode, mean_weight=None, delta=None, points=200,
                      horizon_points=400):
    """
    Probe the summability conditions on a node-size schedule.

    Terms and partial sums are exact over 2 <= n <= n_max. The verdict also
    follows the continuous schedule on a log-spaced horizon up to n = 1e300,
    because several admissible schedules only start to decay far beyond any
    n_max that fits in memory. This is numerical evidence, not proof.
    """
    if n_max < 2:
        raise ValueError(f'n_max must be at least 2, got {n_max}')
    if n_max > PROBE_MAX_N:
        raise ValueError(f'n_max {n_max} exceeds {PROBE_MAX_N}; the horizon covers larger n')
    if schedule.kind not in NODE_SIZE_KINDS:
        raise ValueError(f'summability probes need a node-size schedule, got {schedule.kind.value}')
    if mode is ProbeMode.DELTA_SERIES and (delta is None or not delta > 0.0):
        raise ValueError(f'delta mode needs delta > 0, got {delta}')
    if mode is ProbeMode.BOOTSTRAP_PARTIAL_SUM:
        mean_weight = 1.0 if mean_weight is None else mean_weight
        if not callable(mean_weight) and not mean_weight > 0.0:
            raise ValueError(f'mean_weight must be positive, got {mean_weight}')

    n = np.arange(2, int(n_max) + 1, dtype=float)
    log_n = np.log(n)
    log_k = np.log(schedule.evaluate_array(n).astype(float))
    log_terms = _log_terms(mode, log_n, log_k, d, mean_weight, delta)
    log_partial = np.logaddexp.accumulate(log_terms)

    horizon_log_n = np.linspace(math.log(n_max), math.log(PROBE_HORIZON), horizon_points)
    horizon_terms = _log_terms(mode, horizon_log_n, schedule.log_value(horizon_log_n), d,
                               mean_weight, delta)

    decays = _tail_decays(horizon_log_n, horizon_terms, mode.is_partial_sum)
    if mode.is_partial_sum:
        verdict = 'plateaus' if decays else 'does not plateau'
    else:
        verdict = 'decays' if decays else 'does not decay'

    keep = np.unique(np.geomspace(1, n.size, num=min(points, n.size)).astype(int) - 1)
    LOG.info(f'{mode.value} probe of {schedule!r} up to n={int(n_max)}: {verdict}')
    return ProbeResult(
        mode=mode,
        n=n[keep].astype(np.int64),
        log_terms=log_terms[keep],
        log_partial_sums=log_partial[keep],
        horizon_log_n=horizon_log_n,
        horizon_log_terms=horizon_terms,
        final_log_term=float(log_terms[-1]),
        horizon_final_log_term=float(horizon_terms[-1]),
        verdict=verdict,
    )


def delta_series_probes(schedule, n_max, deltas=PROBE_DELTAS):
    return {delta: summability_probe(schedule, 1, n_max, ProbeMode.DELTA_SERIES, delta=delta)
            for delta in deltas}


def schedule_admissibility(splitter, i_scheme=None):
    """List the ways a splitter and bootstrap scheme miss the known consistency conditions."""
    violations = []
    schedule = splitter.schedule
    kind, value = schedule.kind, schedule.param

    if kind is ScheduleKind.POLY_NODE_SIZE and not 0.5 < value < 1.0:
        violations.append(f'node size exponent beta={value:g} is outside (1/2, 1)')
    elif kind is ScheduleKind.SQRT_LOG_NODE_SIZE and not value > 1.0:
        violations.append(f'sqrt-log node size needs beta > 1, got {value:g}')
    elif kind is ScheduleKind.LOG_DEPTH and not value > 0.0:
        violations.append(f'log depth needs eps > 0, got {value:g}')
    elif kind is ScheduleKind.LOG2_POWER_DEPTH and not 0.0 < value < 1.0:
        violations.append(f'log2 power depth needs beta in (0, 1), got {value:g}')
    elif kind is ScheduleKind.CONSTANT:
        violations.append('a constant schedule never grows with n')

    if i_scheme is None:
        return violations

    beta = value if kind is ScheduleKind.POLY_NODE_SIZE else None
    if i_scheme.kind is WeightKind.WILD:
        if beta is not None and not 0.75 < beta < 1.0:
            violations.append(f'wild weights need beta in (3/4, 1), got {beta:g}')
        return violations

    m_schedule = i_scheme.m_schedule
    if m_schedule.kind is ScheduleKind.POLY_SUBSAMPLE:
        gamma = m_schedule.param
        if not 0.5 < gamma < 1.0:
            violations.append(f'subsample exponent gamma={gamma:g} is outside (1/2, 1)')
        if beta is not None and not gamma < 2.0 * beta - 0.5:
            violations.append(f'subsample exponent gamma={gamma:g} must stay below '
                              f'2 beta - 1/2 = {2.0 * beta - 0.5:g}')
    return violations


def interval_probability_check(tree, truth):
    """Check eps (b - a) <= P(a < X_j <= b) <= C (b - a) on every leaf side."""
    low, high = truth.density_bounds(tree.d)
    violations = []
    for leaf in tree.leaves:
        for j in range(tree.d):
            a, b = tree.lower[leaf, j], tree.upper[leaf, j]
            probability = truth.density.interval_probability(a, b)
            lower_bound = low * (b - a)
            upper_bound = high * (b - a)
            if (probability < lower_bound * (1.0 - _RELATIVE_SLACK)
                    or probability > upper_bound * (1.0 + _RELATIVE_SLACK)):
                violations.append(IntervalViolation(int(leaf), j, probability, lower_bound, upper_bound))
    return violations


def sample_branch_leaf(tree, rng):
    rng = make_generator(rng)
    node = 0
    while not tree.is_leaf(node):
        node = tree.left[node] if rng.random() < 0.5 else tree.right[node]
    return int(node)


def branch_side_lengths(tree, rng):
    leaf = sample_branch_leaf(tree, rng)
    return tree.upper[leaf] - tree.lower[leaf]


def fixed_point_side_lengths(tree, x):
    node = tree.leaf_node(x)
    return tree.upper[node] - tree.lower[node]
