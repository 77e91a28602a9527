import logging
import math

from enum import Enum

import numpy as np

from .geometry import LEAF, Tree, TreeBuilder
from .streams import make_generator


LOG = logging.getLogger()

_SNAP_TOLERANCE = 1e-9


class ScheduleKind(Enum):
    POLY_NODE_SIZE = 'poly_node_size'
    SQRT_LOG_NODE_SIZE = 'sqrt_log_node_size'
    LOG_DEPTH = 'log_depth'
    LOG2_POWER_DEPTH = 'log2_power_depth'
    POLY_SUBSAMPLE = 'poly_subsample'
    CONSTANT = 'constant'
    PROPORTIONAL = 'proportional'


SCHEDULE_PARAMETERS = {
    ScheduleKind.POLY_NODE_SIZE: 'beta',
    ScheduleKind.SQRT_LOG_NODE_SIZE: 'beta',
    ScheduleKind.LOG_DEPTH: 'eps',
    ScheduleKind.LOG2_POWER_DEPTH: 'beta',
    ScheduleKind.POLY_SUBSAMPLE: 'gamma',
    ScheduleKind.CONSTANT: 'value',
    ScheduleKind.PROPORTIONAL: 'fraction',
}

SCHEDULE_SHORT_NAMES = {
    'poly': ScheduleKind.POLY_NODE_SIZE,
    'sqrtlog': ScheduleKind.SQRT_LOG_NODE_SIZE,
    'logdepth': ScheduleKind.LOG_DEPTH,
    'log2power': ScheduleKind.LOG2_POWER_DEPTH,
    'subsample': ScheduleKind.POLY_SUBSAMPLE,
    'const': ScheduleKind.CONSTANT,
    'prop': ScheduleKind.PROPORTIONAL,
}

NODE_SIZE_KINDS = (ScheduleKind.POLY_NODE_SIZE, ScheduleKind.SQRT_LOG_NODE_SIZE,
                   ScheduleKind.POLY_SUBSAMPLE, ScheduleKind.CONSTANT, ScheduleKind.PROPORTIONAL)


def snap_ceil(values):
    values = np.asarray(values, dtype=float)
    nearest = np.round(values)
    close = np.abs(values - nearest) <= _SNAP_TOLERANCE * np.maximum(1.0, np.abs(values))
    return np.where(close, nearest, np.ceil(values)).astype(np.int64)


def snap_floor(values):
    values = np.asarray(values, dtype=float)
    nearest = np.round(values)
    close = np.abs(values - nearest) <= _SNAP_TOLERANCE * np.maximum(1.0, np.abs(values))
    return np.where(close, nearest, np.floor(values)).astype(np.int64)


class Schedule:
    """
    Sample-size schedule for node sizes k_n, depths s_n or subsample sizes m_n.

    Ceilings and floors snap to the nearest integer when the raw value is
    within floating-point noise of it, so ceil(log2(4096^(1/3))) is 4.
    """
    def __init__(self, kind, param):
        self.kind = kind
        self.param = float(param)
        self._check()

    def _check(self):
        kind, value = self.kind, self.param
        name = SCHEDULE_PARAMETERS[kind]
        valid = {
            ScheduleKind.POLY_NODE_SIZE: 0.0 < value <= 1.0,
            ScheduleKind.SQRT_LOG_NODE_SIZE: value >= 0.0,
            ScheduleKind.LOG_DEPTH: value > 0.0,
            ScheduleKind.LOG2_POWER_DEPTH: 0.0 <= value < 1.0,
            ScheduleKind.POLY_SUBSAMPLE: 0.0 < value <= 1.0,
            ScheduleKind.CONSTANT: value >= 0.0 and value == int(value),
            ScheduleKind.PROPORTIONAL: value > 0.0,
        }[kind]
        if not valid:
            raise ValueError(f'{name}={value} is out of range for a {kind.value} schedule')

    @classmethod
    def from_dict(cls, data):
        try:
            kind = ScheduleKind(data['kind'])
        except KeyError:
            raise ValueError('schedule needs a "kind"')
        except ValueError:
            choices = ', '.join(kind.value for kind in ScheduleKind)
            raise ValueError(f'unknown schedule kind "{data["kind"]}", expected one of: {choices}')

        name = SCHEDULE_PARAMETERS[kind]
        if name not in data:
            raise ValueError(f'{kind.value} schedule needs "{name}"')
        return cls(kind, data[name])

    @classmethod
    def parse(cls, text):
        """Parse the compact form used on the command line, e.g. 'poly:0.6'."""
        name, _, value = text.partition(':')
        if name not in SCHEDULE_SHORT_NAMES or not value:
            choices = ', '.join(SCHEDULE_SHORT_NAMES)
            raise ValueError(f'cannot parse schedule "{text}", expected <name>:<value> with name in: {choices}')
        try:
            param = float(value)
        except ValueError:
            raise ValueError(f'schedule parameter "{value}" is not a number')
        return cls(SCHEDULE_SHORT_NAMES[name], param)

    def to_dict(self):
        param = int(self.param) if self.kind is ScheduleKind.CONSTANT else self.param
        return {'kind': self.kind.value, SCHEDULE_PARAMETERS[self.kind]: param}

    def evaluate_array(self, n):
        n = np.asarray(n, dtype=float)
        if np.any(n < 2):
            raise ValueError('schedules are defined for n >= 2')

        kind, value = self.kind, self.param
        if kind is ScheduleKind.POLY_NODE_SIZE or kind is ScheduleKind.POLY_SUBSAMPLE:
            return snap_ceil(n ** value)
        if kind is ScheduleKind.SQRT_LOG_NODE_SIZE:
            return snap_ceil(np.sqrt(n * np.log(n) ** value))
        if kind is ScheduleKind.LOG_DEPTH:
            return snap_floor(np.log(n) / (1.0 + value))
        if kind is ScheduleKind.LOG2_POWER_DEPTH:
            return snap_ceil((1.0 - value) * np.log2(n))
        if kind is ScheduleKind.PROPORTIONAL:
            return snap_ceil(value * n)
        return np.full(n.shape, int(value), dtype=np.int64)

    def evaluate(self, n):
        return int(self.evaluate_array(n))

    def log_value(self, log_n):
        """Continuous log k_n as a function of log n, for horizons beyond float range of n."""
        log_n = np.asarray(log_n, dtype=float)
        kind, value = self.kind, self.param
        if kind is ScheduleKind.POLY_NODE_SIZE or kind is ScheduleKind.POLY_SUBSAMPLE:
            return value * log_n
        if kind is ScheduleKind.SQRT_LOG_NODE_SIZE:
            return 0.5 * (log_n + value * np.log(log_n))
        if kind is ScheduleKind.PROPORTIONAL:
            return math.log(value) + log_n
        if kind is ScheduleKind.CONSTANT:
            return np.full(log_n.shape, math.log(value) if value > 0 else -np.inf)
        raise ValueError(f'{kind.value} is a depth schedule and has no node-size growth')

    def __repr__(self):
        return f'Schedule({self.kind.value}, {SCHEDULE_PARAMETERS[self.kind]}={self.param:g})'


def evaluate_schedule(schedule, n):
    return schedule.evaluate(n)


class SplitterKind(Enum):
    UNIFORM = 'uniform'
    CENTERED = 'centered'
    MODIFIED_CENTERED = 'modified_centered'
    REGULAR_ADAPTIVE = 'regular_adaptive'


class SplitterConfig:
    def __init__(self, kind, schedule, feature_probs=None, rotation_periods=None, alpha=None,
                 feature_floor=None):
        self.kind = kind
        self.schedule = schedule
        self.feature_probs = None if feature_probs is None else np.asarray(feature_probs, dtype=float)
        self.rotation_periods = None if rotation_periods is None else tuple(int(N) for N in rotation_periods)
        self.alpha = None if alpha is None else float(alpha)
        self.feature_floor = None if feature_floor is None else np.asarray(feature_floor, dtype=float)

        if kind is SplitterKind.REGULAR_ADAPTIVE:
            if self.alpha is None or not 0.0 < self.alpha <= 0.5:
                raise ValueError(f'alpha must lie in (0, 1/2], got {alpha}')
            if schedule.kind not in NODE_SIZE_KINDS:
                raise ValueError(f'regular_adaptive needs a node-size schedule, got {schedule.kind.value}')
        elif schedule.kind in NODE_SIZE_KINDS and schedule.kind is not ScheduleKind.CONSTANT:
            raise ValueError(f'{kind.value} needs a depth schedule, got {schedule.kind.value}')
        if kind is SplitterKind.MODIFIED_CENTERED and self.rotation_periods is None:
            raise ValueError('modified_centered needs rotation_periods')

    @classmethod
    def from_dict(cls, data):
        try:
            kind = SplitterKind(data['kind'])
        except KeyError:
            raise ValueError('splitter needs a "kind"')
        except ValueError:
            choices = ', '.join(kind.value for kind in SplitterKind)
            raise ValueError(f'unknown splitter kind "{data["kind"]}", expected one of: {choices}')
        if 'schedule' not in data:
            raise ValueError(f'{kind.value} splitter needs a "schedule"')

        return cls(kind, Schedule.from_dict(data['schedule']),
                   feature_probs=data.get('feature_probs'),
                   rotation_periods=data.get('rotation_periods'),
                   alpha=data.get('alpha'),
                   feature_floor=data.get('feature_floor'))

    def to_dict(self):
        result = {'kind': self.kind.value, 'schedule': self.schedule.to_dict()}
        if self.feature_probs is not None:
            result['feature_probs'] = self.feature_probs.tolist()
        if self.rotation_periods is not None:
            result['rotation_periods'] = list(self.rotation_periods)
        if self.alpha is not None:
            result['alpha'] = self.alpha
        if self.feature_floor is not None:
            result['feature_floor'] = self.feature_floor.tolist()
        return result

    @property
    def is_adaptive(self):
        return self.kind is SplitterKind.REGULAR_ADAPTIVE

    def centered_probs(self, d):
        probs = np.full(d, 1.0 / d) if self.feature_probs is None else self.feature_probs
        _check_simplex(probs, d)
        return probs

    def floor_probs(self, d):
        floor = np.full(d, 1.0 / d) if self.feature_floor is None else self.feature_floor
        if floor.size != d:
            raise ValueError(f'feature_floor has {floor.size} entries but d={d}')
        if np.any(floor <= 0.0) or floor.sum() > 1.0 + 1e-12:
            raise ValueError('feature_floor entries must be positive and sum to at most 1')
        return floor / floor.sum()

    def validate(self, d):
        if self.kind is SplitterKind.CENTERED:
            self.centered_probs(d)
        elif self.kind is SplitterKind.MODIFIED_CENTERED:
            if len(self.rotation_periods) != d:
                raise ValueError(f'rotation_periods has {len(self.rotation_periods)} entries but d={d}')
            rotation_residues(self.rotation_periods)
        elif self.kind is SplitterKind.REGULAR_ADAPTIVE:
            self.floor_probs(d)


def _check_simplex(probs, d):
    if probs.size != d:
        raise ValueError(f'feature_probs has {probs.size} entries but d={d}')
    if np.any(probs <= 0.0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError('feature_probs must be positive and sum to 1')


def rotation_residues(periods):
    """Pick residues r_j so that the depths t = r_j mod N_j never coincide."""
    d = len(periods)
    if any(N < d for N in periods):
        raise ValueError(f'every rotation period must be at least d={d}, got {list(periods)}')
    if sum(1.0 / N for N in periods) > 1.0:
        raise ValueError(f'rotation periods {list(periods)} are infeasible: sum of 1/N_j exceeds 1')

    residues = []
    for N in periods:
        for r in range(N):
            if all((r - r_k) % math.gcd(N, N_k) != 0 for r_k, N_k in zip(residues, periods)):
                residues.append(r)
                break
        else:
            raise ValueError(f'rotation periods {list(periods)} admit no collision-free residues')
    return tuple(residues)


def _grow_balanced(d, s_n, choose_features, choose_thresholds):
    if s_n < 0:
        raise ValueError(f'depth must be non-negative, got {s_n}')

    lower = np.zeros((1, d))
    upper = np.ones((1, d))
    counts = np.zeros((1, d), dtype=np.int64)
    levels = [(lower, upper, counts)]
    features = []
    thresholds = []

    for level in range(s_n):
        size = 2 ** level
        rows = np.arange(size)
        feature = choose_features(level, size)
        threshold = choose_thresholds(lower[rows, feature], upper[rows, feature])
        features.append(feature)
        thresholds.append(threshold)

        # children of level node i sit at rows 2i (left) and 2i + 1 (right)
        lower = np.repeat(lower, 2, axis=0)
        upper = np.repeat(upper, 2, axis=0)
        counts = np.repeat(counts, 2, axis=0)
        upper[2 * rows, feature] = threshold
        lower[2 * rows + 1, feature] = threshold
        counts[np.arange(2 * size), np.repeat(feature, 2)] += 1
        levels.append((lower, upper, counts))

    n_internal = 2 ** s_n - 1
    ids = np.arange(2 * n_internal + 1)
    internal = ids < n_internal
    return Tree(
        d,
        np.concatenate(features + [np.full(2 ** s_n, LEAF)]),
        np.concatenate(thresholds + [np.full(2 ** s_n, np.nan)]),
        np.where(internal, 2 * ids + 1, LEAF),
        np.where(internal, 2 * ids + 2, LEAF),
        np.vstack([level[0] for level in levels]),
        np.vstack([level[1] for level in levels]),
        np.vstack([level[2] for level in levels]),
    )


def _midpoints(lower, upper):
    return (lower + upper) / 2.0


def grow_uniform(d, s_n, theta):
    rng = make_generator(theta)
    return _grow_balanced(
        d, s_n,
        lambda level, size: rng.integers(d, size=size),
        lambda lower, upper: lower + rng.random(lower.size) * (upper - lower))


def grow_centered(d, p, s_n, theta):
    probs = np.asarray(p, dtype=float)
    _check_simplex(probs, d)
    rng = make_generator(theta)
    return _grow_balanced(
        d, s_n,
        lambda level, size: rng.choice(d, size=size, p=probs),
        _midpoints)


def grow_modified_centered(d, N, s_n, theta):
    if len(N) != d:
        raise ValueError(f'rotation periods have {len(N)} entries but d={d}')
    residues = rotation_residues(N)
    rng = make_generator(theta)

    def choose_features(level, size):
        forced = [j for j in range(d) if level % N[j] == residues[j]]
        if forced:
            return np.full(size, forced[0])
        return rng.integers(d, size=size)

    return _grow_balanced(d, s_n, choose_features, _midpoints)


def stop_threshold(k_n, j_mass, i_mass):
    """Split-set mass a leaf must keep so that its prediction-set mass is about k_n."""
    if i_mass <= 0:
        raise ValueError(f'prediction-set mass must be positive, got {i_mass}')
    return max(1, int(snap_ceil(k_n * j_mass / i_mass)))


def _quantile_cut(values, weights, mass, q, alpha, tau, slack):
    order = np.argsort(values, kind='stable')
    ordered = values[order]
    left = np.cumsum(weights[order])[:-1]
    right = mass - left

    distinct = ordered[:-1] < ordered[1:]
    if not distinct.any():
        return None, 'all values are equal'

    admissible = distinct & (left >= tau) & (right >= tau)
    candidates = admissible & (left >= alpha * mass) & (right >= alpha * mass)
    if not candidates.any():
        candidates = (admissible & (left >= alpha * mass - slack)
                      & (right >= alpha * mass - slack))
    if not candidates.any():
        return None, 'no cut keeps both children above the stop threshold'

    positions = np.flatnonzero(candidates)
    best = positions[np.argmin(np.abs(left[positions] - q * mass))]
    threshold = (ordered[best] + ordered[best + 1]) / 2.0
    if threshold >= ordered[best + 1]:
        threshold = ordered[best]
    return (threshold, order[:best + 1], order[best + 1:]), None


def grow_regular_adaptive(j_features, j_weights, cfg, k_n, theta, i_mass=None):
    """
    Grow an (alpha, k_n)-regular random-split tree on the split set only.

    Each node draws a feature from the floor probabilities and a balance
    fraction q in [alpha, 1 - alpha], narrowed so that both children keep at
    least tau split-set mass, and cuts at the weighted q-quantile. Nodes with
    mass below 2 tau become leaves, so leaf masses lie in [tau, 2 tau).
    """
    features = np.atleast_2d(np.asarray(j_features, dtype=float))
    n_j, d = features.shape
    weights = np.ones(n_j) if j_weights is None else np.asarray(j_weights, dtype=float)
    if weights.shape != (n_j,):
        raise ValueError(f'{weights.size} split-set weights for {n_j} observations')
    if np.any(weights < 0.0):
        raise ValueError('split-set weights must be non-negative')

    rng = make_generator(theta)
    probs = cfg.floor_probs(d)
    alpha = cfg.alpha

    active = np.flatnonzero(weights > 0.0)
    root_mass = math.fsum(weights[active])
    slack = float(weights.max()) if n_j else 0.0
    builder = TreeBuilder(d)
    masses = [root_mass]
    diagnostics = []

    if active.size == 0:
        diagnostics.append('node 0: no split-set observation carries positive weight')
        return builder.build(node_mass=masses, mass_slack=slack, diagnostics=diagnostics)

    tau = stop_threshold(k_n, root_mass, root_mass if i_mass is None else i_mass)
    if root_mass < tau:
        diagnostics.append(f'node 0: root mass {root_mass:g} is below the stop threshold {tau}')

    stack = [(0, active)]
    while stack:
        node, members = stack.pop()
        mass = masses[node]
        if mass < 2 * tau:
            continue

        feature = int(rng.choice(d, p=probs))
        low = max(alpha, tau / mass)
        q = rng.uniform(low, 1.0 - low) if low < 0.5 else 0.5

        cut, reason = _quantile_cut(features[members, feature], weights[members], mass, q,
                                    alpha, tau, slack)
        if cut is None:
            diagnostics.append(f'node {node}: degenerate quantile on feature {feature}, {reason}')
            LOG.debug(f'regular adaptive growth stopped at node {node}: {reason}')
            continue

        threshold, left_order, right_order = cut
        left, right = builder.split(node, feature, threshold)
        left_members = members[left_order]
        right_members = members[right_order]
        masses.extend([math.fsum(weights[left_members]), math.fsum(weights[right_members])])
        stack.append((right, right_members))
        stack.append((left, left_members))

    return builder.build(node_mass=masses, mass_slack=slack, diagnostics=diagnostics)


def grow_tree(cfg, d, n_effective, theta, j_features=None, j_weights=None, i_mass=None):
    value = cfg.schedule.evaluate(n_effective)
    if cfg.kind is SplitterKind.UNIFORM:
        return grow_uniform(d, value, theta)
    if cfg.kind is SplitterKind.CENTERED:
        return grow_centered(d, cfg.centered_probs(d), value, theta)
    if cfg.kind is SplitterKind.MODIFIED_CENTERED:
        return grow_modified_centered(d, cfg.rotation_periods, value, theta)
    return grow_regular_adaptive(j_features, j_weights, cfg, value, theta, i_mass=i_mass)
