import logging
import math

from collections import namedtuple
from enum import Enum

import numpy as np

from scipy import integrate, stats

from .splitters import Schedule, ScheduleKind
from .streams import make_generator


LOG = logging.getLogger()

MomentReport = namedtuple('MomentReport', [
    'mean_w1', 'second_w1', 'cross_w1w2', 'l21_ratio', 'correlation_ratio', 'adjusted_mixed',
    'central4', 'central2', 'fourth_w1',
])

FourthMomentTerms = namedtuple('FourthMomentTerms', [
    'adjusted_fourth', 'adjusted_second_squared', 'central_fourth', 'central_second_squared',
])

# weight cells drawn per chunk in empirical_moments
_BATCH_CELLS = 2 ** 20


class WeightKind(Enum):
    MULTINOMIAL = 'multinomial'
    WITHOUT_REPLACEMENT = 'without_replacement'
    WILD = 'wild'


class WildLaw(Enum):
    POISSON = 'poisson'
    LOGNORMAL = 'lognormal'
    GAMMA = 'gamma'


class WeightScheme:
    """
    Exchangeable bootstrap weights for one side of the honest split.

    MULTINOMIAL and WITHOUT_REPLACEMENT draw m_n = m_schedule(n) trials;
    WILD draws n iid unit-mean weights from a Poisson, log-normal or gamma law.
    """
    def __init__(self, kind, m_schedule=None, law=WildLaw.POISSON, sigma=None, shape=None):
        self.kind = kind
        self.m_schedule = m_schedule
        self.law = law if kind is WeightKind.WILD else None
        self.sigma = sigma
        self.shape = shape

        if kind is WeightKind.WILD:
            if law is WildLaw.LOGNORMAL and (sigma is None or not sigma > 0.0):
                raise ValueError(f'lognormal weights need sigma > 0, got {sigma}')
            if law is WildLaw.GAMMA and (shape is None or not shape > 0.0):
                raise ValueError(f'gamma weights need shape > 0, got {shape}')
        elif m_schedule is None:
            raise ValueError(f'{kind.value} weights need an m_schedule')

    @classmethod
    def multinomial(cls, m):
        return cls(WeightKind.MULTINOMIAL, Schedule(ScheduleKind.CONSTANT, m))

    @classmethod
    def without_replacement(cls, m):
        return cls(WeightKind.WITHOUT_REPLACEMENT, Schedule(ScheduleKind.CONSTANT, m))

    @classmethod
    def wild(cls, law=WildLaw.POISSON, sigma=None, shape=None):
        return cls(WeightKind.WILD, law=law, sigma=sigma, shape=shape)

    @classmethod
    def from_dict(cls, data):
        try:
            kind = WeightKind(data['kind'])
        except KeyError:
            raise ValueError('weight scheme needs a "kind"')
        except ValueError:
            choices = ', '.join(kind.value for kind in WeightKind)
            raise ValueError(f'unknown weight scheme "{data["kind"]}", expected one of: {choices}')

        if kind is WeightKind.WILD:
            try:
                law = WildLaw(data.get('law', 'poisson'))
            except ValueError:
                choices = ', '.join(law.value for law in WildLaw)
                raise ValueError(f'unknown wild law "{data["law"]}", expected one of: {choices}')
            return cls(kind, law=law, sigma=data.get('sigma'), shape=data.get('shape'))

        if 'm' in data:
            return cls(kind, Schedule(ScheduleKind.CONSTANT, data['m']))
        if 'm_schedule' not in data:
            raise ValueError(f'{kind.value} weights need "m" or "m_schedule"')
        return cls(kind, Schedule.from_dict(data['m_schedule']))

    def to_dict(self):
        if self.kind is WeightKind.WILD:
            result = {'kind': self.kind.value, 'law': self.law.value}
            if self.law is WildLaw.LOGNORMAL:
                result['sigma'] = float(self.sigma)
            elif self.law is WildLaw.GAMMA:
                result['shape'] = float(self.shape)
            return result
        return {'kind': self.kind.value, 'm_schedule': self.m_schedule.to_dict()}

    @property
    def is_wild(self):
        return self.kind is WeightKind.WILD

    def m(self, n):
        if self.is_wild:
            return None
        if self.m_schedule.kind is ScheduleKind.CONSTANT:
            return int(self.m_schedule.param)
        return self.m_schedule.evaluate(n)

    def validate(self, n):
        if n < 1:
            raise ValueError(f'weights need n >= 1, got {n}')
        if self.is_wild:
            return
        m = self.m(n)
        if m < 1:
            raise ValueError(f'{self.kind.value} weights need m_n >= 1, got {m}')
        if self.kind is WeightKind.WITHOUT_REPLACEMENT and m > n:
            raise ValueError(f'cannot subsample m_n={m} of n={n} observations without replacement')

    def mean_weight(self, n):
        return analytic_moments(self, n).mean_w1

    def __repr__(self):
        if self.is_wild:
            return f'WeightScheme(wild, {self.law.value})'
        return f'WeightScheme({self.kind.value}, {self.m_schedule!r})'


def _draw_batch(scheme, n, size, rng):
    if scheme.kind is WeightKind.MULTINOMIAL:
        return rng.multinomial(scheme.m(n), np.full(n, 1.0 / n), size=size).astype(float)

    if scheme.kind is WeightKind.WITHOUT_REPLACEMENT:
        m = scheme.m(n)
        chosen = np.argpartition(rng.random((size, n)), m - 1, axis=1)[:, :m]
        weights = np.zeros((size, n))
        np.put_along_axis(weights, chosen, 1.0, axis=1)
        return weights

    if scheme.law is WildLaw.POISSON:
        return rng.poisson(1.0, size=(size, n)).astype(float)
    if scheme.law is WildLaw.LOGNORMAL:
        sigma = scheme.sigma
        return np.exp(sigma * rng.standard_normal((size, n)) - 0.5 * sigma ** 2)
    return rng.gamma(scheme.shape, 1.0 / scheme.shape, size=(size, n))


def draw_weights(scheme, n, seed):
    scheme.validate(n)
    return _draw_batch(scheme, n, 1, make_generator(seed))[0]


def analytic_moments(scheme, n):
    scheme.validate(n)

    if scheme.kind is WeightKind.MULTINOMIAL:
        m = scheme.m(n)
        p = 1.0 / n
        mean = m / n
        second = mean * (1.0 - p + mean)
        cross = m * (m - 1) / n ** 2
        central2 = m * p * (1.0 - p)
        central4 = central2 * (1.0 + 3.0 * (m - 2) * p * (1.0 - p))
        # raw fourth moment of a binomial via Stirling numbers of the second kind
        fourth = (m * p + 7 * m * (m - 1) * p ** 2 + 6 * m * (m - 1) * (m - 2) * p ** 3
                  + m * (m - 1) * (m - 2) * (m - 3) * p ** 4)
        return MomentReport(mean, second, cross, second / mean, (m - 1) / m, -1.0 / m,
                            central4, central2, fourth)

    if scheme.kind is WeightKind.WITHOUT_REPLACEMENT:
        if n < 2:
            raise ValueError('without-replacement pair moments need n >= 2')
        m = scheme.m(n)
        p = m / n
        cross = m * (m - 1) / (n * (n - 1))
        central2 = p * (1.0 - p)
        return MomentReport(p, p, cross, 1.0, n * (m - 1) / (m * (n - 1)),
                            -(n - m) / (m * (n - 1)),
                            central2 * (1.0 - 3.0 * p + 3.0 * p ** 2), central2, p)

    if scheme.law is WildLaw.POISSON:
        second, fourth, central2, central4 = 2.0, 15.0, 1.0, 4.0
    elif scheme.law is WildLaw.LOGNORMAL:
        s = scheme.sigma ** 2
        second = math.exp(s)
        fourth = math.exp(6.0 * s)
        central2 = math.expm1(s)
        central4 = fourth - 4.0 * math.exp(3.0 * s) + 6.0 * second - 3.0
    else:
        k = scheme.shape
        second = 1.0 + 1.0 / k
        fourth = (k + 1.0) * (k + 2.0) * (k + 3.0) / k ** 3
        central2 = 1.0 / k
        central4 = 3.0 * (k + 2.0) / k ** 3
    return MomentReport(1.0, second, 1.0, second, 1.0, 0.0, central4, central2, fourth)


def kappa_ratio(scheme, n, t):
    """(E[exp(t W_1)] - 1) / E[W_1], evaluated without cancellation near t = 0."""
    scheme.validate(n)
    if t == 0.0:
        return 0.0

    if scheme.kind is WeightKind.WITHOUT_REPLACEMENT:
        return math.expm1(t)
    if scheme.kind is WeightKind.MULTINOMIAL:
        m = scheme.m(n)
        return n / m * math.expm1(m * math.log1p(math.expm1(t) / n))
    if scheme.law is WildLaw.POISSON:
        return math.expm1(math.expm1(t))
    if scheme.law is WildLaw.GAMMA:
        k = scheme.shape
        if t >= k:
            raise ValueError(f't={t} lies outside the MGF domain t < {k} of gamma weights')
        return math.expm1(-k * math.log1p(-t / k))

    if t > 0.0:
        raise ValueError(f't={t} lies outside the MGF domain t <= 0 of lognormal weights')
    sigma = scheme.sigma

    def integrand(z):
        return stats.norm.pdf(z) * math.expm1(t * math.exp(sigma * z - 0.5 * sigma ** 2))

    value, _ = integrate.quad(integrand, -np.inf, np.inf)
    return value


def kappa_limit_bound(t):
    a = abs(t)
    return t + 0.5 * t ** 2 * math.exp(a + math.expm1(a)) * (1.0 + math.exp(a))


def mixed_mgf_ratio(scheme, n, mgf, t):
    """
    (E[exp(t W_1 Y) | X] - 1) / E[W_1] for a conditional MGF of Y given X.

    Only discrete weight laws are supported; mgf(s) must accept any multiple
    s = k t that carries probability under the weight law.
    """
    scheme.validate(n)
    if scheme.kind is WeightKind.WITHOUT_REPLACEMENT:
        p = scheme.m(n) / n
        return (p * mgf(t) + (1.0 - p) - 1.0) / p

    if scheme.kind is WeightKind.MULTINOMIAL:
        m = scheme.m(n)
        mean = m / n
        ks = np.arange(m + 1)
        pmf = stats.binom.pmf(ks, m, 1.0 / n)
    elif scheme.law is WildLaw.POISSON:
        mean = 1.0
        # the Poisson(1) tail beyond 40 is below 1e-47
        ks = np.arange(41)
        pmf = stats.poisson.pmf(ks, 1.0)
    else:
        raise ValueError(f'mixed MGF ratio needs a discrete weight law, got {scheme.law.value}')

    terms = [prob * mgf(k * t) for k, prob in zip(ks, pmf) if prob > 0.0]
    return (math.fsum(terms) - 1.0) / mean


def fourth_moment_terms(scheme, n, k_n):
    report = analytic_moments(scheme, n)
    mean4 = report.mean_w1 ** 4
    return FourthMomentTerms(
        adjusted_fourth=report.fourth_w1 / mean4 / n ** 3,
        adjusted_second_squared=(report.second_w1 / report.mean_w1 ** 2) ** 2 / n ** 2,
        central_fourth=n * report.central4 / (mean4 * k_n ** 4),
        central_second_squared=n ** 2 * report.central2 ** 2 / (mean4 * k_n ** 4),
    )


def _report_from(a1, a2, a3, a4, pair):
    mean, second, fourth, cross = a1.mean(), a2.mean(), a4.mean(), pair.mean()
    third = a3.mean()
    central2 = second - mean ** 2
    central4 = fourth - 4.0 * mean * third + 6.0 * mean ** 2 * second - 3.0 * mean ** 4
    correlation = cross / mean ** 2
    return MomentReport(mean, second, cross, second / mean, correlation, correlation - 1.0,
                        central4, central2, fourth)


def empirical_moments(scheme, n, reps, seed):
    """
    Monte Carlo moments over reps weight vectors, averaging over all indices.

    Returns (report, std_err). Standard errors come from per-replication
    delta-method linearizations and are 0 for a single replication.
    """
    if reps < 1:
        raise ValueError(f'reps must be at least 1, got {reps}')
    scheme.validate(n)
    rng = make_generator(seed)

    chunk = max(1, _BATCH_CELLS // n)
    per_rep = {name: [] for name in ('a1', 'a2', 'a3', 'a4', 'pair')}
    done = 0
    while done < reps:
        size = min(chunk, reps - done)
        weights = _draw_batch(scheme, n, size, rng)
        squares = weights ** 2
        s1 = weights.sum(axis=1)
        s2 = squares.sum(axis=1)
        per_rep['a1'].append(s1 / n)
        per_rep['a2'].append(s2 / n)
        per_rep['a3'].append((squares * weights).sum(axis=1) / n)
        per_rep['a4'].append((squares ** 2).sum(axis=1) / n)
        pair = (s1 ** 2 - s2) / (n * (n - 1)) if n > 1 else np.full(size, np.nan)
        per_rep['pair'].append(pair)
        done += size

    a1, a2, a3, a4, pair = (np.concatenate(per_rep[name])
                            for name in ('a1', 'a2', 'a3', 'a4', 'pair'))
    report = _report_from(a1, a2, a3, a4, pair)

    mu, A2, A3 = report.mean_w1, report.second_w1, a3.mean()
    C = report.cross_w1w2
    linearized = MomentReport(
        mean_w1=a1,
        second_w1=a2,
        cross_w1w2=pair,
        l21_ratio=a2 / mu - A2 / mu ** 2 * a1,
        correlation_ratio=pair / mu ** 2 - 2.0 * C / mu ** 3 * a1,
        adjusted_mixed=pair / mu ** 2 - 2.0 * C / mu ** 3 * a1,
        central4=(a4 - 4.0 * mu * a3 + 6.0 * mu ** 2 * a2
                  + (-4.0 * A3 + 12.0 * mu * A2 - 12.0 * mu ** 3) * a1),
        central2=a2 - 2.0 * mu * a1,
        fourth_w1=a4,
    )
    if reps == 1:
        std_err = MomentReport(*([0.0] * len(MomentReport._fields)))
    else:
        std_err = MomentReport(*(float(np.std(values, ddof=1) / math.sqrt(reps))
                                 for values in linearized))

    LOG.debug(f'empirical moments of {scheme!r} over {reps} draws: {report}')
    return MomentReport(*(float(value) for value in report)), std_err
