import logging
import math

from collections import namedtuple
from enum import Enum

import numpy as np

from numpy.polynomial.legendre import leggauss

from .streams import make_generator


LOG = logging.getLogger()


HonestPartition = namedtuple('HonestPartition', ['i_indices', 'j_indices', 'n_i', 'n_j'])


class DensityKind(Enum):
    UNIFORM = 'uniform'
    BOUNDED_MIXTURE = 'bounded_mixture'


class RegressionKind(Enum):
    ZERO = 'zero'
    LINEAR = 'linear'
    SINUSOID_PRODUCT = 'sinusoid_product'
    SINUSOID_ADDITIVE = 'sinusoid_additive'


class NoiseKind(Enum):
    NONE = 'none'
    GAUSSIAN = 'gaussian'
    BOUNDED_UNIFORM = 'bounded_uniform'
    LAPLACE = 'laplace'


def _parse_kind(enum_class, data, section):
    try:
        return enum_class(data['kind'])
    except KeyError:
        raise ValueError(f'{section} needs a "kind"')
    except ValueError:
        choices = ', '.join(kind.value for kind in enum_class)
        raise ValueError(f'unknown {section} kind "{data["kind"]}", expected one of: {choices}')


def _vector(values, name):
    array = np.asarray(values, dtype=float)
    if array.ndim != 1 or array.size == 0:
        raise ValueError(f'{name} must be a non-empty list of numbers')
    return array


class Density:
    """
    Covariate law on [0,1]^d.

    BOUNDED_MIXTURE is eps * uniform + (1 - eps) * prod_j 2 x_j, so the
    density is bounded below by eps and above by eps + (1 - eps) 2^d.
    """
    def __init__(self, kind=DensityKind.UNIFORM, eps=None):
        self.kind = kind
        self.eps = eps
        if kind is DensityKind.BOUNDED_MIXTURE:
            if eps is None or not 0.0 < eps < 1.0:
                raise ValueError(f'bounded_mixture eps must lie in (0, 1), got {eps}')

    @classmethod
    def from_dict(cls, data):
        kind = _parse_kind(DensityKind, data, 'density')
        if kind is DensityKind.BOUNDED_MIXTURE:
            return cls(kind, eps=float(data.get('eps', 0.0)))
        return cls(kind)

    def to_dict(self):
        if self.kind is DensityKind.BOUNDED_MIXTURE:
            return {'kind': self.kind.value, 'eps': self.eps}
        return {'kind': self.kind.value}

    def lower_bound(self, d):
        return 1.0 if self.kind is DensityKind.UNIFORM else self.eps

    def upper_bound(self, d):
        if self.kind is DensityKind.UNIFORM:
            return 1.0
        return self.eps + (1.0 - self.eps) * 2.0 ** d

    def pdf(self, points):
        points = np.atleast_2d(points)
        if self.kind is DensityKind.UNIFORM:
            return np.ones(points.shape[0])
        return self.eps + (1.0 - self.eps) * np.prod(2.0 * points, axis=1)

    def sample(self, rng, n, d):
        if self.kind is DensityKind.UNIFORM:
            return rng.random((n, d))

        uniform = rng.random((n, d))
        # sqrt of a uniform has density 2t on [0,1]
        triangular = np.sqrt(rng.random((n, d)))
        from_uniform = rng.random(n) < self.eps
        return np.where(from_uniform[:, None], uniform, triangular)

    def interval_probability(self, a, b):
        """P(a < X_j <= b) for the marginal of one coordinate."""
        if self.kind is DensityKind.UNIFORM:
            return b - a
        return self.eps * (b - a) + (1.0 - self.eps) * (b * b - a * a)

    def cell_probability(self, lower, upper):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        volume = float(np.prod(upper - lower))
        if self.kind is DensityKind.UNIFORM:
            return volume
        return self.eps * volume + (1.0 - self.eps) * float(np.prod(upper * upper - lower * lower))


class Regression:
    def __init__(self, kind=RegressionKind.ZERO, coeffs=None, intercept=0.0, freqs=None,
                 amplitudes=None, slopes=None):
        self.kind = kind
        self.coeffs = None if coeffs is None else _vector(coeffs, 'coeffs')
        self.intercept = float(intercept)
        self.freqs = None if freqs is None else _vector(freqs, 'freqs')
        self.amplitudes = None if amplitudes is None else _vector(amplitudes, 'amplitudes')
        self.slopes = None if slopes is None else _vector(slopes, 'slopes')

        if kind is RegressionKind.LINEAR and self.coeffs is None:
            raise ValueError('linear regression needs coeffs')
        if kind is RegressionKind.SINUSOID_PRODUCT and self.freqs is None:
            raise ValueError('sinusoid_product regression needs freqs')
        if kind is RegressionKind.SINUSOID_ADDITIVE:
            if self.amplitudes is None or self.freqs is None or self.slopes is None:
                raise ValueError('sinusoid_additive regression needs amplitudes, freqs and slopes')
            if not self.amplitudes.size == self.freqs.size == self.slopes.size:
                raise ValueError('amplitudes, freqs and slopes must have the same length')

    @classmethod
    def from_dict(cls, data):
        kind = _parse_kind(RegressionKind, data, 'regression')
        return cls(kind, coeffs=data.get('coeffs'), intercept=data.get('intercept', 0.0),
                   freqs=data.get('freqs'), amplitudes=data.get('amplitudes'),
                   slopes=data.get('slopes'))

    def to_dict(self):
        result = {'kind': self.kind.value}
        if self.kind is RegressionKind.LINEAR:
            result.update(coeffs=self.coeffs.tolist(), intercept=self.intercept)
        elif self.kind is RegressionKind.SINUSOID_PRODUCT:
            result.update(freqs=self.freqs.tolist())
        elif self.kind is RegressionKind.SINUSOID_ADDITIVE:
            result.update(amplitudes=self.amplitudes.tolist(), freqs=self.freqs.tolist(),
                          slopes=self.slopes.tolist())
        return result

    def dimension(self):
        for vector in (self.coeffs, self.freqs, self.amplitudes):
            if vector is not None:
                return vector.size
        return None

    def __call__(self, points):
        points = np.atleast_2d(points)
        if self.kind is RegressionKind.ZERO:
            return np.zeros(points.shape[0])
        if self.kind is RegressionKind.LINEAR:
            return points @ self.coeffs + self.intercept
        if self.kind is RegressionKind.SINUSOID_PRODUCT:
            return np.prod(np.sin(2.0 * np.pi * self.freqs * points), axis=1)
        return (np.sin(2.0 * np.pi * self.freqs * points) @ self.amplitudes
                + points @ self.slopes)

    def lipschitz(self):
        if self.kind is RegressionKind.ZERO:
            return 0.0
        if self.kind is RegressionKind.LINEAR:
            return float(np.linalg.norm(self.coeffs))
        if self.kind is RegressionKind.SINUSOID_PRODUCT:
            return float(2.0 * np.pi * np.linalg.norm(self.freqs))
        partials = 2.0 * np.pi * np.abs(self.amplitudes * self.freqs) + np.abs(self.slopes)
        return float(np.linalg.norm(partials))

    def sup_abs(self):
        if self.kind is RegressionKind.ZERO:
            return 0.0
        if self.kind is RegressionKind.LINEAR:
            return abs(self.intercept) + float(np.sum(np.abs(self.coeffs)))
        if self.kind is RegressionKind.SINUSOID_PRODUCT:
            return 1.0
        return float(np.sum(np.abs(self.amplitudes)) + np.sum(np.abs(self.slopes)))


class Noise:
    def __init__(self, kind=NoiseKind.NONE, sigma=None, half_width=None, scale=None):
        self.kind = kind
        self.sigma = sigma
        self.half_width = half_width
        self.scale = scale

        required = {
            NoiseKind.GAUSSIAN: ('sigma', sigma),
            NoiseKind.BOUNDED_UNIFORM: ('half_width', half_width),
            NoiseKind.LAPLACE: ('scale', scale),
        }
        if kind in required:
            name, value = required[kind]
            if value is None or not value > 0.0:
                raise ValueError(f'{kind.value} noise needs {name} > 0, got {value}')

    @classmethod
    def from_dict(cls, data):
        kind = _parse_kind(NoiseKind, data, 'noise')
        return cls(kind, sigma=data.get('sigma'), half_width=data.get('half_width'),
                   scale=data.get('scale'))

    def to_dict(self):
        result = {'kind': self.kind.value}
        if self.kind is NoiseKind.GAUSSIAN:
            result['sigma'] = float(self.sigma)
        elif self.kind is NoiseKind.BOUNDED_UNIFORM:
            result['half_width'] = float(self.half_width)
        elif self.kind is NoiseKind.LAPLACE:
            result['scale'] = float(self.scale)
        return result

    @property
    def mgf_radius(self):
        if self.kind is NoiseKind.LAPLACE:
            return 1.0 / self.scale
        return math.inf

    @property
    def variance(self):
        if self.kind is NoiseKind.GAUSSIAN:
            return self.sigma ** 2
        if self.kind is NoiseKind.BOUNDED_UNIFORM:
            return self.half_width ** 2 / 3.0
        if self.kind is NoiseKind.LAPLACE:
            return 2.0 * self.scale ** 2
        return 0.0

    def sample(self, rng, n):
        if self.kind is NoiseKind.GAUSSIAN:
            return rng.normal(0.0, self.sigma, n)
        if self.kind is NoiseKind.BOUNDED_UNIFORM:
            return rng.uniform(-self.half_width, self.half_width, n)
        if self.kind is NoiseKind.LAPLACE:
            return rng.laplace(0.0, self.scale, n)
        return np.zeros(n)

    def mgf(self, t):
        if abs(t) >= self.mgf_radius:
            raise ValueError(f't={t} lies outside the MGF domain |t| < {self.mgf_radius} '
                             f'of {self.kind.value} noise')
        if self.kind is NoiseKind.GAUSSIAN:
            return math.exp(0.5 * self.sigma ** 2 * t ** 2)
        if self.kind is NoiseKind.BOUNDED_UNIFORM:
            ht = self.half_width * t
            return 1.0 if ht == 0.0 else math.sinh(ht) / ht
        if self.kind is NoiseKind.LAPLACE:
            return 1.0 / (1.0 - (self.scale * t) ** 2)
        return 1.0


class TruthDescriptor:
    def __init__(self, density=None, regression=None, noise=None):
        self.density = density or Density()
        self.regression = regression or Regression()
        self.noise = noise or Noise()

    @classmethod
    def from_dict(cls, data):
        return cls(Density.from_dict(data.get('density', {'kind': 'uniform'})),
                   Regression.from_dict(data.get('regression', {'kind': 'zero'})),
                   Noise.from_dict(data.get('noise', {'kind': 'none'})))

    def to_dict(self):
        return {
            'density': self.density.to_dict(),
            'regression': self.regression.to_dict(),
            'noise': self.noise.to_dict(),
        }

    def validate(self, d):
        if d < 1:
            raise ValueError(f'd must be at least 1, got {d}')
        expected = self.regression.dimension()
        if expected is not None and expected != d:
            raise ValueError(f'{self.regression.kind.value} regression has {expected} '
                             f'coordinates but d={d}')

    def density_bounds(self, d):
        return self.density.lower_bound(d), self.density.upper_bound(d)

    @property
    def lipschitz(self):
        return self.regression.lipschitz()

    @property
    def second_moment_bound(self):
        """K with E[Y^2 | X=x] <= K for every x."""
        return self.regression.sup_abs() ** 2 + self.noise.variance

    def conditional_mean(self, points):
        return self.regression(points)

    def numerator(self, points):
        return self.regression(points) * self.density.pdf(points)

    def cell_numerator_average(self, lower, upper, order=16):
        """Average of E[Y|X] f over a cell by tensor Gauss-Legendre quadrature."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        nodes, node_weights = leggauss(order)
        half = (upper - lower) / 2.0
        mid = (upper + lower) / 2.0
        grids = np.meshgrid(*[mid[j] + half[j] * nodes for j in range(lower.size)], indexing='ij')
        points = np.stack([grid.ravel() for grid in grids], axis=1)
        weight_grids = np.meshgrid(*[node_weights] * lower.size, indexing='ij')
        weights = np.prod(np.stack([grid.ravel() for grid in weight_grids], axis=1), axis=1)
        # the 2^-d factor turns the quadrature sum into an average over the cell
        return float(np.sum(weights * self.numerator(points)) / 2.0 ** lower.size)


class Dataset:
    def __init__(self, features, responses):
        features = np.array(features, dtype=float, ndmin=2)
        responses = np.array(responses, dtype=float, ndmin=1)

        if features.shape[0] < 1:
            raise ValueError('a dataset needs at least one observation')
        if features.shape[0] != responses.shape[0]:
            raise ValueError(f'{features.shape[0]} feature rows but {responses.shape[0]} responses')
        if np.any(features < 0.0) or np.any(features > 1.0):
            raise ValueError('feature values must lie in [0, 1]')

        features.flags.writeable = False
        responses.flags.writeable = False
        self.features = features
        self.responses = responses

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def subset(self, indices):
        return Dataset(self.features[indices], self.responses[indices])

    def prefix(self, size):
        return Dataset(self.features[:size], self.responses[:size])


def generate_dataset(truth, n, d, seed):
    if n < 1 or d < 1:
        raise ValueError(f'need n >= 1 and d >= 1, got n={n}, d={d}')
    truth.validate(d)

    rng = make_generator(seed)
    features = truth.density.sample(rng, n, d)
    responses = truth.conditional_mean(features) + truth.noise.sample(rng, n)
    return Dataset(features, responses)


def honest_split(dataset, ratio, seed):
    if not 0.0 < ratio < 1.0:
        raise ValueError(f'honest ratio must lie in (0, 1), got {ratio}')
    if dataset.n < 2:
        raise ValueError('an honest split needs at least two observations')

    n_i = math.ceil(ratio * dataset.n)
    n_i = min(n_i, dataset.n - 1)
    permutation = make_generator(seed).permutation(dataset.n)
    return HonestPartition(i_indices=np.sort(permutation[:n_i]),
                           j_indices=np.sort(permutation[n_i:]),
                           n_i=n_i, n_j=dataset.n - n_i)


def conditional_mgf(truth, x, t):
    mean = float(truth.conditional_mean(np.asarray(x, dtype=float))[0])
    return math.exp(t * mean) * truth.noise.mgf(t)
