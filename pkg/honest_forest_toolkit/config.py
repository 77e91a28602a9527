import hashlib
import json
import logging
import math
import os

from enum import Enum

import yaml

from .dgp import TruthDescriptor
from .splitters import SplitterConfig
from .weights import WeightKind, WeightScheme


LOG = logging.getLogger()

THREADS_VARIABLE = 'HONEST_FOREST_THREADS'
MAX_DIMENSION = 8
MAX_GRID_POINTS = 2 ** 20


class ExperimentMode(Enum):
    POINTWISE = 'pointwise'
    UNIFORM = 'uniform'
    LP = 'lp'
    NESTED_PATH = 'nested_path'
    FOREST = 'forest'


class ConfigError(ValueError):
    """A config problem anchored at a dotted field path and, when known, a source line."""
    def __init__(self, field, reason, line=None, source=None):
        super().__init__(reason)
        self.field = field
        self.reason = reason
        self.line = line
        self.source = source

    def __str__(self):
        location = self.source or '<config>'
        if self.line is not None:
            location = f'{location}:{self.line}'
        return f'{location}: {self.field}: {self.reason}'


def worker_count():
    value = os.environ.get(THREADS_VARIABLE)
    if value is None:
        return os.cpu_count() or 1
    try:
        threads = int(value)
    except ValueError:
        raise ValueError(f'{THREADS_VARIABLE} must be an integer, got "{value}"')
    if threads < 1:
        raise ValueError(f'{THREADS_VARIABLE} must be at least 1, got {threads}')
    return threads


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(',', ':'))


def config_hash(data):
    return hashlib.sha256(canonical_json(data).encode('utf-8')).hexdigest()


def _node_line(root, path):
    """1-based line of the deepest node along path that exists in the composed YAML."""
    node = root
    line = None if node is None else node.start_mark.line + 1
    for key in path:
        if isinstance(node, yaml.MappingNode):
            matches = [value for name, value in node.value if name.value == key]
            if not matches:
                break
            node = matches[0]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
        line = node.start_mark.line + 1
    return line


class _Reader:
    def __init__(self, data, source, root_node):
        self.data = data
        self.source = source
        self.root_node = root_node

    def error(self, path, reason):
        field = '.'.join(str(key) for key in path) or '<root>'
        return ConfigError(field, reason, _node_line(self.root_node, path), self.source)

    def get(self, key, default=None, required=False):
        if key not in self.data:
            if required:
                raise self.error((key,), 'is required')
            return default
        return self.data[key]

    def integer(self, key, default=None, minimum=None, maximum=None):
        value = self.get(key, default, required=default is None)
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error((key,), f'must be an integer, got {value!r}')
        if minimum is not None and value < minimum:
            raise self.error((key,), f'must be at least {minimum}, got {value}')
        if maximum is not None and value > maximum:
            raise self.error((key,), f'must be at most {maximum}, got {value}')
        return value

    def section(self, key, parse, default=None):
        value = self.get(key, default, required=default is None)
        try:
            return parse(value)
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError, AttributeError) as exc:
            raise self.error((key,), str(exc))


class ExperimentConfig:
    """Validated experiment description; to_dict() is the canonical form that gets hashed."""
    def __init__(self, mode, truth, d, splitter, honest_ratio, n_grid, replications,
                 query_points, master_seed, i_scheme=None, j_scheme=None, sup_grid_resolution=33,
                 p_norms=(1.0, 2.0), forest_size=1, nested_path=False):
        self.mode = mode
        self.truth = truth
        self.d = d
        self.splitter = splitter
        self.honest_ratio = honest_ratio
        self.n_grid = list(n_grid)
        self.replications = replications
        self.query_points = [list(point) for point in query_points]
        self.master_seed = master_seed
        self.i_scheme = i_scheme
        self.j_scheme = j_scheme
        self.sup_grid_resolution = sup_grid_resolution
        self.p_norms = list(p_norms)
        self.forest_size = forest_size
        self.nested_path = nested_path

    @property
    def has_bootstrap(self):
        return self.i_scheme is not None or self.j_scheme is not None

    def split_sizes(self, n):
        n_i = min(math.ceil(self.honest_ratio * n), n - 1)
        return n_i, n - n_i

    @classmethod
    def from_dict(cls, data, source=None, root_node=None):
        if not isinstance(data, dict):
            raise ConfigError('<root>', 'config must be a mapping', _node_line(root_node, ()), source)
        reader = _Reader(data, source, root_node)

        mode = reader.section('mode', ExperimentMode)
        d = reader.integer('d', minimum=1, maximum=MAX_DIMENSION)

        def parse_truth(value):
            truth = TruthDescriptor.from_dict(value)
            truth.validate(d)
            return truth

        def parse_splitter(value):
            splitter = SplitterConfig.from_dict(value)
            splitter.validate(d)
            return splitter

        truth = reader.section('truth', parse_truth)
        splitter = reader.section('splitter', parse_splitter)

        honest_ratio = reader.get('honest_ratio', 0.5)
        if isinstance(honest_ratio, bool) or not isinstance(honest_ratio, (int, float)) \
                or not 0.0 < honest_ratio < 1.0:
            raise reader.error(('honest_ratio',), f'must lie in (0, 1), got {honest_ratio!r}')

        n_grid = reader.get('n_grid', required=True)
        if not isinstance(n_grid, list) or not n_grid:
            raise reader.error(('n_grid',), 'must be a non-empty list of integers')
        for index, n in enumerate(n_grid):
            if isinstance(n, bool) or not isinstance(n, int) or n < 4:
                raise reader.error(('n_grid', index), f'must be an integer >= 4, got {n!r}')
            if index and n <= n_grid[index - 1]:
                raise reader.error(('n_grid', index),
                                   f'must be strictly ascending, {n} follows {n_grid[index - 1]}')

        replications = reader.integer('replications', minimum=1)
        master_seed = reader.integer('master_seed', default=0, minimum=0)
        forest_size = reader.integer('forest_size', default=1, minimum=1)
        resolution = reader.integer('sup_grid_resolution', default=33, minimum=2)
        if mode is ExperimentMode.UNIFORM and resolution ** d > MAX_GRID_POINTS:
            raise reader.error(('sup_grid_resolution',),
                               f'{resolution}^{d} grid points exceed {MAX_GRID_POINTS}')

        query_points = reader.get('query_points', [[0.5] * d])
        if not isinstance(query_points, list) or not query_points:
            raise reader.error(('query_points',), 'must be a non-empty list of points')
        for index, point in enumerate(query_points):
            if not isinstance(point, list) or len(point) != d:
                raise reader.error(('query_points', index), f'must be a list of {d} numbers')
            if any(isinstance(x, bool) or not isinstance(x, (int, float)) or not 0.0 <= x <= 1.0
                   for x in point):
                raise reader.error(('query_points', index), f'must lie in [0, 1]^{d}, got {point}')

        p_norms = reader.get('p_norms', [1.0, 2.0])
        if not isinstance(p_norms, list) or not p_norms:
            raise reader.error(('p_norms',), 'must be a non-empty list of numbers')
        for index, p in enumerate(p_norms):
            if isinstance(p, bool) or not isinstance(p, (int, float)) or p < 1.0:
                raise reader.error(('p_norms', index), f'must be a number >= 1, got {p!r}')

        nested_path = reader.get('nested_path', False)
        if not isinstance(nested_path, bool):
            raise reader.error(('nested_path',), f'must be true or false, got {nested_path!r}')
        if mode is ExperimentMode.NESTED_PATH and not nested_path:
            raise reader.error(('nested_path',), 'nested_path mode requires nested_path: true')

        i_scheme = j_scheme = None
        bootstrap = reader.get('bootstrap')
        if bootstrap is not None:
            if not isinstance(bootstrap, dict):
                raise reader.error(('bootstrap',), 'must be a mapping with i_scheme and/or j_scheme')
            bootstrap_reader = _Reader(bootstrap, source, None)
            for key in ('i_scheme', 'j_scheme'):
                if key in bootstrap:
                    try:
                        scheme = WeightScheme.from_dict(bootstrap_reader.get(key))
                    except (ValueError, TypeError, KeyError) as exc:
                        raise reader.error(('bootstrap', key), str(exc))
                    if key == 'i_scheme':
                        i_scheme = scheme
                    else:
                        j_scheme = scheme
            if i_scheme is None and j_scheme is None:
                raise reader.error(('bootstrap',), 'needs i_scheme and/or j_scheme')
        if mode is ExperimentMode.FOREST and i_scheme is None and j_scheme is None:
            raise reader.error(('bootstrap',), 'forest mode requires bootstrap weights')

        config = cls(mode, truth, d, splitter, float(honest_ratio), n_grid, replications,
                     [[float(x) for x in point] for point in query_points], master_seed,
                     i_scheme=i_scheme, j_scheme=j_scheme, sup_grid_resolution=resolution,
                     p_norms=[float(p) for p in p_norms], forest_size=forest_size,
                     nested_path=nested_path)

        for index, n in enumerate(n_grid):
            n_i, n_j = config.split_sizes(n)
            for key, scheme, size in (('i_scheme', i_scheme, n_i), ('j_scheme', j_scheme, n_j)):
                if scheme is None:
                    continue
                try:
                    scheme.validate(size)
                except ValueError as exc:
                    raise reader.error(('bootstrap', key), f'at n={n}: {exc}')
                if scheme.kind is WeightKind.WITHOUT_REPLACEMENT and size < 2:
                    raise reader.error(('bootstrap', key), f'at n={n}: needs at least 2 observations')
            if n_i < 2:
                raise reader.error(('n_grid', index), f'n={n} leaves fewer than 2 prediction-set points')

        return config

    def to_dict(self):
        result = {
            'mode': self.mode.value,
            'd': self.d,
            'truth': self.truth.to_dict(),
            'splitter': self.splitter.to_dict(),
            'honest_ratio': self.honest_ratio,
            'n_grid': list(self.n_grid),
            'replications': self.replications,
            'query_points': [list(point) for point in self.query_points],
            'sup_grid_resolution': self.sup_grid_resolution,
            'p_norms': list(self.p_norms),
            'forest_size': self.forest_size,
            'nested_path': self.nested_path,
            'master_seed': self.master_seed,
        }
        if self.has_bootstrap:
            bootstrap = {}
            if self.i_scheme is not None:
                bootstrap['i_scheme'] = self.i_scheme.to_dict()
            if self.j_scheme is not None:
                bootstrap['j_scheme'] = self.j_scheme.to_dict()
            result['bootstrap'] = bootstrap
        return result

    def canonical_json(self):
        return canonical_json(self.to_dict())

    def config_hash(self):
        return config_hash(self.to_dict())


def parse_config(text, source=None):
    try:
        root_node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, 'problem_mark', None)
        line = None if mark is None else mark.line + 1
        raise ConfigError('<root>', f'cannot parse: {getattr(exc, "problem", exc)}', line, source)
    return ExperimentConfig.from_dict(data, source=source, root_node=root_node)


def load_config(path):
    with open(path, 'r') as config_file:
        text = config_file.read()
    config = parse_config(text, source=path)
    LOG.info(f'loaded {config.mode.value} config {path} ({config.config_hash()[:12]})')
    return config
