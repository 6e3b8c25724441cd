"""
Experiment configuration: one YAML document per experiment, validated by a
marshmallow schema tree into frozen dataclasses.

Layout (every block optional except where noted):

    name, description, seed
    basis:      geometry, p, n, eigenvalues (ode only)
    dynamics:   k_damp, horizon, nonlinearity{...}, delay{terms: [...]}
    initial:    families [{mode, a, b, c, d}], random{modes, amplitude}
    stepper:    dt, t_end, stride, snapshot_stride, traced_modes
    lyapunov_sigma, driver_delta
    experiment: subcommand plus a parameter block named after it
"""
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import yaml
from marshmallow import (RAISE, Schema, ValidationError, fields, post_load, validate,
                         validates_schema)

from processing.delay import (ConstantLaw, DelayFunctional, DelaySpec, DelayTerm, InitialHistory,
                              LinearResponse, ModeFamily, RationalLaw, SigmoidLaw, TanhResponse,
                              random_history)
from processing.errors import ConfigurationError
from processing.integrator import Problem, StepperConfig
from processing.nonlinearity import VARIANTS, make_nonlinearity
from processing.spectral import GEOMETRIES, SpectralBasis, build_basis
from processing.sweep import seeded_rng

SUBCOMMANDS = ('simulate', 'energy-check', 'dissipativity', 'quasi-stability', 'lipschitz',
               'residual', 'ode-stability', 'attractor-dim', 'attraction-rate', 'convergence')

ModeKey = Tuple[int, ...]


class ConfigError(ConfigurationError):
    """Unparseable or invalid experiment config; messages maps field path -> list of messages."""

    def __init__(self, message: str, messages: Optional[Dict[str, List[str]]] = None):
        super().__init__(message)
        self.messages = messages or {}


# -- YAML -------------------------------------------------------------------

class UniqueKeyLoader(yaml.SafeLoader):
    """Safe loader that refuses repeated mapping keys."""

    def construct_mapping(self, node, deep=False):
        seen = set()
        for key_node, _ in node.value:
            key = self.construct_object(key_node, deep=deep)
            if key in seen:
                raise yaml.constructor.ConstructorError(
                    'while constructing a mapping', node.start_mark,
                    f'found duplicate key {key!r}', key_node.start_mark)
            seen.add(key)
        return super().construct_mapping(node, deep=deep)


def load_yaml(text: str) -> Any:
    try:
        return yaml.load(text, Loader=UniqueKeyLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        where = f'line {mark.line + 1}, column {mark.column + 1}: ' if mark else ''
        raise ConfigError(f'{where}{exc.problem or exc}') from exc
    except yaml.YAMLError as exc:
        raise ConfigError(str(exc)) from exc


# -- dataclasses ------------------------------------------------------------

@dataclass(frozen=True)
class ModeValue:
    mode: ModeKey
    value: float


@dataclass(frozen=True)
class BasisConfig:
    geometry: str = 'interval'
    p: int = 2
    n: int = 16
    eigenvalues: Tuple[float, ...] = ()


@dataclass(frozen=True)
class NonlinearityConfig:
    variant: str = 'none'
    kappa: float = 1.0
    mu_b: float = 0.0
    coefficients: Tuple[float, ...] = ()
    load: Tuple[ModeValue, ...] = ()
    c_nc: float = 0.0
    delta_hat: float = 0.5


@dataclass(frozen=True)
class ResponseConfig:
    kind: str = 'linear'
    a: float = 1.0


@dataclass(frozen=True)
class LawConfig:
    kind: str = 'constant'
    tau0: Optional[float] = None


@dataclass(frozen=True)
class PointSampleConfig:
    at: Tuple[float, ...]
    c: float = 1.0
    sigma: float = 0.0


@dataclass(frozen=True)
class AverageConfig:
    xi: Tuple[ModeValue, ...]
    c: float = 1.0
    sigma: float = 0.0


@dataclass(frozen=True)
class DelayTermConfig:
    law: LawConfig
    response: ResponseConfig = ResponseConfig()
    points: Tuple[PointSampleConfig, ...] = ()
    averages: Tuple[AverageConfig, ...] = ()


@dataclass(frozen=True)
class DelayConfig:
    terms: Tuple[DelayTermConfig, ...] = ()


@dataclass(frozen=True)
class DynamicsConfig:
    k_damp: float = 1.0
    horizon: float = 0.1
    nonlinearity: NonlinearityConfig = NonlinearityConfig()
    delay: DelayConfig = DelayConfig()


@dataclass(frozen=True)
class FamilyConfig:
    mode: ModeKey
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0


@dataclass(frozen=True)
class RandomHistoryConfig:
    modes: int = 4
    amplitude: float = 1.0


@dataclass(frozen=True)
class InitialConfig:
    families: Tuple[FamilyConfig, ...] = ()
    random: Optional[RandomHistoryConfig] = None


@dataclass(frozen=True)
class StepperBlock:
    dt: float = 1e-3
    t_end: float = 1.0
    stride: int = 1
    snapshot_stride: int = 0
    traced_modes: Tuple[ModeKey, ...] = ()


# per-subcommand parameters

@dataclass(frozen=True)
class EnergyCheckParams:
    tolerance: float = 1e-4
    ratio_range: Tuple[float, float] = (3.0, 5.0)


@dataclass(frozen=True)
class DissipativityParams:
    k_list: Tuple[float, ...] = (2.0, 4.0, 8.0)
    h_list: Tuple[float, ...] = (0.05,)
    t_long: Optional[float] = None
    tail_fraction: float = 0.25
    spread_max: float = 1.15
    check_halving: bool = False
    halving_increase_max: float = 0.10


@dataclass(frozen=True)
class QuasiStabilityParams:
    burn_in: float = 10.0
    pairs: int = 5
    spread: float = 1e-3
    window_fraction: float = 0.5
    rate_spread: float = 0.20


@dataclass(frozen=True)
class LipschitzParams:
    eps: Tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    spread_max: float = 2.0
    modes: int = 4


@dataclass(frozen=True)
class ResidualParams:
    at: Optional[float] = None
    ratio_range: Tuple[float, float] = (3.0, 5.0)


@dataclass(frozen=True)
class OdeStabilityParams:
    k: float = 0.5
    a: float = 2.0
    tau_max: float = 50.0
    tau_step: float = 0.5
    m: int = 16
    expect: Optional[str] = None
    tolerance: float = 1e-8
    samples: int = 20
    sample_t_end: float = 100.0
    sample_dt: float = 0.01
    sample_margin: float = 0.05


@dataclass(frozen=True)
class AttractorParams:
    source: str = 'trace'
    shape: str = 'circle'
    points: int = 1500
    embed_dim: int = 8
    burn_in: float = 10.0
    sample_stride: int = 10
    expect_dimension: Optional[float] = None
    dimension_tol: float = 0.15


@dataclass(frozen=True)
class AttractionParams:
    members: int = 4
    spread: float = 1e-3
    expect_rate: Optional[float] = None
    rate_tol: float = 0.10


@dataclass(frozen=True)
class ConvergenceParams:
    mode: str = 'self'
    levels: int = 3
    order_min: float = 1.5
    dts: Tuple[float, ...] = (4e-4, 2e-4, 1e-4)
    gap_max: float = 1e-6
    reference_dt: Optional[float] = None


@dataclass(frozen=True)
class ExperimentBlock:
    subcommand: str = 'simulate'
    energy_check: EnergyCheckParams = EnergyCheckParams()
    dissipativity: DissipativityParams = DissipativityParams()
    quasi_stability: QuasiStabilityParams = QuasiStabilityParams()
    lipschitz: LipschitzParams = LipschitzParams()
    residual: ResidualParams = ResidualParams()
    ode_stability: OdeStabilityParams = OdeStabilityParams()
    attractor_dim: AttractorParams = AttractorParams()
    attraction_rate: AttractionParams = AttractionParams()
    convergence: ConvergenceParams = ConvergenceParams()

    def params(self, subcommand: Optional[str] = None):
        """Parameter block of a subcommand (None for simulate)."""
        key = (subcommand or self.subcommand).replace('-', '_')
        return getattr(self, key, None)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = ''
    description: str = ''
    seed: int = 0
    basis: BasisConfig = BasisConfig()
    dynamics: DynamicsConfig = DynamicsConfig()
    initial: InitialConfig = InitialConfig()
    stepper: StepperBlock = StepperBlock()
    lyapunov_sigma: float = 0.25
    driver_delta: float = 0.25
    experiment: ExperimentBlock = field(default_factory=ExperimentBlock)

    def build_basis(self) -> SpectralBasis:
        return build_basis(self.basis.geometry, self.basis.p, self.basis.n,
                           self.basis.eigenvalues or None)

    def build_problem(self, basis: Optional[SpectralBasis] = None) -> Problem:
        basis = basis or self.build_basis()
        nl = self.dynamics.nonlinearity
        nonlinearity = make_nonlinearity(
            basis, nl.variant, load=[(m.mode, m.value) for m in nl.load], kappa=nl.kappa,
            mu_b=nl.mu_b, coefficients=nl.coefficients, c_nc=nl.c_nc, delta_hat=nl.delta_hat)
        terms = tuple(_delay_term(basis, term) for term in self.dynamics.delay.terms)
        delay = DelaySpec(self.dynamics.horizon, terms)
        return Problem(basis, self.dynamics.k_damp, nonlinearity, delay, self.initial_history(basis))

    def initial_history(self, basis: SpectralBasis) -> InitialHistory:
        families = tuple(ModeFamily(basis.position(f.mode), f.a, f.b, f.c, f.d)
                         for f in self.initial.families)
        history = InitialHistory(basis.size, families)
        block = self.initial.random
        if block is not None and block.amplitude != 0:
            rng = seeded_rng(self.seed)
            history = history.plus(random_history(basis, rng, block.modes, block.amplitude))
        return history

    def stepper_config(self, basis: Optional[SpectralBasis] = None) -> StepperConfig:
        block = self.stepper
        traced = ()
        if block.traced_modes:
            basis = basis or self.build_basis()
            traced = tuple(basis.position(mode) for mode in block.traced_modes)
        return StepperConfig(block.dt, block.t_end, block.stride, block.snapshot_stride, traced)

    @property
    def subcommand(self) -> str:
        return self.experiment.subcommand


_RESPONSES = {'linear': LinearResponse, 'tanh': TanhResponse}


def _delay_law(law: LawConfig):
    if law.kind == 'constant':
        return ConstantLaw(law.tau0)
    return SigmoidLaw() if law.kind == 'sigmoid' else RationalLaw()


def _delay_term(basis: SpectralBasis, term: DelayTermConfig) -> DelayTerm:
    functional = DelayFunctional(
        points=tuple((p.c, p.sigma, tuple(p.at)) for p in term.points),
        averages=tuple((a.c, a.sigma, basis.vector((m.mode, m.value) for m in a.xi))
                       for a in term.averages))
    return DelayTerm(_RESPONSES[term.response.kind](term.response.a), _delay_law(term.law), functional)


# -- schemas ----------------------------------------------------------------

class ModeIndex(fields.Field):
    """A mode multi-index: an int (interval / ode) or a list of ints (square)."""

    default_error_messages = {'invalid': 'Mode index must be an integer or a list of integers.'}

    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return None
        return [int(i) for i in value]

    def _deserialize(self, value, attr, data, **kwargs):
        items = value if isinstance(value, (list, tuple)) else [value]
        if not items or any(isinstance(i, bool) or not isinstance(i, int) for i in items):
            raise self.make_error('invalid')
        if any(i < 1 for i in items):
            raise ValidationError('Mode indices start at 1.')
        return tuple(items)


def _tuple_of(schema_cls, **kwargs):
    return fields.List(fields.Nested(schema_cls), load_default=list, **kwargs)


def _floats(default=(), **kwargs):
    return fields.List(fields.Float(), load_default=lambda: list(default), **kwargs)


def _range_pair():
    return fields.List(fields.Float(), validate=validate.Length(equal=2),
                       load_default=lambda: [3.0, 5.0])


_positive = validate.Range(min=0, min_inclusive=False)
_non_negative = validate.Range(min=0)


class StrictSchema(Schema):
    class Meta:
        unknown = RAISE


class ModeValueSchema(StrictSchema):
    mode = ModeIndex(required=True)
    value = fields.Float(required=True)

    @post_load
    def make(self, data, **kwargs):
        return ModeValue(**data)


class BasisSchema(StrictSchema):
    geometry = fields.String(load_default='interval', validate=validate.OneOf(GEOMETRIES))
    p = fields.Integer(load_default=2, validate=validate.OneOf((1, 2)))
    n = fields.Integer(load_default=16, validate=validate.Range(min=1))
    eigenvalues = _floats()

    @validates_schema
    def check_eigenvalues(self, data, **kwargs):
        if data['geometry'] == 'ode':
            if not data['eigenvalues']:
                raise ValidationError("geometry 'ode' needs an eigenvalue list", 'eigenvalues')
            if any(not value > 0 for value in data['eigenvalues']):
                raise ValidationError('eigenvalues must be positive', 'eigenvalues')
        elif data['eigenvalues']:
            raise ValidationError("eigenvalues are only read for geometry 'ode'", 'eigenvalues')

    @post_load
    def make(self, data, **kwargs):
        data['eigenvalues'] = tuple(data['eigenvalues'])
        if data['geometry'] == 'ode':
            data['n'] = len(data['eigenvalues'])
        return BasisConfig(**data)


class NonlinearitySchema(StrictSchema):
    variant = fields.String(load_default='none', validate=validate.OneOf(VARIANTS))
    kappa = fields.Float(load_default=1.0)
    mu_b = fields.Float(load_default=0.0)
    coefficients = _floats()
    load = _tuple_of(ModeValueSchema)
    c_nc = fields.Float(load_default=0.0, validate=_non_negative)
    delta_hat = fields.Float(load_default=0.5,
                             validate=validate.Range(min=0, max=0.5, min_inclusive=False))

    @validates_schema
    def check_variant(self, data, **kwargs):
        if data['variant'] == 'berger' and not data['kappa'] > 0:
            raise ValidationError('Berger kappa must be positive', 'kappa')
        if data['variant'] in ('kirchhoff', 'wave'):
            coefficients = data['coefficients']
            degree = len(coefficients) - 1
            if degree < 1 or degree % 2 == 0 or not coefficients[-1] > 0:
                raise ValidationError('f needs odd degree and a positive leading coefficient',
                                      'coefficients')
            if data['variant'] == 'wave' and degree > 3:
                raise ValidationError('wave nonlinearity is limited to degree 3', 'coefficients')

    @post_load
    def make(self, data, **kwargs):
        data['coefficients'] = tuple(data['coefficients'])
        data['load'] = tuple(data['load'])
        return NonlinearityConfig(**data)


class ResponseSchema(StrictSchema):
    kind = fields.String(load_default='linear', validate=validate.OneOf(tuple(_RESPONSES)))
    a = fields.Float(load_default=1.0)

    @post_load
    def make(self, data, **kwargs):
        return ResponseConfig(**data)


class LawSchema(StrictSchema):
    kind = fields.String(required=True, validate=validate.OneOf(('constant', 'sigmoid', 'rational')))
    tau0 = fields.Float(load_default=None, allow_none=True)

    @validates_schema
    def check_tau0(self, data, **kwargs):
        if data['kind'] == 'constant' and data.get('tau0') is None:
            raise ValidationError('a constant law needs tau0', 'tau0')
        if data['kind'] != 'constant' and data.get('tau0') is not None:
            raise ValidationError(f"tau0 is not read by the {data['kind']} law", 'tau0')

    @post_load
    def make(self, data, **kwargs):
        return LawConfig(**data)


class PointSampleSchema(StrictSchema):
    c = fields.Float(load_default=1.0)
    sigma = fields.Float(load_default=0.0)
    at = fields.List(fields.Float(), required=True, validate=validate.Length(min=1, max=2))

    @post_load
    def make(self, data, **kwargs):
        data['at'] = tuple(data['at'])
        return PointSampleConfig(**data)


class AverageSchema(StrictSchema):
    c = fields.Float(load_default=1.0)
    sigma = fields.Float(load_default=0.0)
    xi = fields.List(fields.Nested(ModeValueSchema), required=True, validate=validate.Length(min=1))

    @post_load
    def make(self, data, **kwargs):
        data['xi'] = tuple(data['xi'])
        return AverageConfig(**data)


class DelayTermSchema(StrictSchema):
    response = fields.Nested(ResponseSchema, load_default=ResponseConfig)
    law = fields.Nested(LawSchema, required=True)
    points = _tuple_of(PointSampleSchema)
    averages = _tuple_of(AverageSchema)

    @post_load
    def make(self, data, **kwargs):
        data['points'] = tuple(data['points'])
        data['averages'] = tuple(data['averages'])
        return DelayTermConfig(**data)


class DelaySchema(StrictSchema):
    terms = _tuple_of(DelayTermSchema)

    @post_load
    def make(self, data, **kwargs):
        return DelayConfig(tuple(data['terms']))


class DynamicsSchema(StrictSchema):
    k_damp = fields.Float(load_default=1.0, validate=_non_negative)
    horizon = fields.Float(load_default=0.1, validate=_positive)
    nonlinearity = fields.Nested(NonlinearitySchema, load_default=NonlinearityConfig)
    delay = fields.Nested(DelaySchema, load_default=DelayConfig)

    @post_load
    def make(self, data, **kwargs):
        return DynamicsConfig(**data)


class FamilySchema(StrictSchema):
    mode = ModeIndex(required=True)
    a = fields.Float(load_default=0.0)
    b = fields.Float(load_default=0.0)
    c = fields.Float(load_default=0.0)
    d = fields.Float(load_default=0.0)

    @post_load
    def make(self, data, **kwargs):
        return FamilyConfig(**data)


class RandomHistorySchema(StrictSchema):
    modes = fields.Integer(load_default=4, validate=validate.Range(min=1))
    amplitude = fields.Float(load_default=1.0, validate=_non_negative)

    @post_load
    def make(self, data, **kwargs):
        return RandomHistoryConfig(**data)


class InitialSchema(StrictSchema):
    families = _tuple_of(FamilySchema)
    random = fields.Nested(RandomHistorySchema, load_default=None, allow_none=True)

    @post_load
    def make(self, data, **kwargs):
        return InitialConfig(tuple(data['families']), data['random'])


class StepperSchema(StrictSchema):
    dt = fields.Float(load_default=1e-3, validate=_positive)
    t_end = fields.Float(load_default=1.0, validate=_positive)
    stride = fields.Integer(load_default=1, validate=validate.Range(min=1))
    snapshot_stride = fields.Integer(load_default=0, validate=_non_negative)
    traced_modes = fields.List(ModeIndex(), load_default=list)

    @post_load
    def make(self, data, **kwargs):
        data['traced_modes'] = tuple(data['traced_modes'])
        return StepperBlock(**data)


class EnergyCheckSchema(StrictSchema):
    tolerance = fields.Float(load_default=1e-4, validate=_positive)
    ratio_range = _range_pair()

    @post_load
    def make(self, data, **kwargs):
        return EnergyCheckParams(data['tolerance'], tuple(data['ratio_range']))


class DissipativitySchema(StrictSchema):
    k_list = _floats((2.0, 4.0, 8.0), validate=validate.Length(min=1))
    h_list = _floats((0.05,), validate=validate.Length(min=1))
    t_long = fields.Float(load_default=None, allow_none=True, validate=_positive)
    tail_fraction = fields.Float(load_default=0.25,
                                 validate=validate.Range(min=0, max=1, min_inclusive=False))
    spread_max = fields.Float(load_default=1.15, validate=validate.Range(min=1))
    check_halving = fields.Boolean(load_default=False)
    halving_increase_max = fields.Float(load_default=0.10, validate=_non_negative)

    @validates_schema
    def check_grid(self, data, **kwargs):
        if any(not h > 0 for h in data['h_list']):
            raise ValidationError('every h must be positive', 'h_list')
        if any(k < 0 for k in data['k_list']):
            raise ValidationError('damping must be non-negative', 'k_list')

    @post_load
    def make(self, data, **kwargs):
        data['k_list'] = tuple(data['k_list'])
        data['h_list'] = tuple(data['h_list'])
        return DissipativityParams(**data)


class QuasiStabilitySchema(StrictSchema):
    burn_in = fields.Float(load_default=10.0, validate=_non_negative)
    pairs = fields.Integer(load_default=5, validate=validate.Range(min=2))
    spread = fields.Float(load_default=1e-3, validate=_positive)
    window_fraction = fields.Float(load_default=0.5, validate=validate.Range(min=0, max=1, min_inclusive=False))
    rate_spread = fields.Float(load_default=0.20, validate=_non_negative)

    @post_load
    def make(self, data, **kwargs):
        return QuasiStabilityParams(**data)


class LipschitzSchema(StrictSchema):
    eps = _floats((1e-2, 1e-3, 1e-4), validate=validate.Length(min=1))
    spread_max = fields.Float(load_default=2.0, validate=validate.Range(min=1))
    modes = fields.Integer(load_default=4, validate=validate.Range(min=1))

    @validates_schema
    def check_eps(self, data, **kwargs):
        if any(not e > 0 for e in data['eps']):
            raise ValidationError('eps must be positive', 'eps')

    @post_load
    def make(self, data, **kwargs):
        data['eps'] = tuple(data['eps'])
        return LipschitzParams(**data)


class ResidualSchema(StrictSchema):
    at = fields.Float(load_default=None, allow_none=True, validate=_positive)
    ratio_range = _range_pair()

    @post_load
    def make(self, data, **kwargs):
        return ResidualParams(data['at'], tuple(data['ratio_range']))


class OdeStabilitySchema(StrictSchema):
    k = fields.Float(load_default=0.5, validate=_non_negative)
    a = fields.Float(load_default=2.0)
    tau_max = fields.Float(load_default=50.0, validate=_positive)
    tau_step = fields.Float(load_default=0.5, validate=_positive)
    m = fields.Integer(load_default=16, validate=validate.Range(min=16))
    expect = fields.String(load_default=None, allow_none=True,
                           validate=validate.OneOf(('stable', 'switch')))
    tolerance = fields.Float(load_default=1e-8, validate=_positive)
    samples = fields.Integer(load_default=20, validate=_non_negative)
    sample_t_end = fields.Float(load_default=100.0, validate=_positive)
    sample_dt = fields.Float(load_default=0.01, validate=_positive)
    sample_margin = fields.Float(load_default=0.05, validate=_non_negative)

    @post_load
    def make(self, data, **kwargs):
        return OdeStabilityParams(**data)


class AttractorSchema(StrictSchema):
    source = fields.String(load_default='trace', validate=validate.OneOf(('trace', 'synthetic')))
    shape = fields.String(load_default='circle', validate=validate.OneOf(('circle', 'square')))
    points = fields.Integer(load_default=1500, validate=validate.Range(min=100))
    embed_dim = fields.Integer(load_default=8, validate=validate.Range(min=2))
    burn_in = fields.Float(load_default=10.0, validate=_non_negative)
    sample_stride = fields.Integer(load_default=10, validate=validate.Range(min=1))
    expect_dimension = fields.Float(load_default=None, allow_none=True)
    dimension_tol = fields.Float(load_default=0.15, validate=_positive)

    @post_load
    def make(self, data, **kwargs):
        return AttractorParams(**data)


class AttractionSchema(StrictSchema):
    members = fields.Integer(load_default=4, validate=validate.Range(min=4))
    spread = fields.Float(load_default=1e-3, validate=_non_negative)
    expect_rate = fields.Float(load_default=None, allow_none=True)
    rate_tol = fields.Float(load_default=0.10, validate=_positive)

    @post_load
    def make(self, data, **kwargs):
        return AttractionParams(**data)


class ConvergenceSchema(StrictSchema):
    mode = fields.String(load_default='self', validate=validate.OneOf(('self', 'reference')))
    levels = fields.Integer(load_default=3, validate=validate.Range(min=3))
    order_min = fields.Float(load_default=1.5)
    dts = _floats((4e-4, 2e-4, 1e-4), validate=validate.Length(min=2))
    gap_max = fields.Float(load_default=1e-6, validate=_positive)
    reference_dt = fields.Float(load_default=None, allow_none=True, validate=_positive)

    @post_load
    def make(self, data, **kwargs):
        data['dts'] = tuple(data['dts'])
        return ConvergenceParams(**data)


class ExperimentSchema(StrictSchema):
    subcommand = fields.String(load_default='simulate', validate=validate.OneOf(SUBCOMMANDS))
    energy_check = fields.Nested(EnergyCheckSchema, load_default=EnergyCheckParams)
    dissipativity = fields.Nested(DissipativitySchema, load_default=DissipativityParams)
    quasi_stability = fields.Nested(QuasiStabilitySchema, load_default=QuasiStabilityParams)
    lipschitz = fields.Nested(LipschitzSchema, load_default=LipschitzParams)
    residual = fields.Nested(ResidualSchema, load_default=ResidualParams)
    ode_stability = fields.Nested(OdeStabilitySchema, load_default=OdeStabilityParams)
    attractor_dim = fields.Nested(AttractorSchema, load_default=AttractorParams)
    attraction_rate = fields.Nested(AttractionSchema, load_default=AttractionParams)
    convergence = fields.Nested(ConvergenceSchema, load_default=ConvergenceParams)

    @post_load
    def make(self, data, **kwargs):
        return ExperimentBlock(**data)


class ExperimentConfigSchema(StrictSchema):
    name = fields.String(load_default='')
    description = fields.String(load_default='')
    seed = fields.Integer(load_default=0, validate=validate.Range(min=0, max=2 ** 64 - 1))
    basis = fields.Nested(BasisSchema, load_default=BasisConfig)
    dynamics = fields.Nested(DynamicsSchema, load_default=DynamicsConfig)
    initial = fields.Nested(InitialSchema, load_default=InitialConfig)
    stepper = fields.Nested(StepperSchema, load_default=StepperBlock)
    lyapunov_sigma = fields.Float(load_default=0.25, validate=_positive)
    driver_delta = fields.Float(load_default=0.25,
                                validate=validate.Range(min=0, max=0.5, min_inclusive=False))
    experiment = fields.Nested(ExperimentSchema, load_default=ExperimentBlock)

    @validates_schema
    def check_consistency(self, data, **kwargs):
        """Cross-block ranges; keys are dotted field paths."""
        errors: Dict[str, List[str]] = {}

        def fail(path: str, message: str) -> None:
            errors.setdefault(path, []).append(message)

        dynamics = data['dynamics']
        h = dynamics.horizon
        basis_block = data['basis']
        try:
            basis = build_basis(basis_block.geometry, basis_block.p, basis_block.n,
                                basis_block.eigenvalues or None)
        except ConfigurationError as exc:
            raise ValidationError(str(exc), 'basis') from exc

        def check_mode(path: str, mode: ModeKey) -> None:
            try:
                basis.position(mode)
            except ConfigurationError as exc:
                fail(path, str(exc))

        for i, entry in enumerate(dynamics.nonlinearity.load):
            check_mode(f'dynamics.nonlinearity.load.{i}.mode', entry.mode)

        state_dependent = False
        for i, term in enumerate(dynamics.delay.terms):
            prefix = f'dynamics.delay.terms.{i}'
            if term.law.kind == 'constant':
                if not 0.0 <= term.law.tau0 <= h:
                    fail(f'{prefix}.law.tau0', f'tau0={term.law.tau0} must lie in [0, h={h}]')
            else:
                state_dependent = True
            for j, point in enumerate(term.points):
                if not 0.0 <= point.sigma <= h:
                    fail(f'{prefix}.points.{j}.sigma', f'sigma={point.sigma} must lie in [0, h={h}]')
                if basis.dim == 0:
                    fail(f'{prefix}.points.{j}', "point samples need a spatial geometry")
                elif len(point.at) != basis.dim or any(not 0.0 <= x <= 1.0 for x in point.at):
                    fail(f'{prefix}.points.{j}.at',
                         f'point must have {basis.dim} coordinates in the closed unit domain')
            for j, average in enumerate(term.averages):
                if not 0.0 <= average.sigma <= h:
                    fail(f'{prefix}.averages.{j}.sigma', f'sigma={average.sigma} must lie in [0, h={h}]')
                for n, entry in enumerate(average.xi):
                    check_mode(f'{prefix}.averages.{j}.xi.{n}.mode', entry.mode)

        for i, family in enumerate(data['initial'].families):
            check_mode(f'initial.families.{i}.mode', family.mode)
        stepper = data['stepper']
        for i, mode in enumerate(stepper.traced_modes):
            check_mode(f'stepper.traced_modes.{i}', mode)
        if state_dependent and stepper.dt > h / 4.0:
            fail('stepper.dt', f'dt={stepper.dt} exceeds h/4={h / 4.0} for a state-dependent delay')

        experiment = data['experiment']
        if experiment.subcommand == 'dissipativity':
            lags = [term.law.tau0 for term in dynamics.delay.terms if term.law.kind == 'constant']
            lags += [sample.sigma for term in dynamics.delay.terms
                     for sample in (*term.points, *term.averages)]
            sweep = experiment.dissipativity
            for i, swept in enumerate(sweep.h_list):
                for value in ((swept, swept / 2.0) if sweep.check_halving else (swept,)):
                    path = f'experiment.dissipativity.h_list.{i}'
                    if lags and max(lags) > value:
                        fail(path, f'h={value} is shorter than the largest lag {max(lags)}')
                    if state_dependent and stepper.dt > value / 4.0:
                        fail(path, f'dt={stepper.dt} exceeds h/4={value / 4.0} '
                                   'for a state-dependent delay')

        if errors:
            raise ValidationError(errors)

    @post_load
    def make(self, data, **kwargs):
        return ExperimentConfig(**data)


# -- entry points -----------------------------------------------------------

def flatten_messages(messages: Any, prefix: str = '') -> Dict[str, List[str]]:
    """Nested marshmallow messages -> {'dotted.path': [message, ...]}."""
    if isinstance(messages, dict):
        flat: Dict[str, List[str]] = {}
        for key, value in messages.items():
            if key == '_schema':
                path = prefix
            else:
                path = f'{prefix}.{key}' if prefix else str(key)
            for sub, items in flatten_messages(value, path).items():
                flat.setdefault(sub, []).extend(items)
        return flat
    items = messages if isinstance(messages, list) else [messages]
    return {prefix or '_schema': [str(m) for m in items]}


def validate_document(document: Any) -> ExperimentConfig:
    if not isinstance(document, dict):
        raise ConfigError('config must be a mapping at the top level')
    try:
        return ExperimentConfigSchema().load(document)
    except ValidationError as exc:
        messages = flatten_messages(exc.messages)
        summary = '; '.join(f'{path}: {" ".join(items)}' for path, items in sorted(messages.items()))
        raise ConfigError(summary, messages) from exc


def parse_config(text: str) -> ExperimentConfig:
    """YAML text -> validated config with documented defaults filled in."""
    return validate_document(load_yaml(text) or {})


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding='utf-8') as handle:
        return parse_config(handle.read())


def config_dict(config: ExperimentConfig) -> Dict[str, Any]:
    return ExperimentConfigSchema().dump(config)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config_dict(config), sort_keys=False)


@dataclass(frozen=True)
class BundledConfig:
    name: str
    subcommand: str
    description: str
    path: str


def bundled_configs(folder: str) -> List[BundledConfig]:
    """Configs shipped in folder, in file-name order."""
    if not os.path.isdir(folder):
        return []
    entries = []
    for filename in sorted(os.listdir(folder)):
        if not filename.endswith(('.yaml', '.yml')):
            continue
        path = os.path.join(folder, filename)
        config = load_config(path)
        name = config.name or os.path.splitext(filename)[0]
        entries.append(BundledConfig(name, config.subcommand, config.description, path))
    return entries
