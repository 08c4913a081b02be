import math
from inspect import cleandoc
from pathlib import Path
from typing import Annotated, Any, Literal

from typing_extensions import TypeAliasType

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    StringConstraints,
    computed_field,
    field_validator,
    model_validator,
)

PotentialKind = TypeAliasType('PotentialKind', Literal[
    'fs-cp1', 'fs-cpm', 'round-sphere', 'guillemin', 'bergman-sum', 'ke-cpm', 'tampered'
])
TableMethod = TypeAliasType('TableMethod', Literal['quadrature', 'laplace', 'closed-form'])
NAMED_POLYTOPE_PATTERN = r'^\s*(interval01|interval_sym(\([^()]*\))?|simplex\([^()]*\))\s*$'
NamedPolytope = Annotated[str, StringConstraints(pattern=NAMED_POLYTOPE_PATTERN)]


class FacetModel(BaseModel):
    """One facet ``<x, normal> - offset >= 0``"""

    normal: list[int]
    offset: float | str = Field(
        description=cleandoc("""
            Facet offset a_r. Strings such as "1/3" are read as exact rationals, floats are read
            through their shortest decimal representation.
        """),
    )


class PolytopeModel(BaseModel):
    """Facet description of a Delzant polytope"""

    dimension: int = Field(ge=1)
    facets: list[FacetModel] = Field(min_length=2)

    @model_validator(mode='after')
    def _check_normal_lengths(self) -> 'PolytopeModel':
        for i, facet in enumerate(self.facets):
            if len(facet.normal) != self.dimension:
                raise ValueError(
                    f'facet {i} has a normal of length {len(facet.normal)}, '
                    f'expected {self.dimension}'
                )
        return self


class PotentialModel(BaseModel):
    kind: PotentialKind
    params: dict[str, Any] = Field(
        default_factory=dict,
        description=cleandoc("""
            Kind-specific parameters: `m` and `degree` for fs-cpm, `r2` for round-sphere,
            `m` for ke-cpm, `table` (a NormingTable document) for bergman-sum,
            `m`, `level` and `amplitude` for tampered.
        """),
    )


class ManifoldModel(BaseModel):
    """A toric manifold given by its polytope and a Kähler potential"""

    polytope: PolytopeModel | NamedPolytope | None = Field(
        default=None,
        description=cleandoc("""
            Facet description or the name of a built-in polytope: "interval01",
            "interval_sym(r2)" or "simplex(m)", the latter optionally "simplex(m, degree)".
            Required for guillemin and bergman-sum, derived for closed-form kinds.
        """),
    )
    potential: PotentialModel


class NormingEntryModel(BaseModel):
    alpha: list[int]
    logQ: float  # noqa: N815


class NormingTableModel(BaseModel):
    """Serialized table of log norming constants at one level"""

    k: int = Field(ge=1)
    entries: list[NormingEntryModel] = Field(min_length=1)
    method: TableMethod
    gauge: dict[str, Any] = Field(
        default_factory=dict,
        description='Digest of the potential the table was built from, and its gauge shift',
    )


class GaugeShift(BaseModel):
    """
    Element of the gauge group acting on potential pairs.

    ``c`` shifts phi by a constant, ``b`` adds a linear term to phi (translating the polytope by
    ``b``) and ``kv`` adds a linear term to u (translating log coordinates by ``kv``). Empty
    vectors mean zero.
    """

    model_config = ConfigDict(frozen=True)  # pyright: ignore[reportUnannotatedClassAttribute]

    c: float = 0.0
    b: tuple[float, ...] = ()
    kv: tuple[int, ...] = ()

    def vectors(self, dim: int) -> tuple[list[float], list[int]]:
        b = list(self.b) if self.b else [0.0] * dim
        kv = list(self.kv) if self.kv else [0] * dim
        if len(b) != dim or len(kv) != dim:
            raise ValueError(f'gauge vectors must have length {dim}')
        return b, kv

    def inverse(self, dim: int) -> 'GaugeShift':
        b, kv = self.vectors(dim)
        return GaugeShift(
            c=-self.c - sum(bi * vi for bi, vi in zip(b, kv, strict=True)),
            b=tuple(-bi for bi in b),
            kv=tuple(-vi for vi in kv),
        )

    def compose(self, other: 'GaugeShift', dim: int) -> 'GaugeShift':
        """The shift equal to applying ``self`` first and ``other`` second"""
        b1, kv1 = self.vectors(dim)
        b2, kv2 = other.vectors(dim)
        return GaugeShift(
            c=self.c + other.c - sum(x * y for x, y in zip(b1, kv2, strict=True)),
            b=tuple(x + y for x, y in zip(b1, b2, strict=True)),
            kv=tuple(x + y for x, y in zip(kv1, kv2, strict=True)),
        )


class CheckReport(BaseModel):
    """Residuals of a numerical verification and their pass/fail verdict"""

    name: str
    inputs_digest: str
    residuals: dict[str, float]
    tolerances: dict[str, float]
    label: str | None = Field(
        default=None, description='Human-readable verdict, e.g. "convolution sequence"'
    )
    details: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode='after')
    def _check_tolerance_keys(self) -> 'CheckReport':
        missing = set(self.residuals) - set(self.tolerances)
        if missing:
            raise ValueError(f'no tolerance given for residuals {sorted(missing)}')
        return self

    @computed_field
    @property
    def verdict(self) -> Literal['pass', 'fail']:
        # NaN compares false and therefore fails
        ok = all(
            not math.isnan(value) and value <= self.tolerances[key]
            for key, value in self.residuals.items()
        )
        return 'pass' if ok else 'fail'

    @property
    def passed(self) -> bool:
        return self.verdict == 'pass'


class EntropyCurveRow(BaseModel):
    k: int
    H_exact: float  # noqa: N815
    H_asym: float  # noqa: N815
    diff: float
    ratio: float | None = Field(
        default=None, description='diff at this k over diff at the previous k of the ladder'
    )


class MeasureAtomModel(BaseModel):
    alpha: list[int]
    weight: float
    logw: float


class LatticeMeasureModel(BaseModel):
    """Serialized Bergman measure at level ``level``; atoms sit at alpha / level"""

    level: int = Field(ge=0)
    atoms: list[MeasureAtomModel]


class RunConfig(BaseModel):
    """Options of one CLI run, merged from a config file and command-line flags"""

    manifold: str = 'builtin:fs-cp1'
    k: list[int] = Field(default_factory=lambda: [16, 64, 256, 1024, 4096])
    x: str | list[list[float]] | None = Field(
        default=None,
        description='Explicit interior points, or "grid:n" for an n-point interior grid',
    )
    tolerances: dict[str, float] = Field(default_factory=dict)
    out: Path = Path('out')
    format: Literal['csv', 'json'] = 'csv'
    method: Literal['auto', 'quadrature', 'closed-form'] = 'auto'
    plot: bool = False

    @field_validator('k')
    @classmethod
    def _positive_sorted(cls, value: list[int]) -> list[int]:
        if not value:
            raise ValueError('k-list is empty')
        if any(k < 1 for k in value):
            raise ValueError('k values must be positive')
        return sorted(set(value))

    @field_validator('tolerances')
    @classmethod
    def _known_tolerances(cls, value: dict[str, float]) -> dict[str, float]:
        known = {'balanced', 'convolution', 'ke', 'entropy', 'bernstein'}
        unknown = set(value) - known
        if unknown:
            raise ValueError(f'unknown tolerances {sorted(unknown)}')
        if any(not tol > 0 for tol in value.values()):
            raise ValueError('tolerances must be positive')
        return value
