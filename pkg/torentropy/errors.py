"""Exception hierarchy shared by the library and the CLI"""

from typing import Any


class TorEntropyError(Exception):
    """Base error carrying a stable machine-readable code and structured details"""

    code: str = 'error'

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message: str = message
        self.details: dict[str, Any] = details

    def to_dict(self) -> dict[str, Any]:
        return {'error': self.code, 'message': self.message, 'details': self.details}


class InputError(TorEntropyError):
    """Malformed manifold spec, run config or command-line value"""

    code = 'input_error'


class DimensionMismatchError(TorEntropyError):
    code = 'dimension_mismatch'


class PolytopeError(TorEntropyError):
    """Facet data violating the Delzant invariants"""

    code = 'invalid_polytope'


class BoundaryProximityError(TorEntropyError):
    """Point closer to the boundary of P than the interior margin allows"""

    code = 'boundary_proximity'


class DomainError(TorEntropyError):
    """Point outside the closure of a gradient range or outside the polytope"""

    code = 'domain_error'


class NewtonConvergenceError(TorEntropyError):
    code = 'newton_nonconvergence'


class QuadratureError(TorEntropyError):
    code = 'quadrature_nonconvergence'


class TableError(TorEntropyError):
    """Missing lattice point, empty table or tables built in different gauges"""

    code = 'table_error'


class ConvolutionLimitError(TorEntropyError):
    code = 'convolution_limit'


class ScaleMismatchError(TorEntropyError):
    code = 'scale_mismatch'
