"""Riemannian manifold optimization with a statevector-emulated backend."""

from qmo.manifolds import (
    Field,
    Kind,
    ManifoldDescriptor,
    ManifoldPoint,
    TangentVector,
    metric,
    project_tangent,
    random_point,
    retract_exp,
    retract_normalize,
    retract_stiefel,
    riemannian_grad,
    skew_generator,
    vector_transport,
)
from qmo.optim import RunReport, SolverConfig, solve
from qmo.problems import as_objective, generate_scenario
from qmo.qstate import EncodedState, IndexedOperator, RegisterShape, decode, encode, expectation

__version__ = "0.1.0"
