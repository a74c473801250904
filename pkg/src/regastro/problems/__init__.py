from .ambulance import AmbulanceOracle, AmbulanceSimConfig, Dual4, ambulance_simulate, check_integrity
from .base import OracleError, StochasticOracle
from .synthetic import NoisyQuadratic, Rosenbrock, rosenbrock, rosenbrock_grad, rosenbrock_hess

__all__ = [
    "AmbulanceOracle",
    "AmbulanceSimConfig",
    "Dual4",
    "ambulance_simulate",
    "check_integrity",
    "OracleError",
    "StochasticOracle",
    "NoisyQuadratic",
    "Rosenbrock",
    "rosenbrock",
    "rosenbrock_grad",
    "rosenbrock_hess",
]
