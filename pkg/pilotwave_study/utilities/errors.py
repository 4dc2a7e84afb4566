"""
Exception classes shared by the library and the command line.
Each class carries the process exit status the CLI reports for it.
"""


class ConfigError(ValueError):
    """Invalid scenario file or command-line configuration."""
    exit_code = 1


class NumericalError(RuntimeError):
    """A solver or integrator failed to produce a finite, converged result."""
    exit_code = 2


class CertificationError(RuntimeError):
    """A property check (equivariance, restriction, acceptance) was rejected."""
    exit_code = 3
