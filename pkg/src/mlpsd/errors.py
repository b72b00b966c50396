"""Exception types shared across the toolkit.

Plain ``ValueError`` is used for invalid arguments; the classes below mark
failures that deserve distinct CLI exit codes.
"""


class ConfigError(ValueError):
    """Bad run configuration (unknown key, unparsable value, bad grid)."""


class DegenerateGeometryError(RuntimeError):
    """Scene geometry makes the requested operator ill defined.

    Raised e.g. when the steering vector falls inside the noise subspace
    or a constrained beamformer denominator vanishes.
    """


class NumericsError(RuntimeError):
    """A numerically unusable intermediate (singular system, bad conditioning)."""
