"""Exception hierarchy shared by every module."""


class MeanfieldLabError(Exception):
    """Base class; carries a machine-readable payload for the CLI."""

    kind = "error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        out = {"error": self.kind, "message": str(self)}
        out.update(self.details)
        return out


class InputError(MeanfieldLabError, ValueError):
    kind = "input_error"


class ConfigError(InputError):
    kind = "config_error"


class ContractViolation(MeanfieldLabError):
    """A documented precondition (e.g. dt <= theta) was broken by the caller."""

    kind = "contract_violation"


class GeometryViolation(MeanfieldLabError):
    """lambda + theta * flux left the probability simplex beyond tolerance."""

    kind = "geometry_violation"


class DivergenceError(MeanfieldLabError):
    """A position became non-finite; ``last_finite`` holds the pre-step ensemble."""

    kind = "divergence"

    def __init__(self, message, last_finite=None, **details):
        super().__init__(message, **details)
        self.last_finite = last_finite


class OracleRefused(MeanfieldLabError):
    kind = "oracle_refused"
