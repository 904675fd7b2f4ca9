"""Exception types shared across the toolkit."""


class PhbenchError(Exception):
    """Base class for all toolkit errors."""


class ModelSyntaxError(PhbenchError):
    """Model/config file is not valid structured text (carries line info)."""


class ModelSemanticError(PhbenchError):
    """Model file parsed but violates a structural invariant."""


class SingularConfiguration(PhbenchError):
    """Jacobian smallest singular value fell below the threshold."""


class OverdampedUnsupported(PhbenchError):
    """Closed-form step response requested for damping ratio >= 1."""


class MissingInteractionData(PhbenchError):
    """Interaction wrench required but not available."""


class NonQuasiStaticReference(PhbenchError):
    """Quasi-static metric applied to a reference with nonzero velocity."""


class NumericalDivergence(PhbenchError):
    """Simulation state magnitude exceeded the divergence guard."""


class SchemaError(PhbenchError):
    """CSV log does not match the expected column schema."""
