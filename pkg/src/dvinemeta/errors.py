"""Exception types shared across the package."""


class DataValidationError(ValueError):
    """Input data violates a structural constraint (counts, denominators, schema)."""


class ParameterError(ValueError):
    """A parameter lies outside its admissible range."""


class UnsupportedModelError(ValueError):
    """The requested operation is undefined for this model configuration."""


class NumericalFailure(RuntimeError):
    """A likelihood or transform evaluation produced a non-finite value.

    Carries the offending parameter point so the caller can diagnose or
    penalise it.
    """

    def __init__(self, message, params=None, study_index=None):
        detail = message
        if study_index is not None:
            detail += f" (study index {study_index})"
        if params is not None:
            detail += f" at parameters {params!r}"
        super().__init__(detail)
        self.params = params
        self.study_index = study_index
