"""Exception types raised across the pipeline."""


class SkillcastError(Exception):
    """Base class for all pipeline errors."""


class UndefinedVarianceError(SkillcastError, ValueError):
    pass


class SchemaError(SkillcastError, ValueError):
    pass


class SeparationError(SkillcastError):
    """Logit/probit likelihood has no finite maximiser."""

    def __init__(self, message, feature=None):
        super().__init__(message)
        self.feature = feature


class RankDeficiencyError(SkillcastError):
    def __init__(self, message, dropped=()):
        super().__init__(message)
        self.dropped = tuple(dropped)


class ConvergenceError(SkillcastError):
    pass


class SeriesGapError(SkillcastError):
    def __init__(self, message, years=()):
        super().__init__(message)
        self.years = tuple(years)


class IdentificationError(SkillcastError):
    """The requested parameter is not identified by the supplied data."""


class ConfigError(SkillcastError, ValueError):
    pass
