"""Exception hierarchy shared by all modules."""


class AnisoflowError(Exception):
    """Base class for every error raised by the package."""


class DegenerateInput(AnisoflowError, ValueError):
    """A norm derivative was requested at (or numerically at) the origin."""


class NotElliptic(AnisoflowError, ValueError):
    """The anisotropy failed the sampled ellipticity certificate."""


class NonOrthogonalFrame(AnisoflowError, ValueError):
    """A (normal, tangent) pair is not orthonormal."""


class DegenerateCurve(AnisoflowError, ValueError):
    """A discrete curve has a vanishing parametric speed."""


class DegenerateAngles(AnisoflowError, ValueError):
    """A junction angle left the open interval (0, pi)."""


class DegenerateMinimizer(AnisoflowError):
    """The energy minimizer collapses onto one of the endpoints."""


class NewtonDivergence(AnisoflowError):
    """Nodewise Newton iteration of the graph reparametrization failed."""


class NonMonotoneReparametrization(AnisoflowError):
    """A computed reparametrization is not strictly increasing."""


class SingularFh(AnisoflowError):
    """The pointwise time-derivative matrix of the height system is singular."""


class JunctionNewtonDivergence(AnisoflowError):
    """The junction Newton iteration inside a time step did not converge."""


class StepRejected(AnisoflowError):
    """A time step increased the energy even after all dt halvings."""


class MaxStepsExceeded(AnisoflowError):
    """The flow hit its step budget before reaching t_end."""


class CollapseDetected(AnisoflowError):
    """A curve length dropped below the collapse floor."""


class InsufficientData(AnisoflowError, ValueError):
    """Too few samples for a fit or probe."""


class EnergyAtMinimum(AnisoflowError, ValueError):
    """Energy gap below the floating point floor, so logs are undefined."""


class NotConverged(AnisoflowError):
    """The trajectory never reached the stationarity floor."""


class InvalidLambda(AnisoflowError, ValueError):
    """Spectral parameter outside the open right half plane."""


class ConfigError(AnisoflowError, ValueError):
    """Invalid experiment configuration."""
