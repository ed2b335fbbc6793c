"""Exception hierarchy shared by all pipeline stages."""


class CineflightError(Exception):
    """Base class; ``stage`` names the pipeline stage that raised it."""

    stage = "unknown"


# shot grammar
class ShotSyntaxError(CineflightError, ValueError):
    stage = "shot_grammar"

    def __init__(self, message, position, expected=()):
        self.position = position
        self.expected = tuple(expected)
        detail = f"{message} at position {position}"
        if self.expected:
            detail += f" (expected {', '.join(self.expected)})"
        super().__init__(detail)


class ValidationError(CineflightError, ValueError):
    stage = "shot_grammar"

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


# trajectory synthesis
class InfeasiblePlan(CineflightError, ValueError):
    stage = "traj_synth"


class TooShort(CineflightError, ValueError):
    stage = "traj_synth"


# rendering
class BadParams(CineflightError, ValueError):
    stage = "scene_render"


# visual odometry
class VoError(CineflightError):
    stage = "vo_extract"


class InsufficientCorrespondences(VoError):
    pass


class InsufficientParallax(VoError):
    pass


class CheiralityAmbiguous(VoError):
    pass


class TrackingLost(VoError):
    pass


class InitializationFailed(VoError):
    pass


# simulation
class Diverged(CineflightError):
    stage = "uav_sim"

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


# evaluation
class EvalError(CineflightError, ValueError):
    stage = "eval_metrics"


class Degenerate(EvalError):
    pass


class NoOverlap(EvalError):
    pass


class EmptyInput(EvalError):
    pass


class FormatError(CineflightError, ValueError):
    stage = "io"

    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")
