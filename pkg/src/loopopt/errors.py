"""Exception hierarchy shared across the package."""


class LoopOptError(Exception):
    """Base class for all loopopt errors."""


# --- IR construction ---

class ShapeArity(LoopOptError):
    """Shape list has the wrong length or invalid entries for the op kind."""


class TooManyLoops(LoopOptError):
    """Derived loop count exceeds the loop budget."""


# --- transformations ---

class NotDivisor(LoopOptError):
    """A nonzero tile size does not divide its loop's trip count."""


class LoopBudgetExceeded(LoopOptError):
    """Applying the tiling would exceed the maximum loop count."""


class AlreadyParallelized(LoopOptError):
    """Parallelization was already used on this operation."""


class AlreadyVectorized(LoopOptError):
    """Vectorization was already applied."""


class AlreadyApplied(LoopOptError):
    """Im2col was already applied."""


class NotConvolution(LoopOptError):
    """Im2col requested on a non-convolution operation."""


class IndexOutOfRange(LoopOptError):
    """Interchange swap index outside [0, n-1]."""


# --- features / environment ---

class LimitExceeded(LoopOptError):
    """Operation exceeds the configured encoding limits."""


class StepOutOfRange(LoopOptError):
    """History write past the maximum schedule length."""


class EpisodeDone(LoopOptError):
    """step() called on a finished episode."""


class MaskedAction(LoopOptError):
    """An action forbidden by the current mask was submitted."""


# --- interpreter ---

class ExtentMismatch(LoopOptError):
    """Input buffer smaller than the op's access extents."""


class SafetyLimitExceeded(LoopOptError):
    """Loop extents beyond the interpreter safety limit."""


# --- agent ---

class LengthMismatch(LoopOptError):
    """Parallel lists of different lengths."""


class NonFiniteLoss(LoopOptError):
    """PPO loss or gradient became non-finite; update aborted."""


class AllMasked(LoopOptError):
    """A sampling head has no legal entry (internal error)."""
