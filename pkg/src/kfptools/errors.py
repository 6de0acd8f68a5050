"""Exception types raised across the toolkit."""


class KfpError(Exception):
    """Base class for all toolkit errors."""


# --- structure validation ---

class ShapeMismatch(KfpError):
    """Block partition of B is inconsistent with the declared sizes."""


class RankDeficientBlock(KfpError):
    def __init__(self, k, msg=None):
        self.k = k
        super().__init__(msg or f"superdiagonal block {k} is rank deficient")


class NormExceeded(KfpError):
    """Operator norm of B exceeds the declared bound."""


class NonPositiveScale(KfpError):
    """Dilation parameter must be positive."""


# --- kernels / quadrature ---

class NonPositiveTime(KfpError):
    """Covariance requires t > 0."""


class PositivityLost(KfpError):
    """Cholesky factorization of a covariance matrix failed."""


class BoxTooSmall(KfpError):
    """Quadrature box does not capture enough Gaussian mass."""


class EmptyRegion(KfpError):
    """Sampling resolution too coarse: no grid node falls in the region."""


class ExponentOutOfRange(KfpError):
    """Requested Lebesgue exponent is outside the admissible range."""


class KernelQuadratureFailure(KfpError):
    """Kernel integrals did not stabilize under grid refinement."""


# --- G-function ---

class WidthOutOfRange(KfpError):
    """Mollification width outside (0, 1/4]."""


class PropertyViolated(KfpError):
    def __init__(self, index, witness, msg=None):
        self.index = index
        self.witness = witness
        super().__init__(msg or f"property ({index}) violated at t={witness!r}")


# --- solver ---

class CFLViolation(KfpError):
    """Explicit time step exceeds the stability limit."""


class UnstableBlowup(KfpError):
    """Solution max-norm exceeded the blow-up threshold."""


class SupportViolation(KfpError):
    """Test function support touches the domain boundary."""


# --- regularity probes ---

class C1TooSmall(KfpError):
    """Cutoff constant fails its defining inequality on the grid."""


class InsufficientRungs(KfpError):
    """Oscillation ladder needs at least 4 radii."""


# --- Crocco transforms ---

class NonMonotoneColumn(KfpError):
    def __init__(self, x, t, msg=None):
        self.x = x
        self.t = t
        super().__init__(msg or f"velocity profile not strictly increasing at x={x:g}, t={t:g}")


class DegenerateW(KfpError):
    """Crocco field w too close to zero for residual evaluation."""
