"""Exception hierarchy shared by all thinlayer modules."""


class ThinLayerError(Exception):
    """Base class for every error raised by the package."""


class RankDeficientChart(ThinLayerError):
    def __init__(self, node, sigma_min=None):
        self.node = node
        self.sigma_min = sigma_min
        msg = f"chart differential is rank deficient at node {node}"
        if sigma_min is not None:
            msg += f" (smallest singular value {sigma_min:.3e})"
        super().__init__(msg)


class LayerTooThick(ThinLayerError):
    def __init__(self, t, eps_max):
        self.t = t
        self.eps_max = eps_max
        super().__init__(
            f"requested thickness {t!r} is not below the curvature bound {eps_max:.6g}"
        )


class NonTangentInput(ThinLayerError):
    def __init__(self, defect, tol):
        self.defect = defect
        self.tol = tol
        super().__init__(f"vector field tangency defect {defect:.3e} exceeds {tol:.3e}")


class NotPositiveDefinite(ThinLayerError):
    def __init__(self, node, eigenvalue=None, reason="smallest eigenvalue below floor"):
        self.node = node
        self.eigenvalue = eigenvalue
        super().__init__(f"anisotropy matrix rejected at node {node}: {reason}"
                         + ("" if eigenvalue is None else f" ({eigenvalue:.3e})"))


class EmptyDirichletBoundary(ThinLayerError):
    def __init__(self):
        super().__init__("the Dirichlet part of the boundary must contain at least one edge")


class SolverDiverged(ThinLayerError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"conjugate gradients did not converge in {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )


class NoConvergence(ThinLayerError):
    def __init__(self, defects):
        self.defects = list(defects)
        super().__init__(f"Cauchy defects grow as eps decreases: {self.defects}")


class ConfigError(ThinLayerError):
    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")
