"""Exponential family definitions with canonical links.

Each family supplies the pieces of the log-density

    f(x; omega, phi) = exp[(x * omega - b(omega)) / a(phi) + c(x, phi)]

evaluated on the natural-parameter scale. Only canonical links are
supported, so the linear predictor eta coincides with the natural
parameter omega and the inverse link equals the derivative of b.

Families know their permissible dispersion structures:

* ``"none"``: dispersion fixed at 1 (Poisson, Bernoulli).
* ``"scalar"``: one free dispersion for the whole data set
  (Gaussian, quasi-Poisson).
* ``"per_column"``: one free dispersion per column (Gaussian only).

All array arguments are converted with :func:`numpy.asarray` and the
methods broadcast elementwise.
"""

import numpy as np
from scipy.special import expit, gammaln, xlogy

from .errors import DomainError

__all__ = [
    "Family",
    "Gaussian",
    "Poisson",
    "Bernoulli",
    "QuasiPoisson",
    "family_from_name",
]

# Means are kept this far from the boundary of the mean space while
# iterating, so logarithms stay finite. Reported quantities are always
# evaluated at unclamped values. The margin sits below exp(-30) so that
# clamping cannot freeze the deviance before a Bernoulli linear
# predictor reaches the quasi-separation threshold.
BOUNDARY_EPS = 1e-14

# Linear predictors beyond this magnitude indicate quasi-separation for
# Bernoulli responses: the fitted probabilities are numerically 0 or 1.
ETA_BOUNDARY = 30.0


def _require_finite(eta):
    """Coerce linear predictors to a float array, rejecting non-finite."""
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise DomainError("linear predictors must be finite")
    return eta


class Family:
    """Base class for exponential families with canonical links."""

    name = ""
    allowed_dispersions = ("none",)

    def __init__(self, dispersion=None):
        if dispersion is None:
            dispersion = self.allowed_dispersions[0]
        if dispersion not in self.allowed_dispersions:
            raise DomainError(
                f"{self.name} family does not support dispersion structure "
                f"{dispersion!r}; allowed: {self.allowed_dispersions}"
            )
        self.dispersion = dispersion

    @property
    def has_dispersion(self):
        return self.dispersion != "none"

    # -- link functions -------------------------------------------------

    def link(self, mu):
        """Map means to the linear predictor scale."""
        raise NotImplementedError

    def inv_link(self, eta):
        """Map linear predictors back to means."""
        raise NotImplementedError

    # -- likelihood pieces ----------------------------------------------

    def loglik_kernel(self, x, eta):
        """Return ``x * eta - b(eta)`` elementwise (the part that moves
        with the parameters, before dispersion scaling)."""
        raise NotImplementedError

    def loglik_offset(self, x, phi=1.0):
        """Return the ``c(x, phi)`` part of the log-density, including any
        dispersion scaling that applies to it."""
        raise NotImplementedError

    def dispersion_scale(self, phi):
        """Return ``a(phi)``, the denominator of the kernel term."""
        return 1.0

    def loglik_term(self, x, eta, phi=1.0):
        """Elementwise log-density at linear predictor ``eta``.

        Parameters
        ----------
        x : array_like
            Observed responses; must lie in the family support.
        eta : array_like
            Linear predictors (natural parameters, canonical link).
        phi : array_like, optional
            Dispersion; ignored by families without one.

        Returns
        -------
        numpy.ndarray
            Per-observation log-likelihood contributions.
        """
        x = np.asarray(x, dtype=float)
        eta = np.asarray(eta, dtype=float)
        kernel = self.loglik_kernel(x, eta)
        return kernel / self.dispersion_scale(phi) + self.loglik_offset(x, phi)

    def deviance_term(self, x, mu):
        """Elementwise unit deviance at fitted mean ``mu``."""
        raise NotImplementedError

    def variance(self, mu):
        """Variance function V(mu)."""
        raise NotImplementedError

    # -- support and numerical guards ------------------------------------

    def validate_support(self, x):
        """Raise :class:`DomainError` if any response is outside the
        family support."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise DomainError(f"{self.name} responses must be finite")
        self._check_support(x)

    def _check_support(self, x):
        pass

    def clamp_mu(self, mu):
        """Pull means off the boundary of the mean space by a tiny margin.

        Used while iterating so that logarithms stay finite; final results
        are reported at unclamped values.
        """
        return mu

    def __repr__(self):
        return f"{type(self).__name__}(dispersion={self.dispersion!r})"


class Gaussian(Family):
    """Normal responses, identity link, b(omega) = omega^2 / 2."""

    name = "gaussian"
    allowed_dispersions = ("scalar", "per_column")

    def link(self, mu):
        return np.asarray(mu, dtype=float)

    def inv_link(self, eta):
        return _require_finite(eta)

    def loglik_kernel(self, x, eta):
        return x * eta - 0.5 * eta * eta

    def loglik_offset(self, x, phi=1.0):
        phi = np.asarray(phi, dtype=float)
        return -0.5 * x * x / phi - 0.5 * np.log(2.0 * np.pi * phi)

    def dispersion_scale(self, phi):
        return np.asarray(phi, dtype=float)

    def deviance_term(self, x, mu):
        x = np.asarray(x, dtype=float)
        mu = np.asarray(mu, dtype=float)
        r = x - mu
        return r * r

    def variance(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))


class Poisson(Family):
    """Count responses, log link, b(omega) = exp(omega)."""

    name = "poisson"
    allowed_dispersions = ("none",)

    def link(self, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any(mu <= 0):
            raise DomainError("poisson means must be positive on the link scale")
        return np.log(mu)

    def inv_link(self, eta):
        return np.exp(_require_finite(eta))

    def loglik_kernel(self, x, eta):
        # Overflowing exp means a trial predictor with likelihood zero;
        # the resulting -inf is meaningful, so the warning is suppressed.
        with np.errstate(over="ignore"):
            return x * eta - np.exp(eta)

    def loglik_offset(self, x, phi=1.0):
        return -gammaln(np.asarray(x, dtype=float) + 1.0)

    def deviance_term(self, x, mu):
        x = np.asarray(x, dtype=float)
        mu = np.asarray(mu, dtype=float)
        if np.any(mu <= 0):
            raise DomainError("poisson deviance requires positive means")
        return 2.0 * (xlogy(x, x / mu) - (x - mu))

    def variance(self, mu):
        return np.asarray(mu, dtype=float)

    def _check_support(self, x):
        if np.any(x < 0):
            raise DomainError("poisson responses must be nonnegative")
        if np.any(x != np.floor(x)):
            raise DomainError("poisson responses must be integers")

    def clamp_mu(self, mu):
        return np.maximum(np.asarray(mu, dtype=float), BOUNDARY_EPS)


class QuasiPoisson(Poisson):
    """Poisson mean structure with a free multiplicative dispersion.

    The objective is the Poisson log-likelihood divided by the
    dispersion, so parameter estimates coincide with Poisson estimates
    while standard errors and information criteria rescale.
    """

    name = "quasipoisson"
    allowed_dispersions = ("scalar",)

    def loglik_offset(self, x, phi=1.0):
        phi = np.asarray(phi, dtype=float)
        return -gammaln(np.asarray(x, dtype=float) + 1.0) / phi

    def dispersion_scale(self, phi):
        return np.asarray(phi, dtype=float)

    def loglik_term(self, x, eta, phi=1.0):
        # Divide the assembled Poisson term once, so the quasi-likelihood
        # is exactly proportional to the Poisson log-likelihood.
        x = np.asarray(x, dtype=float)
        eta = np.asarray(eta, dtype=float)
        term = self.loglik_kernel(x, eta) - gammaln(x + 1.0)
        return term / np.asarray(phi, dtype=float)


class Bernoulli(Family):
    """Binary responses, logit link, b(omega) = log(1 + exp(omega))."""

    name = "bernoulli"
    allowed_dispersions = ("none",)

    def link(self, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any((mu <= 0) | (mu >= 1)):
            raise DomainError("bernoulli means must lie strictly inside (0, 1)")
        return np.log(mu / (1.0 - mu))

    def inv_link(self, eta):
        return expit(_require_finite(eta))

    def loglik_kernel(self, x, eta):
        # x * eta - log(1 + exp(eta)), evaluated stably for large |eta|
        return x * eta - np.logaddexp(0.0, eta)

    def loglik_offset(self, x, phi=1.0):
        return np.zeros_like(np.asarray(x, dtype=float))

    def deviance_term(self, x, mu):
        x = np.asarray(x, dtype=float)
        mu = np.asarray(mu, dtype=float)
        if np.any((mu <= 0) | (mu >= 1)):
            raise DomainError("bernoulli deviance requires means inside (0, 1)")
        return 2.0 * (xlogy(x, x / mu) + xlogy(1.0 - x, (1.0 - x) / (1.0 - mu)))

    def variance(self, mu):
        mu = np.asarray(mu, dtype=float)
        return mu * (1.0 - mu)

    def _check_support(self, x):
        if np.any((x != 0) & (x != 1)):
            raise DomainError("bernoulli responses must be 0 or 1")

    def clamp_mu(self, mu):
        return np.clip(np.asarray(mu, dtype=float), BOUNDARY_EPS, 1.0 - BOUNDARY_EPS)


_FAMILIES = {
    "gaussian": Gaussian,
    "poisson": Poisson,
    "bernoulli": Bernoulli,
    "quasipoisson": QuasiPoisson,
}


def family_from_name(name, dispersion=None):
    """Construct a family by name.

    Parameters
    ----------
    name : str
        One of ``"gaussian"``, ``"poisson"``, ``"bernoulli"``,
        ``"quasipoisson"`` (case insensitive).
    dispersion : str, optional
        Dispersion structure; defaults to the family's first allowed
        structure.
    """
    key = str(name).lower()
    if key not in _FAMILIES:
        raise DomainError(
            f"unknown family {name!r}; expected one of {sorted(_FAMILIES)}"
        )
    return _FAMILIES[key](dispersion=dispersion)
