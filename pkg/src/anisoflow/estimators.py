"""Estimator-style wrappers around the reference frame, the flow and the LSI fit.

The classes follow the scikit-learn conventions: constructor arguments are
stored unchanged, ``fit`` validates its input and sets attributes with a
trailing underscore, and ``get_params`` / ``set_params`` come from
:class:`sklearn.base.BaseEstimator`.
"""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import diagnostics as dg
from . import flow as fl
from . import geometry as geo
from . import reference_frame as rf
from .anisotropy import Anisotropy, from_config


def _energy_density(anisotropy):
    """Polar norm used as energy density from an anisotropy or a config mapping."""
    if anisotropy is None:
        anisotropy = {"kind": "euclidean"}
    if isinstance(anisotropy, dict):
        anisotropy = from_config(anisotropy)
    if not isinstance(anisotropy, Anisotropy):
        raise TypeError("anisotropy must be an Anisotropy or a config mapping")
    return anisotropy.polar()


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class ReferenceFrameEstimator(BaseEstimator):
    """Energy minimizing straight triple junction for three endpoints.

    Parameters
    ----------
    anisotropy : Anisotropy or dict, optional
        Norm whose unit ball is the Wulff shape; the energy uses its polar.
        Defaults to the Euclidean norm.
    n : int
        Grid size for :meth:`inverse_transform` output checks.
    newton_tol : float

    Attributes
    ----------
    frame_ : ReferenceFrame
    junction_ : ndarray, shape (2,)
    alpha_ : ndarray, shape (3,)
    energy_ : float
    """

    def __init__(self, anisotropy=None, n=128, newton_tol=1e-12):
        self.anisotropy = anisotropy
        self.n = n
        self.newton_tol = newton_tol

    def fit(self, endpoints, y=None):
        p = np.asarray(endpoints, dtype=float)
        if p.shape != (3, 2) or not np.all(np.isfinite(p)):
            raise ValueError("endpoints must be a finite array of shape (3, 2)")
        if int(self.n) < 8:
            raise ValueError("n must be at least 8")
        self.frame_ = rf.minimize(p, _energy_density(self.anisotropy), self.newton_tol)
        self.junction_ = self.frame_.junction.copy()
        self.alpha_ = self.frame_.alpha.copy()
        self.energy_ = self.frame_.energy
        return self

    def transform(self, network):
        """Height field ``h`` of shape (3, N) describing ``network`` over the frame."""
        _check_fitted(self, "frame_")
        net = network if isinstance(network, geo.Network) else geo.Network(network)
        h, _ = rf.graph_reparametrize(net, self.frame_)
        return h

    def inverse_transform(self, h):
        """Network reconstructed from a height field."""
        _check_fitted(self, "frame_")
        h = np.asarray(h, dtype=float)
        if h.ndim != 2 or h.shape[0] != 3 or h.shape[1] < 8:
            raise ValueError("height field must have shape (3, N) with N >= 8")
        return rf.reconstruct(self.frame_, h)


class FlowEstimator(BaseEstimator):
    """Run the flow from initial data and keep the trajectory.

    Parameters
    ----------
    t_end, dt : float
    mode : {"parametric", "graph"}
    snapshot_stride : int
    anisotropy : Anisotropy or dict, optional
        Only used when ``fit`` receives a bare network without a frame.

    Attributes
    ----------
    trajectory_ : Trajectory
    final_state_ : FlowState
    """

    def __init__(self, t_end=0.2, dt=2e-4, mode="parametric", snapshot_stride=10,
                 newton_tol=1e-12, anisotropy=None):
        self.t_end = t_end
        self.dt = dt
        self.mode = mode
        self.snapshot_stride = snapshot_stride
        self.newton_tol = newton_tol
        self.anisotropy = anisotropy

    def fit(self, initial, y=None):
        """``initial`` is a FlowState, a ``(frame, h)`` pair or a network."""
        if not self.dt > 0 or not self.t_end >= 0:
            raise ValueError("dt must be positive and t_end non-negative")
        if self.mode not in ("parametric", "graph"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if isinstance(initial, fl.FlowState):
            state = initial
        elif isinstance(initial, tuple) and len(initial) == 2:
            frame, h = initial
            h = np.asarray(h, dtype=float)
            state = fl.FlowState(0.0, rf.reconstruct(frame, h), frame, h)
        else:
            net = initial if isinstance(initial, geo.Network) else geo.Network(initial)
            if self.mode == "graph":
                raise ValueError("graph mode needs a (frame, h) pair")
            phi_polar = _energy_density(self.anisotropy)
            frame = rf.minimize(net.endpoints, phi_polar)
            state = fl.FlowState(0.0, net, frame, None)
        self.trajectory_ = fl.run_flow(state, self.t_end, self.dt, mode=self.mode,
                                       newton_tol=self.newton_tol,
                                       snapshot_stride=self.snapshot_stride)
        self.final_state_ = self.trajectory_.info["final_state"]
        return self


class LsiFitter(BaseEstimator):
    """Fit the exponent and constant of the gradient inequality to a trajectory.

    Attributes
    ----------
    theta_ : float
    C_ : float
    fit_ : LsiFit
    """

    def __init__(self, e_star=None, window=None):
        self.e_star = e_star
        self.window = window

    def fit(self, trajectory, y=None):
        if not isinstance(trajectory, fl.Trajectory):
            raise TypeError("expected a Trajectory")
        self.fit_ = dg.fit_lsi(trajectory, self.e_star, window=self.window)
        self.theta_ = self.fit_.theta
        self.C_ = self.fit_.C
        return self
