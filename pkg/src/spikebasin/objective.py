"""Least-squares objective in parameter space with closed-form derivatives.

``g(theta) = ||A phi(theta) - y||_2^2`` where ``phi(theta) = sum_r a_r delta_{t_r}``.
The Hessian is returned split as ``H = G + F``: ``G`` collects the
residual-free Gram terms and ``F`` every term carrying the residual.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .measurement import (
    FourierOperator,
    apply,
    apply_dipoles,
    apply_dirac_derivative,
    apply_dirac_second_derivative,
    re_inner,
)
from .spike_model import GeneralizedDipole, ModelConfig, SpikeTrain, unpack


@dataclass(frozen=True, eq=False)
class HessianSplit:
    G: np.ndarray
    F: np.ndarray
    k: int
    d: int

    @property
    def H(self) -> np.ndarray:
        return self.G + self.F

    def blocks(self, M: np.ndarray | None = None):
        """(amplitude block, position block, amplitude/position cross block)."""
        M = self.H if M is None else M
        k = self.k
        return M[:k, :k], M[k:, k:], M[:k, k:]

    def to_csv(self, path, which: str = "H") -> None:
        M = {"H": self.H, "G": self.G, "F": self.F}[which]
        header = [f"a{r}" for r in range(self.k)] + [f"t{r}_{j}" for r in range(self.k) for j in range(self.d)]
        with open(path, "w", newline="") as fh:
            fh.write(f"# {which}; amplitude block 0:{self.k}, position block {self.k}:{M.shape[0]}\n")
            w = csv.writer(fh)
            w.writerow([""] + header)
            for name, row in zip(header, M):
                w.writerow([name] + [repr(float(x)) for x in row])


def _unit(d, j):
    e = np.zeros(d)
    e[j] = 1.0
    return e


@dataclass(frozen=True, eq=False)
class Objective:
    operator: FourierOperator
    data: np.ndarray
    config: ModelConfig

    def __post_init__(self):
        y = np.asarray(self.data, dtype=complex).reshape(-1)
        if y.shape != (self.operator.m,):
            raise ValueError(f"data has length {y.size}, operator has m = {self.operator.m}")
        if self.operator.d != self.config.d:
            raise ValueError("operator and model dimensions differ")
        y.flags.writeable = False
        object.__setattr__(self, "data", y)

    def _train(self, theta) -> SpikeTrain:
        if isinstance(theta, SpikeTrain):
            return theta
        return unpack(theta, self.config)

    def residual(self, theta) -> np.ndarray:
        return apply(self.operator, self._train(theta)) - self.data

    def eval(self, theta) -> float:
        r = self.residual(theta)
        return re_inner(r, r)

    __call__ = eval

    def _rows_and_residual(self, sp: SpikeTrain):
        k, d = self.config.k, self.config.d
        atoms = self.operator.alpha(sp.positions)
        res = sp.amplitudes @ atoms - self.data
        rows = np.empty((k * (d + 1), self.operator.m), dtype=complex)
        rows[:k] = atoms
        # d/dt_{r,j} of a_r alpha(t_r) = -a_r * (i w_j alpha(t_r))
        freqs = self.operator.frequencies
        for r in range(k):
            for j in range(d):
                rows[k + r * d + j] = (-1j * sp.amplitudes[r]) * freqs[:, j] * atoms[r]
        return rows, res

    def jacobian_rows(self, theta) -> np.ndarray:
        """Rows ``d(A phi)/d theta_p`` in packed order, shape ``(k(d+1), m)``."""
        return self._rows_and_residual(self._train(theta))[0]

    def gradient(self, theta) -> np.ndarray:
        """``dg/da_r = 2 Re<A d_{t_r}, res>``, ``dg/dt_{r,j} = -2 a_r Re<A d'_{t_r,j}, res>``."""
        return self.value_and_gradient(theta)[1]

    def value_and_gradient(self, theta):
        rows, res = self._rows_and_residual(self._train(theta))
        grad = 2.0 * np.sum(rows.real * res.real + rows.imag * res.imag, axis=-1)
        return re_inner(res, res), grad

    def hessian(self, theta) -> HessianSplit:
        sp = self._train(theta)
        k, d = self.config.k, self.config.d
        n = k * (d + 1)
        rows = self.jacobian_rows(sp)
        G = np.empty((n, n))
        for p in range(n):
            G[p] = 2.0 * np.sum(rows[p].real * rows.real + rows[p].imag * rows.imag, axis=-1)

        res = self.residual(sp)
        F = np.zeros((n, n))
        for r in range(k):
            t = sp.positions[r]
            for j1 in range(d):
                p = k + r * d + j1
                d1 = apply_dirac_derivative(self.operator, t, _unit(d, j1))
                F[r, p] = F[p, r] = -2.0 * re_inner(d1, res)
                for j2 in range(j1, d):
                    q = k + r * d + j2
                    d2 = apply_dirac_second_derivative(self.operator, t, _unit(d, j1), _unit(d, j2))
                    F[p, q] = F[q, p] = 2.0 * sp.amplitudes[r] * re_inner(d2, res)
        return HessianSplit(G, F, k, d)


def quadratic_form_G_identity(obj: Objective, theta, u) -> tuple[float, float]:
    """``u^T G u`` from the matrix and ``2 ||A sum_r (u_r d_{t_r} - a_r |w_r| d'_{t_r, w_r/|w_r|})||^2``.

    ``w_r`` is the position part of ``u`` for spike r. The second value goes
    through generalized-dipole measurements only, never through ``G``.
    """
    sp = obj._train(theta)
    u = np.asarray(u, dtype=float)
    k, d = obj.config.k, obj.config.d
    G = obj.hessian(sp).G
    via_matrix = float(u @ G @ u)
    dipoles = []
    for r in range(k):
        w = u[k + r * d: k + (r + 1) * d]
        nw = float(np.linalg.norm(w))
        if nw > 0:
            dipoles.append(GeneralizedDipole(u[r], -sp.amplitudes[r] * nw, sp.positions[r], w / nw))
        else:
            dipoles.append(GeneralizedDipole(u[r], 0.0, sp.positions[r]))
    z = apply_dipoles(obj.operator, dipoles)
    return via_matrix, 2.0 * re_inner(z, z)


def noiseless_objective(op: FourierOperator, truth: SpikeTrain) -> Objective:
    return Objective(op, apply(op, truth), truth.config)
