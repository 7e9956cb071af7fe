"""Hyperelastic and visco-hyperelastic material models at finite strain.

Two models are provided:

* compressible Neo-Hookean (dimensionless, used for quasi-static lattice
  loading),
* an eight-chain equilibrium network with a Pade-approximated inverse
  Langevin function, a set of Maxwell-type non-equilibrium branches with
  unimodular internal tensors, and a quadratic volumetric term (kPa/mm
  units, used for dynamic plate loading).

All stress routines are batched: ``F`` may have shape (..., 3, 3) and the
internal tensors (..., n_branches, 3, 3). First Piola-Kirchhoff stress
``P = dPsi/dF`` and the material tangent ``dP/dF`` are analytic; the test
suite checks both against central finite differences of the energy.

Conventions: J = det F, C = F^T F, C_bar = J^(-2/3) C, effective chain
stretch lam_bar = sqrt(tr C_bar / 3), Cauchy stress sigma = J^-1 P F^T.
Symmetric tensors travel in 6-vector form ordered (xx, yy, zz, xy, yz, xz).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ChainLockingError

# Ratio lam_bar / lam_L at which the chain network is considered locked.
LOCKING_RATIO = 0.999

# Non-equilibrium branch table (shear modulus kPa, relaxation time s) for
# the elastomer plate material.
PLATE_BRANCHES = ((300.0, 0.001), (600.0, 0.2), (150.0, 3.0))

_EYE = np.eye(3)
# IDENT4[i, J, k, L] = delta_ik delta_JL
_IDENT4 = np.einsum("ik,JL->iJkL", _EYE, _EYE)


def langevin_beta(z):
    """Pade approximation of the inverse Langevin function.

    beta(z) = z (3 - z^2) / (1 - z^2), valid on |z| < 1.
    """
    z = np.asarray(z, dtype=np.float64)
    if np.any(np.abs(z) >= 1.0):
        raise ValueError("inverse Langevin argument must satisfy |z| < 1")
    return z * (3.0 - z * z) / (1.0 - z * z)


def _langevin_beta_d1(z):
    """First derivative of the Pade inverse Langevin: (3 + z^4) / (1 - z^2)^2."""
    z2 = z * z
    return (3.0 + z2 * z2) / (1.0 - z2) ** 2


def _langevin_beta_d2(z):
    """Second derivative: 4 z (z^2 + 3) / (1 - z^2)^3."""
    z2 = z * z
    return 4.0 * z * (z2 + 3.0) / (1.0 - z2) ** 3


def _log_sinh(b):
    """log(sinh(b)) without overflow for large arguments."""
    b = np.asarray(b, dtype=np.float64)
    out = np.empty_like(b)
    small = b < 20.0
    out[small] = np.log(np.sinh(b[small]))
    bl = b[~small]
    out[~small] = bl - np.log(2.0) + np.log1p(-np.exp(-2.0 * bl))
    return out


def _coth(b):
    return 1.0 / np.tanh(b)


def _csch2(b):
    """1 / sinh(b)^2, flushed to zero where sinh would overflow."""
    out = np.zeros_like(b)
    small = b < 20.0
    s = np.sinh(b[small])
    out[small] = 1.0 / (s * s)
    return out


def _det33(F):
    return np.asarray(np.linalg.det(F))


def _batched(F):
    """Promote a single (3, 3) tensor to a batch of one; report if promoted."""
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 2:
        return F[None], True
    return F, False


def _inv_transpose(F):
    return np.swapaxes(np.linalg.inv(F), -1, -2)


def _outer4(X, Y):
    """(X tensor Y)_{iJkL} = X_iJ Y_kL for batched 3x3 inputs."""
    return X[..., :, :, None, None] * Y[..., None, None, :, :]


def _cross4(X, Y):
    """(X cross Y)_{iJkL} = X_iL Y_kJ for batched 3x3 inputs."""
    return np.einsum("...iL,...kJ->...iJkL", X, Y)


def tensor_to_sym6(T):
    """Pack the symmetric part of (..., 3, 3) into (..., 6) as (xx, yy, zz, xy, yz, xz)."""
    T = np.asarray(T)
    S = 0.5 * (T + np.swapaxes(T, -1, -2))
    return np.stack([S[..., 0, 0], S[..., 1, 1], S[..., 2, 2],
                     S[..., 0, 1], S[..., 1, 2], S[..., 0, 2]], axis=-1)


def sym6_to_tensor(s):
    s = np.asarray(s)
    T = np.zeros(s.shape[:-1] + (3, 3), dtype=s.dtype)
    T[..., 0, 0] = s[..., 0]
    T[..., 1, 1] = s[..., 1]
    T[..., 2, 2] = s[..., 2]
    T[..., 0, 1] = T[..., 1, 0] = s[..., 3]
    T[..., 1, 2] = T[..., 2, 1] = s[..., 4]
    T[..., 0, 2] = T[..., 2, 0] = s[..., 5]
    return T


def von_mises(sig6):
    """Von Mises equivalent stress from 6-vector Cauchy stress."""
    s = np.asarray(sig6, dtype=np.float64)
    dxx = s[..., 0] - s[..., 1]
    dyy = s[..., 1] - s[..., 2]
    dzz = s[..., 2] - s[..., 0]
    shear = s[..., 3] ** 2 + s[..., 4] ** 2 + s[..., 5] ** 2
    return np.sqrt(0.5 * (dxx ** 2 + dyy ** 2 + dzz ** 2) + 3.0 * shear)


@dataclass(frozen=True)
class NeoHookeanMaterial:
    """Compressible Neo-Hookean solid.

    Psi(F) = mu/2 (tr C - 3) - mu ln J + lam/2 (ln J)^2
    P(F)   = mu (F - F^-T) + lam ln J F^-T
    """

    mu: float = 1.0
    lam: float = 10.0

    def energy(self, F):
        F, single = _batched(F)
        J = _det33(F)
        if np.any(J <= 0.0):
            raise ValueError("energy undefined for non-positive J")
        trC = np.sum(F * F, axis=(-1, -2))
        lnJ = np.log(J)
        psi = 0.5 * self.mu * (trC - 3.0) - self.mu * lnJ + 0.5 * self.lam * lnJ ** 2
        return psi[0] if single else psi

    def piola(self, F):
        F, single = _batched(F)
        J = _det33(F)
        if np.any(J <= 0.0):
            raise ValueError("stress undefined for non-positive J")
        FiT = _inv_transpose(F)
        lnJ = np.log(J)[..., None, None]
        P = self.mu * (F - FiT) + self.lam * lnJ * FiT
        return P[0] if single else P

    def tangent(self, F):
        """Material tangent dP/dF with shape (..., 3, 3, 3, 3)."""
        F, single = _batched(F)
        J = _det33(F)
        FiT = _inv_transpose(F)
        lnJ = np.log(J)[..., None, None, None, None]
        A = self.mu * np.broadcast_to(_IDENT4, F.shape + (3, 3)).copy()
        A += (self.mu - self.lam * lnJ) * _cross4(FiT, FiT)
        A += self.lam * _outer4(FiT, FiT)
        return A[0] if single else A

    def cauchy(self, F):
        F, single = _batched(F)
        J = _det33(F)
        P = self.piola(F)
        sig = np.einsum("...iJ,...kJ->...ik", P, F) / J[..., None, None]
        out = tensor_to_sym6(sig)
        return out[0] if single else out


@dataclass(frozen=True)
class ViscoMaterial:
    """Visco-hyperelastic network with non-equilibrium branches.

    Equilibrium part (eight-chain with Pade inverse Langevin, beta = beta(z),
    z = lam_bar / lam_L):

        Psi_eq = G_eq lam_L^2 [ z beta + ln(beta / sinh beta) - C0 ]

    C0 is fixed at construction so Psi_eq vanishes in the reference
    configuration. Each branch stores a unimodular internal tensor A and
    contributes G/2 (C_bar : A^-1 - 3); A relaxes toward C_bar with time
    constant tau (backward Euler, renormalized to det A = 1). The
    volumetric part is kappa/2 (J - 1)^2.

    Units: stresses kPa, lengths mm, time s, density kg/mm^3.
    """

    G_eq: float = 200.0
    lam_L: float = 10.0
    kappa: float = 4000.0
    rho0: float = 1.3e-5
    branches: tuple = PLATE_BRANCHES
    C0: float = field(init=False, default=0.0)

    def __post_init__(self):
        # same expression and association order as in energy(), so the
        # reference configuration evaluates to exactly zero
        z0 = 1.0 / self.lam_L
        b0 = float(langevin_beta(z0))
        c0 = float(z0 * b0 + np.log(b0) - _log_sinh(np.asarray(b0)))
        object.__setattr__(self, "C0", c0)
        object.__setattr__(self, "branches",
                           tuple((float(g), float(t)) for g, t in self.branches))

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    # -- kinematic helpers ------------------------------------------------

    def _split(self, F):
        F = np.asarray(F, dtype=np.float64)
        J = _det33(F)
        if np.any(J <= 0.0):
            raise ValueError("deformation state has non-positive J")
        w = J ** (-2.0 / 3.0)
        C = np.einsum("...ji,...jk->...ik", F, F)
        trCbar = w * np.trace(C, axis1=-2, axis2=-1)
        lam_bar = np.sqrt(trCbar / 3.0)
        z = lam_bar / self.lam_L
        if np.any(z >= LOCKING_RATIO):
            raise ChainLockingError(
                f"chain stretch ratio {float(np.max(z)):.4f} >= {LOCKING_RATIO}; "
                "network is locked")
        return F, J, w, C, lam_bar, z

    def _chain_force(self, z):
        """dPsi_eq/dlam_bar and its lam_bar derivative.

        The Pade beta is not the exact inverse Langevin, so the derivative
        keeps the correction term (z + 1/beta - coth beta).
        """
        b = langevin_beta(z)
        b1 = _langevin_beta_d1(z)
        b2 = _langevin_beta_d2(z)
        gap = z + 1.0 / b - _coth(b)
        h = self.G_eq * self.lam_L * (b + b1 * gap)
        dgap = 1.0 + b1 * (_csch2(b) - 1.0 / (b * b))
        h1 = self.G_eq * (b1 + b2 * gap + b1 * dgap)
        return h, h1

    def internal_rest_state(self, n_points: int) -> np.ndarray:
        """Identity internal tensors, shape (n_points, n_branches, 3, 3)."""
        A = np.zeros((n_points, self.n_branches, 3, 3))
        A[..., 0, 0] = A[..., 1, 1] = A[..., 2, 2] = 1.0
        return A

    # -- energy and stress ------------------------------------------------

    def energy(self, F, A):
        F, single = _batched(F)
        A = np.asarray(A, dtype=np.float64)
        if single:
            A = A[None]
        F, J, w, C, lam_bar, z = self._split(F)
        b = langevin_beta(z)
        psi = self.G_eq * self.lam_L ** 2 * (z * b + np.log(b) - _log_sinh(b) - self.C0)
        psi = psi + 0.5 * self.kappa * (J - 1.0) ** 2
        Ainv = np.linalg.inv(A)
        Cbar = w[..., None, None] * C
        s = np.einsum("...ij,...bij->...b", Cbar, Ainv)
        G = np.array([g for g, _ in self.branches])
        psi = psi + 0.5 * np.einsum("b,...b->...", G, s - 3.0)
        return psi[0] if single else psi

    def piola(self, F, A):
        F, single = _batched(F)
        A = np.asarray(A, dtype=np.float64)
        if single:
            A = A[None]
        F, J, w, C, lam_bar, z = self._split(F)
        FiT = _inv_transpose(F)
        wN = w[..., None, None]
        lb2 = (lam_bar ** 2)[..., None, None]

        h, _ = self._chain_force(z)
        D = (wN * F - lb2 * FiT) / (3.0 * lam_bar[..., None, None])
        P = h[..., None, None] * D

        P = P + (self.kappa * ((J - 1.0) * J))[..., None, None] * FiT

        Ainv = np.linalg.inv(A)
        FA = np.einsum("...ij,...bjk->...bik", F, Ainv)
        s = wN[..., None] * np.einsum("...ij,...bij->...b", C, Ainv)[..., None, None]
        G = np.array([g for g, _ in self.branches])[:, None, None]
        P = P + np.sum(G * (wN[..., None] * FA - (s / 3.0) * FiT[..., None, :, :]),
                       axis=-3)
        return P[0] if single else P

    def tangent(self, F, A):
        """Analytic dP/dF at frozen internal tensors, shape (..., 3, 3, 3, 3)."""
        F, single = _batched(F)
        A = np.asarray(A, dtype=np.float64)
        if single:
            A = A[None]
        F, J, w, C, lam_bar, z = self._split(F)
        FiT = _inv_transpose(F)
        wN = w[..., None, None]
        lbN = lam_bar[..., None, None]
        JN = J[..., None, None]

        ident = np.broadcast_to(_IDENT4, F.shape + (3, 3))
        w4 = w[..., None, None, None, None]
        lb4 = lam_bar[..., None, None, None, None]

        # equilibrium network
        h, h1 = self._chain_force(z)
        D = (wN * F - lbN ** 2 * FiT) / (3.0 * lbN)
        h4 = h[..., None, None, None, None]
        h14 = h1[..., None, None, None, None]
        T = (h14 - h4 / lb4) * _outer4(D, D)
        T = T + (h4 / (3.0 * lb4)) * (
            w4 * ident
            - (2.0 / 3.0) * w4 * _outer4(F, FiT)
            - 2.0 * lb4 * _outer4(FiT, D)
            + lb4 ** 2 * _cross4(FiT, FiT))

        # volumetric
        k = self.kappa
        J4 = J[..., None, None, None, None]
        T = T + k * (2.0 * J4 - 1.0) * J4 * _outer4(FiT, FiT)
        T = T - k * (J4 ** 2 - J4) * _cross4(FiT, FiT)

        # branches
        Ainv = np.linalg.inv(A)
        for bidx, (G, _) in enumerate(self.branches):
            Ai = Ainv[..., bidx, :, :]
            FA = np.einsum("...ij,...jk->...ik", F, Ai)
            s = wN * np.einsum("...ij,...ij->...", C, Ai)[..., None, None]
            s4 = s[..., None, None]
            T = T + G * (
                -(2.0 / 3.0) * w4 * _outer4(FA, FiT)
                + w4 * np.einsum("ik,...LJ->...iJkL", _EYE, Ai)
                + (2.0 / 9.0) * s4 * _outer4(FiT, FiT)
                - (2.0 / 3.0) * w4 * _outer4(FiT, FA)
                + (s4 / 3.0) * _cross4(FiT, FiT))
        return T[0] if single else T

    def cauchy(self, F, A):
        F, single = _batched(F)
        A = np.asarray(A, dtype=np.float64)
        if single:
            A = A[None]
        J = _det33(F)
        P = self.piola(F, A)
        sig = np.einsum("...iJ,...kJ->...ik", P, F) / J[..., None, None]
        out = tensor_to_sym6(sig)
        return out[0] if single else out

    def equilibrium_only(self) -> "ViscoMaterial":
        """Copy of this material with the non-equilibrium branches removed."""
        return ViscoMaterial(G_eq=self.G_eq, lam_L=self.lam_L, kappa=self.kappa,
                             rho0=self.rho0, branches=())

    # -- internal variable evolution --------------------------------------

    def evolve_internal(self, A, Cbar, dt):
        """One backward-Euler step of the branch flow rule.

        A_new = (A + (dt/tau) C_bar) / (1 + dt/tau), renormalized to
        det A_new = 1. ``A`` has shape (..., n_branches, 3, 3), ``Cbar``
        broadcasts over the branch axis.
        """
        A = np.asarray(A, dtype=np.float64)
        single = A.ndim == 3
        if single:
            A = A[None]
        Cb, csingle = _batched(Cbar)
        Cb = Cb[..., None, :, :]
        taus = np.array([t for _, t in self.branches])[:, None, None]
        r = dt / taus
        Anew = (A + r * Cb) / (1.0 + r)
        det = np.asarray(np.linalg.det(Anew))[..., None, None]
        out = Anew / np.cbrt(det)
        return out[0] if single else out


def unimodular_cg(F):
    """C_bar = J^(-2/3) F^T F for batched F."""
    F, single = _batched(F)
    J = _det33(F)
    C = np.einsum("...ji,...jk->...ik", F, F)
    out = J[..., None, None] ** (-2.0 / 3.0) * C
    return out[0] if single else out


# -- mesh-level stress utilities ------------------------------------------


def tet_deformation_gradient(mesh, u):
    """Per-element deformation gradient for a linear tet mesh.

    Parameters: ``mesh`` with ``nodes`` (n, 3) and ``tets`` (m, 4),
    displacement ``u`` (n, 3). Returns (m, 3, 3).
    """
    X = mesh.nodes
    x = X + np.asarray(u, dtype=np.float64)
    t = mesh.tets
    EX = np.stack([X[t[:, k]] - X[t[:, 0]] for k in (1, 2, 3)], axis=-1)
    Ex = np.stack([x[t[:, k]] - x[t[:, 0]] for k in (1, 2, 3)], axis=-1)
    return Ex @ np.linalg.inv(EX)


def project_stress_to_nodes(mesh, tet_sig6):
    """Volume-weighted projection of per-tet stress 6-vectors to mesh nodes.

    Every node must touch at least one tet; an isolated node has no
    defined stress and raises ValueError.
    """
    tet_sig6 = np.asarray(tet_sig6, dtype=np.float64)
    vols = mesh.tet_volumes()
    n = mesh.nodes.shape[0]
    acc = np.zeros((n, tet_sig6.shape[-1]))
    wsum = np.zeros(n)
    for k in range(4):
        idx = mesh.tets[:, k]
        np.add.at(acc, idx, vols[:, None] * tet_sig6)
        np.add.at(wsum, idx, vols)
    if np.any(wsum <= 0.0):
        raise ValueError("mesh has isolated nodes; nodal stress undefined")
    return acc / wsum[:, None]


# -- material (de)serialization -------------------------------------------


def material_to_json(mat) -> dict:
    if isinstance(mat, NeoHookeanMaterial):
        return {"model": "neo_hookean", "mu": mat.mu, "lambda": mat.lam}
    if isinstance(mat, ViscoMaterial):
        return {"model": "visco",
                "G_eq": mat.G_eq, "lambda_L": mat.lam_L, "kappa": mat.kappa,
                "rho0": mat.rho0,
                "branches": [{"G": g, "tau": t} for g, t in mat.branches]}
    raise TypeError(f"unknown material {type(mat).__name__}")


def material_from_json(doc) -> object:
    model = doc.get("model")
    if model == "neo_hookean":
        return NeoHookeanMaterial(mu=float(doc["mu"]), lam=float(doc["lambda"]))
    if model == "visco":
        branches = tuple((float(b["G"]), float(b["tau"])) for b in doc.get("branches", []))
        return ViscoMaterial(G_eq=float(doc["G_eq"]), lam_L=float(doc["lambda_L"]),
                             kappa=float(doc["kappa"]), rho0=float(doc["rho0"]),
                             branches=branches)
    raise ValueError(f"unknown material model {model!r}")
