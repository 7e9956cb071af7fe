"""Finite element solver for linear tetrahedra at finite strain.

Single-point quadrature per element, analytic constitutive tangents,
Newton iterations with displacement boundary conditions. Quasi-static
steps retry with bisected boundary increments before giving up; dynamic
steps integrate with the trapezoidal Newmark scheme (gamma = 1/2,
beta = 1/4) on a lumped (row-sum) mass matrix, updating the viscous
internal tensors once per substep after displacement convergence.

Linear systems go through Jacobi-preconditioned conjugate gradients by
default with a direct sparse factorization as fallback (and as an
optional primary solver for large steps).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from .constitutive import NeoHookeanMaterial, ViscoMaterial, unimodular_cg
from .errors import DivergedSolve


@dataclass
class SolverConfig:
    """Newton / linear-solver / time-integration settings."""

    newton_rtol: float = 1e-3
    newton_atol: float = 1e-10
    newton_max_iter: int = 15
    newton_criterion: str = "residual"      # "residual" or "increment"
    linear_solver: str = "pcg"              # "pcg" or "direct"
    linear_rtol: float = 1e-8
    linear_maxiter_factor: int = 10
    max_bisections: int = 4
    dt: float = 0.002
    substeps: int = 5
    newmark_gamma: float = 0.5
    newmark_beta: float = 0.25

    @classmethod
    def lattice_defaults(cls) -> "SolverConfig":
        """Quasi-static lattice loading: loose residual-based Newton."""
        return cls(newton_rtol=1e-3, newton_atol=1e-10, newton_max_iter=15,
                   newton_criterion="residual")

    @classmethod
    def plate_defaults(cls) -> "SolverConfig":
        """Dynamic plate loading: tight increment-based Newton."""
        return cls(newton_rtol=1e-8, newton_atol=1e-8, newton_max_iter=50,
                   newton_criterion="increment")

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, doc: dict) -> "SolverConfig":
        known = {k: doc[k] for k in doc if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class SimState:
    """Displacement / velocity / acceleration plus viscous internal tensors."""

    u: np.ndarray                 # (n, 3)
    v: np.ndarray                 # (n, 3)
    a: np.ndarray                 # (n, 3)
    internal: np.ndarray          # (n_tets, n_branches, 3, 3) or None
    time: float = 0.0

    def copy(self) -> "SimState":
        return SimState(self.u.copy(), self.v.copy(), self.a.copy(),
                        None if self.internal is None else self.internal.copy(),
                        self.time)


class _NewtonFailure(Exception):
    def __init__(self, residual):
        super().__init__(f"newton failed, residual {residual}")
        self.residual = residual


class FemModel:
    """Precomputed element data for one mesh + material pair."""

    def __init__(self, mesh, material):
        self.mesh = mesh
        self.material = material
        self.n_dof = 3 * mesh.n_nodes

        X = mesh.nodes
        t = mesh.tets
        E = np.stack([X[t[:, k]] - X[t[:, 0]] for k in (1, 2, 3)], axis=-1)  # cols
        vol = np.linalg.det(E) / 6.0
        if np.any(vol <= 0.0):
            raise ValueError("mesh contains non-positive tet volumes")
        self.volumes = vol
        Einv = np.linalg.inv(E)                       # (ne, 3, 3)
        # shape-function gradients: G[e, a, J] = dN_a/dX_J
        G = np.empty((t.shape[0], 4, 3))
        G[:, 1:, :] = Einv
        G[:, 0, :] = -Einv.sum(axis=1)
        self.grads = G

        dof = (3 * t[:, :, None] + np.arange(3)[None, None, :])   # (ne, 4, 3)
        self.dof = dof.astype(np.int64)
        rows = np.broadcast_to(dof[:, :, :, None, None], dof.shape + (4, 3))
        cols = np.broadcast_to(dof[:, None, None, :, :], (t.shape[0], 4, 3, 4, 3))
        self._rows = rows.reshape(-1).astype(np.int32)
        self._cols = cols.reshape(-1).astype(np.int32)

        rho = getattr(material, "rho0", 0.0)
        mass_node = np.zeros(mesh.n_nodes)
        np.add.at(mass_node, t.ravel(), np.repeat(rho * vol / 4.0, 4))
        self.lumped_mass = np.repeat(mass_node, 3)    # (3n,)

    # -- kinematics -------------------------------------------------------

    def deformation_gradients(self, u):
        """F per element from nodal displacements, shape (ne, 3, 3)."""
        ue = u[self.mesh.tets]                        # (ne, 4, 3)
        F = np.einsum("eai,eaJ->eiJ", ue, self.grads)
        F[:, 0, 0] += 1.0
        F[:, 1, 1] += 1.0
        F[:, 2, 2] += 1.0
        return F

    def element_dets(self, u):
        return np.linalg.det(self.deformation_gradients(u))

    # -- assembly ---------------------------------------------------------

    def _piola(self, F, istate):
        if isinstance(self.material, ViscoMaterial):
            return self.material.piola(F, istate)
        return self.material.piola(F)

    def _tangent(self, F, istate):
        if isinstance(self.material, ViscoMaterial):
            return self.material.tangent(F, istate)
        return self.material.tangent(F)

    def internal_force(self, u, istate=None):
        """Assembled internal force vector, shape (3n,)."""
        F = self.deformation_gradients(u)
        P = self._piola(F, istate)
        fe = np.einsum("e,eiJ,eaJ->eai", self.volumes, P, self.grads)
        return np.bincount(self.dof.ravel(), weights=fe.ravel(),
                           minlength=self.n_dof)

    def tangent_matrix(self, u, istate=None):
        """Assembled tangent stiffness as CSR."""
        F = self.deformation_gradients(u)
        T = self._tangent(F, istate)
        ke = np.einsum("e,eiJkL,eaJ,ebL->eaibk", self.volumes, T,
                       self.grads, self.grads, optimize=True)
        K = coo_matrix((ke.reshape(-1), (self._rows, self._cols)),
                       shape=(self.n_dof, self.n_dof)).tocsr()
        return K

    def strain_energy(self, u, istate=None):
        F = self.deformation_gradients(u)
        if isinstance(self.material, ViscoMaterial):
            psi = self.material.energy(F, istate)
        else:
            psi = self.material.energy(F)
        return float(self.volumes @ psi)

    def kinetic_energy(self, v):
        return 0.5 * float(self.lumped_mass @ (v.reshape(-1) ** 2))

    def rest_state(self) -> SimState:
        n = self.mesh.n_nodes
        istate = None
        if isinstance(self.material, ViscoMaterial):
            istate = self.material.internal_rest_state(self.mesh.n_tets)
        return SimState(u=np.zeros((n, 3)), v=np.zeros((n, 3)),
                        a=np.zeros((n, 3)), internal=istate, time=0.0)


def assemble(model: FemModel, u, istate=None):
    """Residual vector and tangent matrix at a displacement state."""
    return model.internal_force(u, istate), model.tangent_matrix(u, istate)


# -- linear solve ----------------------------------------------------------


def _jacobi_pcg(K, b, rtol, maxiter):
    """Jacobi-preconditioned CG. Returns (x, converged)."""
    diag = K.diagonal()
    if np.any(diag <= 0.0):
        return None, False
    minv = 1.0 / diag
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, True
    z = minv * r
    p = z.copy()
    rz = r @ z
    for _ in range(maxiter):
        Kp = K @ p
        pKp = p @ Kp
        if pKp <= 0.0:
            return None, False       # lost positive definiteness
        alpha = rz / pKp
        x += alpha * p
        r -= alpha * Kp
        if np.linalg.norm(r) <= rtol * bnorm:
            return x, True
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, False


def _linear_solve(K, b, cfg: SolverConfig):
    n = b.size
    if cfg.linear_solver == "pcg":
        x, ok = _jacobi_pcg(K, b, cfg.linear_rtol, cfg.linear_maxiter_factor * n)
        if ok:
            return x
    try:
        return splu(K.tocsc()).solve(b)
    except RuntimeError as exc:
        raise _NewtonFailure(residual=np.inf) from exc


# -- newton ----------------------------------------------------------------


def _dirichlet_dofs(nodes):
    return (3 * np.asarray(nodes, dtype=np.int64)[:, None]
            + np.arange(3)[None, :]).reshape(-1)


def _newton(model: FemModel, u0, bc_nodes, bc_vals, cfg: SolverConfig,
            istate=None, inertia=None):
    """Solve the (quasi-)static or dynamic balance with prescribed nodes.

    ``inertia``, when given, is (c0, mass_vec, u_pred_flat): the residual
    gains mass * c0 * (u - u_pred) and the tangent gains c0 * mass on the
    diagonal. Returns the converged displacement field.
    """
    n = model.mesh.n_nodes
    u = u0.copy()
    u[bc_nodes] = bc_vals
    fixed = _dirichlet_dofs(bc_nodes)
    free = np.setdiff1d(np.arange(3 * n), fixed)
    if np.any(model.element_dets(u) <= 0.0):
        raise _NewtonFailure(residual=np.inf)

    r0_norm = None
    d0_norm = None
    res_norm = np.inf
    for it in range(cfg.newton_max_iter):
        r = model.internal_force(u, istate)
        if inertia is not None:
            c0, mass, u_pred = inertia
            r = r + mass * (c0 * (u.reshape(-1) - u_pred))
        rf = r[free]
        res_norm = np.linalg.norm(rf)
        if r0_norm is None:
            r0_norm = res_norm
        if cfg.newton_criterion == "residual" and \
                res_norm <= max(cfg.newton_rtol * r0_norm, cfg.newton_atol):
            return u
        if res_norm == 0.0:
            return u

        K = model.tangent_matrix(u, istate)
        if inertia is not None:
            c0, mass, _ = inertia
            K = K + coo_matrix((c0 * mass, (np.arange(3 * n), np.arange(3 * n))),
                               shape=K.shape).tocsr()
        Kff = K[free][:, free]
        d = _linear_solve(Kff, -rf, cfg)

        # backtrack until no element inverts
        alpha = 1.0
        for _ in range(6):
            u_try = u.copy()
            u_try.reshape(-1)[free] += alpha * d
            if np.all(model.element_dets(u_try) > 0.0):
                break
            alpha *= 0.5
        else:
            raise _NewtonFailure(residual=res_norm)
        u = u_try

        step = alpha * np.linalg.norm(d)
        if d0_norm is None:
            d0_norm = step
        if cfg.newton_criterion == "increment" and \
                step <= max(cfg.newton_rtol * d0_norm, cfg.newton_atol):
            return u
    raise _NewtonFailure(residual=res_norm)


def static_solve(model: FemModel, bc_nodes, bc_vals, cfg: SolverConfig,
                 u0=None, istate=None):
    """Quasi-static solve with prescribed displacements, bisecting the
    boundary increment on Newton failure (at most cfg.max_bisections)."""
    if u0 is None:
        u0 = np.zeros((model.mesh.n_nodes, 3))
    start_vals = u0[bc_nodes]
    target = np.asarray(bc_vals, dtype=np.float64)

    u = u0.copy()
    done = 0.0
    frac = 1.0
    bisections = 0
    while done < 1.0 - 1e-12:
        frac = min(frac, 1.0 - done)
        vals = start_vals + (done + frac) * (target - start_vals)
        try:
            u = _newton(model, u, bc_nodes, vals, cfg, istate=istate)
            done += frac
        except _NewtonFailure as exc:
            bisections += 1
            if bisections > cfg.max_bisections:
                raise DivergedSolve(
                    f"quasi-static solve diverged after {bisections - 1} "
                    f"bisections", residual=exc.residual) from exc
            frac *= 0.5
    return u


def solve_quasistatic_step(model: FemModel, state: SimState, bc_nodes, bc_vals,
                           cfg: SolverConfig) -> SimState:
    """Advance one quasi-static action step to new grip displacements."""
    u = static_solve(model, bc_nodes, bc_vals, cfg, u0=state.u,
                     istate=state.internal)
    return SimState(u=u, v=np.zeros_like(u), a=np.zeros_like(u),
                    internal=None if state.internal is None else state.internal.copy(),
                    time=state.time + 1.0)


def solve_dynamic_step(model: FemModel, state: SimState, bc_nodes,
                       bc_vals_per_substep, cfg: SolverConfig) -> SimState:
    """Advance one action step of Newmark substeps with prescribed grips.

    ``bc_vals_per_substep`` has shape (substeps, n_bc, 3): the prescribed
    displacement of every constrained node at the end of each substep.
    Internal tensors are updated after each substep from the converged
    end-of-substep deformation (staggered coupling); failures raise
    DivergedSolve without mutating ``state``.
    """
    if not isinstance(model.material, ViscoMaterial):
        raise TypeError("dynamic stepping requires the visco material")
    dt = cfg.dt
    beta = cfg.newmark_beta
    gamma = cfg.newmark_gamma
    c0 = 1.0 / (beta * dt * dt)
    mass = model.lumped_mass

    st = state.copy()
    for k in range(bc_vals_per_substep.shape[0]):
        u_pred = (st.u + dt * st.v + (0.5 - beta) * dt * dt * st.a).reshape(-1)
        try:
            u_new = _newton(model, st.u, bc_nodes, bc_vals_per_substep[k], cfg,
                            istate=st.internal, inertia=(c0, mass, u_pred))
        except _NewtonFailure as exc:
            raise DivergedSolve(f"dynamic substep {k} diverged",
                                residual=exc.residual) from exc
        a_new = (c0 * (u_new.reshape(-1) - u_pred)).reshape(-1, 3)
        v_new = st.v + dt * ((1.0 - gamma) * st.a + gamma * a_new)
        # At prescribed rows the Newmark recurrence is only marginally
        # stable: a velocity jump in the grip path leaves an alternating
        # acceleration that never decays and pollutes the reaction force.
        # Their kinematics are known, so take them from the path instead.
        v_bc = (bc_vals_per_substep[k] - st.u[bc_nodes]) / dt
        a_bc = (v_bc - st.v[bc_nodes]) / dt
        v_new[bc_nodes] = v_bc
        a_new[bc_nodes] = a_bc
        Cbar = unimodular_cg(model.deformation_gradients(u_new))
        st.internal = model.material.evolve_internal(st.internal, Cbar, dt)
        st.u, st.v, st.a = u_new, v_new, a_new
        st.time += dt
    return st


def reaction_force(model: FemModel, state: SimState, grip_nodes,
                   dynamic: bool = False):
    """Net grip force and torque about the x-axis through the deformed
    grip-face centroid.

    The reaction is the sum of residual rows (internal force, plus
    inertial force when dynamic) at the grip nodes: the force the grip
    mechanism applies to the body to sustain the prescribed motion.
    """
    r = model.internal_force(state.u, state.internal)
    if dynamic:
        r = r + model.lumped_mass * state.a.reshape(-1)
    rg = r.reshape(-1, 3)[grip_nodes]
    force = rg.sum(axis=0)
    xg = model.mesh.nodes[grip_nodes] + state.u[grip_nodes]
    c = xg.mean(axis=0)
    rel = xg - c
    torque_x = float(np.sum(rel[:, 1] * rg[:, 2] - rel[:, 2] * rg[:, 1]))
    return force, torque_x
