"""Reduced compliance objective for the filtered SIMP cantilever.

Pipeline per evaluation: screened-Poisson density filter (nodal), clamped
element means, SIMP interpolation, linear elasticity solve, compliance
``F = f . u``. The gradient is the element-mean of a second filter-type solve
whose right side carries the negative SIMP-weighted strain energy density;
for compliance the adjoint displacement coincides with the state, so no
second elasticity solve is needed.
"""

from dataclasses import dataclass, field

import numpy as np

from .fem import ElasticityAssembler, assemble_scalar_filter_operator, build_mesh, solve_spd

__all__ = [
    "ProblemSpec",
    "EvaluationRecord",
    "Evaluator",
    "default_problem",
    "apply_filter",
    "simp",
    "solve_state",
    "gradient",
]

PDE_REL_TOL = 1e-10


@dataclass(frozen=True)
class ProblemSpec:
    """Geometry, material, filter, and load data for one cantilever problem.

    The left edge is clamped (both displacement components). The load is a
    constant traction direction over a small disk, sampled at the 2x2 Gauss
    points of each element.
    """

    mesh: object
    volume_fraction: float = 0.5
    void_density: float = 1e-6
    penal: float = 3.0
    filter_radius: float = 0.1
    young_modulus: float = 1.0
    poisson_ratio: float = 0.3
    load_center: tuple = (2.95, 0.5)
    load_radius: float = 0.05
    load_direction: tuple = (0.0, -1.0)

    def __post_init__(self):
        if not 0.0 < self.volume_fraction < 1.0:
            raise ValueError(f"volume_fraction must be in (0, 1), got {self.volume_fraction}")
        if not 0.0 < self.void_density < 1.0:
            raise ValueError(f"void_density must be in (0, 1), got {self.void_density}")
        if self.penal <= 1.0:
            raise ValueError(f"penal must be > 1, got {self.penal}")
        if self.filter_radius <= 0.0:
            raise ValueError(f"filter_radius must be > 0, got {self.filter_radius}")
        if self.load_radius < 0.0:
            raise ValueError(f"load_radius must be >= 0, got {self.load_radius}")

    @property
    def filter_scale(self):
        """Screened-Poisson length scale eps = r_min / (2 sqrt(3))."""
        return self.filter_radius / (2.0 * np.sqrt(3.0))


def default_problem(nx=192, ny=64, lx=3.0, ly=1.0, **overrides):
    """Benchmark cantilever on [0, lx] x [0, ly]."""
    return ProblemSpec(mesh=build_mesh(nx, ny, lx, ly), **overrides)


@dataclass
class EvaluationRecord:
    """One objective (and optionally gradient) evaluation at a density."""

    compliance: float
    rho_tilde: np.ndarray = field(repr=False)       # nodal filtered density
    rho_tilde_e: np.ndarray = field(repr=False)     # clamped element means
    displacement: np.ndarray = field(repr=False)    # interleaved (ux, uy)
    gradient: np.ndarray = field(default=None, repr=False)  # element field
    filter_iters: int = 0
    state_iters: int = 0
    gradient_iters: int = 0


def simp(rho_tilde_e, spec):
    """SIMP interpolation ``r = rho0 + (1 - rho0) * x^s`` and its derivative.

    Input is clamped to [0, 1] first so fractional powers stay real.
    """
    x = np.clip(np.asarray(rho_tilde_e, dtype=float), 0.0, 1.0)
    scale = 1.0 - spec.void_density
    r = spec.void_density + scale * x ** spec.penal
    dr = spec.penal * scale * x ** (spec.penal - 1.0)
    return r, dr


class Evaluator:
    """Workspace for repeated objective/gradient evaluations on one problem.

    Assembles the (constant) filter operator and load vector once, reuses the
    elasticity sparsity pattern, and warm-starts each CG solve from the
    previous solution. Not safe for concurrent use; create one per run.
    """

    def __init__(self, spec, rel_tol=PDE_REL_TOL):
        self.spec = spec
        self.rel_tol = rel_tol
        mesh = spec.mesh
        self.mesh = mesh
        self.filter_op = assemble_scalar_filter_operator(mesh, spec.filter_scale)

        left = [n for n, tag in mesh.boundary_tags.items() if tag == "left"]
        dofs = np.sort(np.concatenate([2 * np.asarray(left), 2 * np.asarray(left) + 1]))
        self.fixed_dofs = dofs
        self.assembler = ElasticityAssembler(
            mesh, spec.young_modulus, spec.poisson_ratio, constrained_dofs=dofs)
        self.load = self._assemble_load()
        self._load_fixed = self.load.copy()
        self._load_fixed[dofs] = 0.0

        self._warm_rho_tilde = None
        self._warm_u = None
        self._warm_w = None

    def _assemble_load(self):
        """Disk load sampled at the Gauss points of every element."""
        mesh, spec = self.mesh, self.spec
        gp = 1.0 / np.sqrt(3.0)
        centers = mesh.element_centers()
        f = np.zeros(2 * mesh.num_nodes)
        weight = mesh.element_area / 4.0  # Gauss weight 1 x |J|
        cx, cy = spec.load_center
        dirx, diry = spec.load_direction
        for sx, sy in [(-gp, -gp), (gp, -gp), (gp, gp), (-gp, gp)]:
            px = centers[:, 0] + 0.5 * mesh.dx * sx
            py = centers[:, 1] + 0.5 * mesh.dy * sy
            inside = (px - cx) ** 2 + (py - cy) ** 2 <= spec.load_radius ** 2
            if not inside.any():
                continue
            shape = 0.25 * np.array([(1 - sx) * (1 - sy), (1 + sx) * (1 - sy),
                                     (1 + sx) * (1 + sy), (1 - sx) * (1 + sy)])
            elems = np.flatnonzero(inside)
            nodes = mesh.elements[elems]
            for a in range(4):
                np.add.at(f, 2 * nodes[:, a], weight * shape[a] * dirx)
                np.add.at(f, 2 * nodes[:, a] + 1, weight * shape[a] * diry)
        return f

    def _element_load_integrals(self, cell_values):
        """Nodal vector b with b_i = sum_e v_e * integral_e(phi_i)."""
        mesh = self.mesh
        w = np.repeat(cell_values, 4) * (mesh.element_area / 4.0)
        return np.bincount(mesh.elements.ravel(), weights=w, minlength=mesh.num_nodes)

    def element_means(self, nodal):
        return nodal[self.mesh.elements].mean(axis=1)

    def apply_filter(self, rho, warm=True):
        """Nodal filtered density: solve (eps^2 K + M) rho~ = M_e rho."""
        rho = np.asarray(rho, dtype=float)
        b = self._element_load_integrals(rho)
        x0 = self._warm_rho_tilde if warm else None
        rho_tilde, iters = solve_spd(self.filter_op, b, rel_tol=self.rel_tol, x0=x0)
        self._warm_rho_tilde = rho_tilde
        return rho_tilde, iters

    def evaluate(self, rho, need_gradient=False, warm=True):
        """Compliance (and optionally its gradient) at an element density."""
        rho = np.asarray(rho, dtype=float)
        rho_tilde, filter_iters = self.apply_filter(rho, warm=warm)
        rho_tilde_e = np.clip(self.element_means(rho_tilde), 0.0, 1.0)
        r, _ = simp(rho_tilde_e, self.spec)

        a = self.assembler.assemble(r)
        x0 = self._warm_u if warm else None
        u, state_iters = solve_spd(a, self._load_fixed, rel_tol=self.rel_tol, x0=x0)
        self._warm_u = u
        compliance = float(self.load @ u)

        record = EvaluationRecord(
            compliance=compliance, rho_tilde=rho_tilde, rho_tilde_e=rho_tilde_e,
            displacement=u, filter_iters=filter_iters, state_iters=state_iters)
        if need_gradient:
            self.attach_gradient(record)
        return record

    def attach_gradient(self, record, warm=True):
        """Compute the gradient field for a completed evaluation.

        One extra filter-type solve: (eps^2 K + M) w = -M_e (r'(rho~_e) E_e / |e|)
        with E_e the element strain energy of the state; the gradient is the
        element mean of w.
        """
        if record.gradient is not None:
            return record.gradient
        _, dr = simp(record.rho_tilde_e, self.spec)
        energy = self.assembler.element_energies(record.displacement)
        g = -self._element_load_integrals(dr * energy / self.mesh.element_area)
        x0 = self._warm_w if warm else None
        w, iters = solve_spd(self.filter_op, g, rel_tol=self.rel_tol, x0=x0)
        self._warm_w = w
        record.gradient = self.element_means(w)
        record.gradient_iters = iters
        return record.gradient


def apply_filter(rho, spec):
    """Nodal filtered density for a density field (one-shot convenience)."""
    rho_tilde, _ = Evaluator(spec).apply_filter(rho, warm=False)
    return rho_tilde


def solve_state(rho, spec):
    """Displacement and compliance at a density (one-shot convenience)."""
    record = Evaluator(spec).evaluate(rho, warm=False)
    return record.displacement, record.compliance


def gradient(rho, spec, record=None):
    """Element gradient field of the compliance at ``rho``.

    Reuses the state/filter solutions in ``record`` when provided.
    """
    ev = Evaluator(spec)
    if record is None:
        record = ev.evaluate(rho, warm=False)
    return ev.attach_gradient(record, warm=False)
