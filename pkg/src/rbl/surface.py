"""Closed boundary hypersurfaces and their intrinsic calculus.

Two representations share one interface:

``BoundarySurface``
    parametric, sampled on a spectral chart (see :mod:`rbl.charts`). Derivatives
    are spectral, quadrature is Fejer/trapezoid, so smooth integrands converge
    faster than any power of the resolution.
``TriangulatedSurface``
    a closed triangle mesh with cotangent stiffness and lumped mass. First/second
    order accurate; tolerances for meshes are 10x looser.

Conventions: ``nu`` is the outward normal of the enclosed domain,
``II(v, w) = <D_v nu, w>`` so round spheres bounding balls have ``II > 0``, and
the Laplacian is the negative semi-definite one (``lap(x_i) = -2 x_i`` on the
unit sphere).
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidInputError, UnsupportedGeometryError
from .spaceform import gram_matrices

MESH_TOL_FACTOR = 10.0


def _values(f):
    return f.values if isinstance(f, BoundaryFunction) else np.asarray(f, dtype=float)


class BoundarySurface:
    """Parametric closed hypersurface sampled on a spectral chart.

    Parameters
    ----------
    space : SpaceForm
        Space form containing the enclosed domain.
    chart : Chart
        Parameter grid.
    X_ext, T_ext : ndarray
        Positions (ext grid, D) and parameter tangents (ext grid, d, D) on the
        extended grid.
    nu, II, H : ndarray
        Outward normal (nodes, D), second fundamental form in the parameter basis
        (nodes, d, d) and mean curvature (nodes,).
    """

    representation = "parametric"

    def __init__(self, space, chart, X_ext, T_ext, nu, II, H, family=None, params=None):
        self.space = space
        self.chart = chart
        self.family = family
        self.params = dict(params or {})
        self.intrinsic_dim = chart.dim

        gamma_ext = gram_matrices(space, T_ext)
        det = np.linalg.det(gamma_ext)
        if np.any(det <= 0):
            raise UnsupportedGeometryError("degenerate parametrisation (singular induced metric)")
        self._ginv_ext = np.linalg.inv(gamma_ext)
        self._J_ext = np.sqrt(det) * chart.orientation_ext()

        self.X = chart.restrict(X_ext)
        self.T = chart.restrict(T_ext)
        self.gamma = chart.restrict(gamma_ext)
        self.gamma_inv = chart.restrict(self._ginv_ext)
        self.nu = np.asarray(nu, dtype=float)
        self.II = np.asarray(II, dtype=float)
        if H is None:
            H = np.einsum("nij,nij->n", self.gamma_inv, self.II)
        self.H = np.asarray(H, dtype=float)
        self.resolution = None
        self.area_density = np.abs(chart.restrict(self._J_ext)) / chart.density()
        self.weights = self.area_density * chart.base_weights()

    @property
    def n_nodes(self):
        return self.chart.n_nodes

    @property
    def coord_dim(self):
        return self.X.shape[1]

    def rebuild(self, resolution):
        """Same catalog geometry at another resolution."""
        if self.family is None:
            raise InvalidInputError("surface has no catalog recipe to rebuild from")
        from .catalog import build_catalog_surface

        return build_catalog_surface(self.family, self.params, resolution)[0]

    @property
    def can_rebuild(self):
        return self.family is not None

    # calculus -----------------------------------------------------------------

    def partials(self, f):
        return self.chart.partials(_values(f))

    def gradient_components(self, f):
        """Contravariant components gamma^{ij} d_j f."""
        return np.einsum("nij,nj...->ni...", self.gamma_inv, self.partials(f))

    def gradient(self, f):
        """Surface gradient as ambient vectors, shape (n, D) (or (n, D, p))."""
        return np.einsum("ni...,nik->nk...", self.gradient_components(f), self.T)

    def laplacian(self, f):
        f = _values(f)
        ch = self.chart
        dF = ch.diff(ch.extend(f))
        g = len(ch.ext_shape)
        # contravariant flux J gamma^{ij} d_j f on the periodic grid
        gi = self._ginv_ext.reshape(ch.ext_shape + self._ginv_ext.shape[-2:])
        J = self._J_ext
        extra = dF.ndim - g - 1
        Jb = J.reshape(J.shape + (1,) * (extra + 1))
        flux = Jb * np.einsum("...ij,...j->...i" if extra == 0 else "...ij,...jp->...ip",
                              gi, dF)
        div = 0.0
        for a in range(g):
            comp = flux[(slice(None),) * g + (a,)]
            div = div + ch.diff(comp)[(slice(None),) * g + (a,)]
        out = div / J.reshape(J.shape + (1,) * extra)
        return ch.restrict(out)

    def grad_dot(self, f, g=None):
        df = self.partials(f)
        dg = df if g is None else self.partials(g)
        return np.einsum("ni,nij,nj->n", df, self.gamma_inv, dg)

    def second_form(self, f, g=None):
        """Pointwise II(grad f, grad g)."""
        a = self.gradient_components(f)
        b = a if g is None else self.gradient_components(g)
        return np.einsum("ni,nij,nj->n", a, self.II, b)

    def integrate(self, g):
        g = np.asarray(g, dtype=float)
        if g.shape[0] != self.n_nodes:
            raise InvalidInputError("integrand size does not match the surface")
        return np.tensordot(self.weights, g, axes=(0, 0))

    def dirichlet_energy(self, f):
        return self.integrate(self.grad_dot(f))

    def second_form_energy(self, f):
        return self.integrate(self.second_form(f))

    @property
    def area(self):
        return float(self.weights.sum())

    def principal_curvatures(self):
        """Eigenvalues of II relative to gamma at every node, ascending."""
        return np.stack([scipy.linalg.eigh(h, g, eigvals_only=True)
                         for h, g in zip(self.II, self.gamma)])

    def second_derivatives(self, f):
        """Parameter second partials d_i d_j f, shape (n, d, d, ...)."""
        ch = self.chart
        dF = ch.diff(ch.extend(_values(f)))
        g = len(ch.ext_shape)
        rows = []
        for a in range(ch.dim):
            comp = dF[(slice(None),) * g + (a,)]
            rows.append(ch.diff(comp))
        dd = np.stack(rows, axis=g)
        return ch.restrict(dd)

    # spectrum -------------------------------------------------------------------

    def eigen_decomposition(self, count, degree=None):
        """Lowest eigenpairs of -lap by Rayleigh-Ritz on a global spectral basis."""
        degree = self.chart.default_degree() if degree is None else int(degree)
        if degree > self.chart.max_degree():
            raise InvalidInputError("basis degree exceeds what the grid resolves")
        key = (int(count), degree)
        cache = self.__dict__.setdefault("_eigen_cache", {})
        for (c, d), res in cache.items():
            if d == degree and c >= count:
                return res[0][:count], res[1][:, :count]
        Y = self.chart.basis(degree)
        nb = Y.shape[1]
        if count < 1 or count > nb:
            raise InvalidInputError(
                f"requested {count} eigenpairs but the discretisation rank is {nb}")
        P = self.partials(Y)
        G = np.einsum("nij,njb->nib", self.gamma_inv, P)
        w = self.weights
        K = sum((P[:, i, :] * w[:, None]).T @ G[:, i, :] for i in range(self.intrinsic_dim))
        M = (Y * w[:, None]).T @ Y
        K = 0.5 * (K + K.T)
        M = 0.5 * (M + M.T)
        vals, vecs = scipy.linalg.eigh(K, M, subset_by_index=[0, count - 1])
        vals = np.where(np.abs(vals) < 1e-11 * max(1.0, abs(vals[-1])), 0.0, vals)
        funcs = Y @ vecs
        cache[key] = (vals, funcs)
        return vals, funcs


class TriangulatedSurface:
    """Closed simplicial boundary (triangles, or segments for curves) with vertex data.

    ``shape`` holds an ambient matrix S per vertex with ``II(v, w) = v^T S w`` for
    tangent vectors v, w given in ambient coordinates. ``H`` defaults to its trace
    over an orthonormal tangent frame.
    """

    representation = "triangulated"

    def __init__(self, space, vertices, faces, nu, shape, H=None, family=None, params=None):
        self.space = space
        self.X = np.asarray(vertices, dtype=float)
        self.faces = np.asarray(faces, dtype=int)
        self.nu = np.asarray(nu, dtype=float)
        self.shape = np.asarray(shape, dtype=float)
        self.family = family
        self.params = dict(params or {})
        self.resolution = None
        if self.faces.ndim != 2 or self.faces.shape[1] not in (2, 3):
            raise InvalidInputError("faces must be triangles or segments")
        if self.faces.min() < 0 or self.faces.max() >= self.X.shape[0]:
            raise InvalidInputError("face index out of range")
        self.intrinsic_dim = self.faces.shape[1] - 1
        self._build_operators()
        self.H = self._tangent_trace(self.shape) if H is None else np.asarray(H, dtype=float)

    @property
    def n_nodes(self):
        return self.X.shape[0]

    @property
    def coord_dim(self):
        return self.X.shape[1]

    @property
    def can_rebuild(self):
        return False

    def _tangent_projector(self):
        """Ambient-orthogonal projector onto the tangent space of the surface within the model."""
        sig = self.space.signature
        D = self.coord_dim
        nuv = self.nu
        P = np.broadcast_to(np.eye(D), (self.n_nodes, D, D)).copy()
        P -= np.einsum("ni,nj,j->nij", nuv, nuv, sig) / self.space.inner(nuv, nuv)[:, None, None]
        if self.space.kind != "euclidean":
            x = self.X
            P -= np.einsum("ni,nj,j->nij", x, x, sig) / self.space.inner(x, x)[:, None, None]
        return P

    def _tangent_trace(self, S):
        frames = self.tangent_frames()
        return np.einsum("nai,nij,naj->n", frames, S, frames)

    def tangent_frames(self):
        """Ambient-orthonormal tangent frames (n, d, D) at the vertices."""
        if "_frames" in self.__dict__:
            return self._frames
        P = self._tangent_projector()
        m = self.intrinsic_dim
        sig = self.space.signature
        frames = np.zeros((self.n_nodes, m, self.coord_dim))
        for i in range(self.n_nodes):
            cand = P[i]
            basis = []
            for col in np.argsort(-np.linalg.norm(cand, axis=0)):
                v = cand[:, col].copy()
                for b in basis:
                    v -= np.sum(v * sig * b) * b
                nrm = np.sum(v * sig * v)
                if nrm > 1e-12:
                    basis.append(v / np.sqrt(nrm))
                if len(basis) == m:
                    break
            frames[i] = basis
        self._frames = frames
        return frames

    def _build_operators(self):
        V, F = self.X, self.faces
        sig = self.space.signature
        m = self.intrinsic_dim
        E = V[F[:, 1:]] - V[F[:, :1]]
        gram = np.einsum("fak,k,fbk->fab", E, sig, E)
        det = np.linalg.det(gram)
        if np.any(det <= 0):
            raise UnsupportedGeometryError("degenerate face in mesh")
        self.face_area = np.sqrt(det) / (1.0 if m == 1 else 2.0)
        Gi = np.linalg.inv(gram)
        # barycentric differences: hat_a for a >= 1 is e_a, hat_0 is -(1, ..., 1)
        du = np.vstack([-np.ones(m), np.eye(m)])
        self._hat_grads = np.einsum("ab,fbc,fck->fak", du, Gi, E)
        n = self.n_nodes
        grads = self._hat_grads
        loc = np.einsum("fak,k,fbk->fab", grads, sig, grads) * self.face_area[:, None, None]
        rows = np.repeat(F, m + 1, axis=1).ravel()
        cols = np.tile(F, (1, m + 1)).ravel()
        self.stiffness = sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(n, n))
        lumped = np.zeros(n)
        np.add.at(lumped, F.ravel(), np.repeat(self.face_area / (m + 1), m + 1))
        if np.any(lumped <= 0):
            raise UnsupportedGeometryError("mesh has isolated vertices")
        self.weights = lumped

    @property
    def area(self):
        return float(self.face_area.sum())

    def face_gradient(self, f):
        f = _values(f)
        return np.einsum("fa...,fak->fk...", f[self.faces], self._hat_grads)

    def gradient(self, f):
        """Vertex gradients: area-weighted average of the face gradients."""
        gf = self.face_gradient(f)
        out = np.zeros((self.n_nodes,) + gf.shape[1:])
        wts = self.face_area.reshape((-1,) + (1,) * (gf.ndim - 1))
        for a in range(self.faces.shape[1]):
            np.add.at(out, self.faces[:, a], gf * wts)
        tot = np.zeros(self.n_nodes)
        np.add.at(tot, self.faces.ravel(), np.repeat(self.face_area, self.faces.shape[1]))
        return out / tot.reshape((-1,) + (1,) * (gf.ndim - 1))

    def laplacian(self, f):
        """Pointwise Laplacian from the lumped-mass weak form."""
        f = _values(f)
        Lf = self.stiffness @ f
        return -Lf / self.weights.reshape((-1,) + (1,) * (np.ndim(f) - 1))

    def grad_dot(self, f, g=None):
        a = self.gradient(f)
        b = a if g is None else self.gradient(g)
        return np.sum(a * self.space.signature * b, axis=1)

    def _face_shape(self):
        return self.shape[self.faces].mean(axis=1)

    def second_form(self, f, g=None):
        a = self.gradient(f)
        b = a if g is None else self.gradient(g)
        return np.einsum("ni,nij,nj->n", a, self.shape, b)

    def integrate(self, g):
        g = np.asarray(g, dtype=float)
        if g.shape[0] != self.n_nodes:
            raise InvalidInputError("integrand size does not match the surface")
        return np.tensordot(self.weights, g, axes=(0, 0))

    def dirichlet_energy(self, f, g=None):
        f = _values(f)
        g = f if g is None else _values(g)
        return float(g @ (self.stiffness @ f))

    def second_form_energy(self, f):
        gf = self.face_gradient(f)
        return float(np.sum(self.face_area * np.einsum("fi,fij,fj->f", gf, self._face_shape(), gf)))

    def principal_curvatures(self):
        fr = self.tangent_frames()
        m = np.einsum("nai,nij,nbj->nab", fr, self.shape, fr)
        return np.linalg.eigvalsh(0.5 * (m + np.swapaxes(m, 1, 2)))

    def eigen_decomposition(self, count, degree=None):
        n = self.n_nodes
        if count < 1 or count >= n - 1:
            raise InvalidInputError(f"requested {count} eigenpairs from a mesh with {n} vertices")
        M = sp.diags(self.weights)
        K = self.stiffness
        if n <= 600:
            vals, vecs = scipy.linalg.eigh(K.toarray(), M.toarray(), subset_by_index=[0, count - 1])
        else:
            vals, vecs = spla.eigsh(K, k=count, M=M, sigma=-1e-3, which="LM")
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
        vals = np.where(np.abs(vals) < 1e-10, 0.0, vals)
        norms = np.sqrt(np.einsum("n,nk,nk->k", self.weights, vecs, vecs))
        return vals, vecs / norms


@dataclass
class BoundaryFunction:
    """Scalar field on a boundary surface with lazily computed derivatives."""

    surface: object
    values: np.ndarray
    name: str = ""
    recipe: object = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.surface.n_nodes:
            raise InvalidInputError("function size does not match the surface node count")

    @cached_property
    def gradient(self):
        return self.surface.gradient(self.values)

    @cached_property
    def laplacian(self):
        return self.surface.laplacian(self.values)

    def on(self, surface):
        """Re-sample on another surface (requires a recipe)."""
        if self.recipe is None:
            raise InvalidInputError(f"function {self.name!r} cannot be re-sampled")
        return BoundaryFunction(surface, self.recipe(surface), self.name, self.recipe)


def surface_gradient(s, f):
    return s.gradient(_values(f))


def surface_laplacian(s, f):
    return s.laplacian(_values(f))


def integrate(s, g):
    return s.integrate(g)


def eigen_decomposition(s, count, degree=None):
    """Eigenpairs of -lap in increasing order as a list of (eigenvalue, BoundaryFunction)."""
    vals, funcs = s.eigen_decomposition(count, degree)
    return [(float(v), BoundaryFunction(s, funcs[:, i], name=f"eigen[{i}]"))
            for i, v in enumerate(vals)]


def random_band_limited(s, rng, modes=16, degree=None):
    """Seeded smooth field: random combination of the first ``modes`` eigenfunctions."""
    vals, funcs = s.eigen_decomposition(modes, degree)
    return funcs @ rng.normal(size=funcs.shape[1])


def min_relative_curvature(s):
    """Smallest eigenvalue of II relative to gamma at each node."""
    return s.principal_curvatures()[:, 0]
