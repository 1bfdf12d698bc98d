"""Periodic parameter grids with spectral differentiation and quadrature.

Every parametric boundary surface is sampled on one of three charts:

``SphereChart``
    (theta, phi) on S^2. Derivatives use the double Fourier sphere trick: a node
    function is reflected onto theta in (pi, 2 pi) via f(2 pi - theta, phi + pi),
    which makes it smooth and doubly periodic, so plain FFT differentiation is
    spectrally accurate. Nodes sit at theta_j = (j + 1/2) pi / N (never on the
    poles) and integrate with Fejer's first rule in cos(theta).
``TorusChart``
    (u, v) on the flat torus, trapezoid rule.
``CircleChart``
    theta on a circle, trapezoid rule (one dimensional boundaries, n = 2).

The extended grid (``ext``) is the periodic computational grid; for the torus and
the circle it coincides with the node grid.
"""

import numpy as np
from scipy.special import sph_harm_y


def _spectral_derivative(F, axis, order=1):
    n = F.shape[axis]
    Fh = np.fft.rfft(F, axis=axis)
    k = np.arange(Fh.shape[axis], dtype=float)
    mult = (1j * k) ** order
    if n % 2 == 0 and order % 2 == 1:
        mult[-1] = 0.0
    shape = [1] * F.ndim
    shape[axis] = -1
    return np.fft.irfft(Fh * mult.reshape(shape), n=n, axis=axis)


def fejer_weights(n):
    """Fejer first-rule weights for int_0^pi h(theta) sin(theta) dtheta at (j+1/2)pi/n."""
    theta = (np.arange(n) + 0.5) * np.pi / n
    k = np.arange(1, n // 2 + 1)
    s = np.cos(2 * np.outer(theta, k)) / (4 * k**2 - 1)
    return 2.0 / n * (1 - 2 * s.sum(axis=1))


class Chart:
    dim = None
    kind = None

    @property
    def n_nodes(self):
        return int(np.prod(self.node_shape))

    def extend(self, f):
        f = np.asarray(f)
        return f.reshape(self.node_shape + f.shape[1:])

    def restrict(self, F):
        F = np.asarray(F)
        return F.reshape((self.n_nodes,) + F.shape[len(self.ext_shape):])

    def diff(self, F):
        """Partial derivatives on the extended grid, stacked on a new axis after the grid axes."""
        F = np.asarray(F, dtype=float)
        g = len(self.ext_shape)
        parts = [_spectral_derivative(F, axis=a) for a in range(g)]
        return np.stack(parts, axis=g)

    def partials(self, f):
        """Parameter partials of node values; shape (n_nodes, dim, ...)."""
        return self.restrict(self.diff(self.extend(f)))

    def ext_params(self):
        raise NotImplementedError

    def node_params(self):
        return self.restrict(self.ext_params())[: self.n_nodes]


class SphereChart(Chart):
    dim = 2
    kind = "sphere"

    def __init__(self, n):
        if n < 4:
            raise ValueError("sphere chart needs at least 4 latitude nodes")
        self.n = int(n)
        self.m = 2 * self.n
        self.node_shape = (self.n, self.m)
        self.ext_shape = (2 * self.n, self.m)
        self.theta_ext = (np.arange(2 * self.n) + 0.5) * np.pi / self.n
        self.phi = 2 * np.pi * np.arange(self.m) / self.m

    def ext_params(self):
        th, ph = np.meshgrid(self.theta_ext, self.phi, indexing="ij")
        return np.stack([th, ph], axis=-1)

    def node_params(self):
        return self.ext_params()[: self.n].reshape(self.n_nodes, 2)

    def extend(self, f):
        f = np.asarray(f)
        grid = f.reshape(self.node_shape + f.shape[1:])
        mirror = np.roll(grid[::-1], -(self.m // 2), axis=1)
        return np.concatenate([grid, mirror], axis=0)

    def restrict(self, F):
        F = np.asarray(F)
        return F[: self.n].reshape((self.n_nodes,) + F.shape[2:])

    def orientation_ext(self):
        """Sign making the chart Jacobian smooth across the reflected half of the grid."""
        return np.broadcast_to(np.sign(np.sin(self.theta_ext))[:, None], self.ext_shape)

    def density(self):
        """Parameter density factored out of the quadrature weights (sin theta)."""
        return np.repeat(np.sin(self.theta_ext[: self.n]), self.m)

    def base_weights(self):
        return np.repeat(fejer_weights(self.n) * (2 * np.pi / self.m), self.m)

    def basis(self, degree):
        """Real spherical harmonics of the parameter sphere up to ``degree`` at the nodes."""
        p = self.node_params()
        th, ph = p[:, 0], p[:, 1]
        cols = []
        for l in range(degree + 1):
            for m in range(-l, l + 1):
                y = sph_harm_y(l, abs(m), th, ph)
                if m == 0:
                    cols.append(y.real)
                elif m > 0:
                    cols.append(np.sqrt(2) * y.real)
                else:
                    cols.append(np.sqrt(2) * y.imag)
        return np.stack(cols, axis=1)

    def default_degree(self):
        return max(2, min(self.n // 2, 20))

    def max_degree(self):
        return self.n - 1


class TorusChart(Chart):
    dim = 2
    kind = "torus"

    def __init__(self, n1, n2=None):
        n2 = n1 if n2 is None else n2
        if min(n1, n2) < 4:
            raise ValueError("torus chart needs at least 4 nodes per direction")
        self.node_shape = (int(n1), int(n2))
        self.ext_shape = self.node_shape
        self.u = 2 * np.pi * np.arange(n1) / n1
        self.v = 2 * np.pi * np.arange(n2) / n2

    def ext_params(self):
        u, v = np.meshgrid(self.u, self.v, indexing="ij")
        return np.stack([u, v], axis=-1)

    def node_params(self):
        return self.ext_params().reshape(self.n_nodes, 2)

    def orientation_ext(self):
        return np.ones(self.ext_shape)

    def density(self):
        return np.ones(self.n_nodes)

    def base_weights(self):
        return np.full(self.n_nodes, (2 * np.pi) ** 2 / self.n_nodes)

    def basis(self, degree):
        p = self.node_params()
        bu = _fourier_1d(p[:, 0], degree)
        bv = _fourier_1d(p[:, 1], degree)
        return np.einsum("ni,nj->nij", bu, bv).reshape(self.n_nodes, -1)

    def default_degree(self):
        return max(2, min(min(self.node_shape) // 2 - 1, 8))

    def max_degree(self):
        return min(self.node_shape) // 2 - 1


class CircleChart(Chart):
    dim = 1
    kind = "circle"

    def __init__(self, n):
        if n < 4:
            raise ValueError("circle chart needs at least 4 nodes")
        self.node_shape = (int(n),)
        self.ext_shape = self.node_shape
        self.theta = 2 * np.pi * np.arange(n) / n

    def ext_params(self):
        return self.theta[:, None]

    def node_params(self):
        return self.theta[:, None]

    def orientation_ext(self):
        return np.ones(self.ext_shape)

    def density(self):
        return np.ones(self.n_nodes)

    def base_weights(self):
        return np.full(self.n_nodes, 2 * np.pi / self.n_nodes)

    def basis(self, degree):
        return _fourier_1d(self.theta, degree)

    def default_degree(self):
        return max(2, min(self.n_nodes // 2 - 1, 40))

    def max_degree(self):
        return self.n_nodes // 2 - 1


def _fourier_1d(t, degree):
    cols = [np.ones_like(t)]
    for j in range(1, degree + 1):
        cols.append(np.cos(j * t))
        cols.append(np.sin(j * t))
    return np.stack(cols, axis=1)
