"""OFF text meshes for user boundaries.

Format: a header line ``OFF``, a counts line ``n_vertices n_faces n_edges``, one
line of ambient coordinates per vertex and one line ``k i_1 ... i_k`` per face,
where ``k`` is 3 (triangles) or 2 (segments, for boundary curves). Blank lines and
``#`` comments are ignored. The coordinate count must equal the coordinate
dimension of the enclosing space form (4 for S^3 and H^3, for example).

Faces must be consistently oriented. The enclosed domain is the one that is
bounded in the conformal chart of the space form (stereographic from the antipode
of the pole for spheres), and the normal is flipped as a whole to point out of it.
"""

import numpy as np

from .errors import InvalidInputError, UnsupportedGeometryError
from .spaceform import SpaceForm
from .surface import TriangulatedSurface


def _tokens(text):
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line.split()


def parse_off(text):
    """Return ``(vertices, faces)`` from OFF text."""
    lines = list(_tokens(text))
    if not lines or lines[0][1] != ["OFF"]:
        raise InvalidInputError("OFF: first line must be the header 'OFF'")
    if len(lines) < 2:
        raise InvalidInputError("OFF: missing counts line")
    number, counts = lines[1]
    try:
        nv, nf = int(counts[0]), int(counts[1])
    except (ValueError, IndexError):
        raise InvalidInputError(f"OFF line {number}: counts line must start with two integers")
    body = lines[2:]
    if len(body) != nv + nf:
        raise InvalidInputError(f"OFF: expected {nv} vertex and {nf} face lines, found {len(body)} lines")
    try:
        verts = [[float(x) for x in toks] for _, toks in body[:nv]]
    except ValueError as exc:
        raise InvalidInputError(f"OFF: bad vertex coordinate ({exc})")
    if len({len(v) for v in verts}) != 1:
        raise InvalidInputError("OFF: vertex lines have different coordinate counts")
    faces = []
    for number, toks in body[nv:]:
        try:
            k = int(toks[0])
            idx = [int(x) for x in toks[1:1 + k]]
        except ValueError:
            raise InvalidInputError(f"OFF line {number}: face indices must be integers")
        if len(idx) != k or k not in (2, 3):
            raise InvalidInputError(f"OFF line {number}: faces must be segments or triangles")
        faces.append(idx)
    if len({len(f) for f in faces}) > 1:
        raise InvalidInputError("OFF: mixed face sizes")
    return np.array(verts, dtype=float), np.array(faces, dtype=int)


def format_off(vertices, faces):
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=int)
    out = ["OFF", f"{len(vertices)} {len(faces)} 0"]
    out += [" ".join(f"{x:.17g}" for x in v) for v in vertices]
    out += [" ".join(str(i) for i in [len(f), *f]) for f in faces]
    return "\n".join(out) + "\n"


def write_off(path, surface_or_vertices, faces=None):
    if faces is None:
        vertices, faces = surface_or_vertices.X, surface_or_vertices.faces
    else:
        vertices = surface_or_vertices
    with open(path, "w") as fh:
        fh.write(format_off(vertices, faces))


def _face_normals(space, X, faces):
    """Unnormalized face normals from generalized cross products, tangent to the model."""
    sig = space.signature
    V = X[faces]
    rows = [V[:, j] - V[:, 0] for j in range(1, faces.shape[1])]
    if space.kind != "euclidean":
        rows = [V.mean(axis=1)] + rows
    M = np.stack(rows, axis=1)
    D = X.shape[1]
    if M.shape[1] != D - 1:
        raise InvalidInputError(
            f"{faces.shape[1] - 1}-dimensional faces do not bound a domain in {space.kind} "
            f"space with {D} coordinates")
    c = np.stack([(-1) ** k * np.linalg.det(np.delete(M, k, axis=2)) for k in range(D)], axis=1)
    # rows of M are sig-orthogonal to sig c
    return c * sig


def _vertex_normals(space, X, faces):
    fn = _face_normals(space, X, faces)
    nu = np.zeros_like(X)
    for j in range(faces.shape[1]):
        np.add.at(nu, faces[:, j], fn)
    if space.kind != "euclidean":
        sig = space.signature
        nu -= (np.sum(nu * sig * X, axis=1) / np.sum(X * sig * X, axis=1))[:, None] * X
    norm2 = space.inner(nu, nu)
    if np.any(norm2 <= 0):
        raise UnsupportedGeometryError("vertex normal vanishes (inconsistent face orientation?)")
    return nu / np.sqrt(norm2)[:, None]


def _check_orientation(faces):
    if faces.shape[1] == 2:
        n = faces.max() + 1
        out_deg = np.bincount(faces[:, 0], minlength=n)
        in_deg = np.bincount(faces[:, 1], minlength=n)
        used = (out_deg + in_deg) > 0
        if np.any(out_deg[used] != 1) or np.any(in_deg[used] != 1):
            raise InvalidInputError("OFF curve is not a consistently oriented closed polygon")
        return
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    uniq, counts = np.unique(directed, axis=0, return_counts=True)
    if np.any(counts > 1):
        raise InvalidInputError("OFF faces are not consistently oriented")
    code = set(map(tuple, uniq))
    if any((b, a) not in code for a, b in uniq):
        raise InvalidInputError("OFF mesh is not closed")


def _outward_sign(space, X, nu):
    """+1 if nu points out of the region that is bounded in the chart, else -1."""
    y = space.model_to_chart(X)
    i = int(np.argmax(np.sum(y * y, axis=1)))
    d = y[i] / np.linalg.norm(y[i])
    eps = 1e-6 * max(1.0, np.linalg.norm(y[i]))
    v = (space.chart_to_model(y[i:i + 1] + eps * d) - space.chart_to_model(y[i:i + 1] - eps * d))[0]
    return 1.0 if space.inner(v, nu[i]) > 0 else -1.0


def _neighbours(n, faces):
    nbr = [set() for _ in range(n)]
    for f in faces:
        for a in f:
            nbr[a].update(f)
    return [np.array(sorted(s)) for s in nbr]


def estimate_shape(surface_space, X, faces, nu, frames):
    """Ambient shape matrices S with II(v, w) = v^T S w from a least-squares fit of the
    change of the vertex normal across the one-ring (then the two-ring if needed)."""
    sig = surface_space.signature
    n, m, D = frames.shape
    ring = _neighbours(n, faces)
    S = np.zeros((n, D, D))
    for i in range(n):
        nb = ring[i]
        if len(nb) < m + 2:
            nb = np.unique(np.concatenate([ring[j] for j in nb]))
        E = frames[i] * sig
        p = (X[nb] - X[i]) @ E.T
        q = (nu[nb] - nu[i]) @ E.T
        A, *_ = np.linalg.lstsq(p, q, rcond=None)
        A = 0.5 * (A + A.T)
        S[i] = E.T @ A @ E
    return S


def surface_from_off(text, space=None):
    """TriangulatedSurface from OFF text; ``space`` defaults to flat space of the
    coordinate dimension. II comes from fitted normal variations, so it is first-order
    accurate."""
    X, faces = parse_off(text)
    if space is None:
        space = SpaceForm.euclidean(X.shape[1])
    if X.shape[1] != space.coord_dim:
        raise InvalidInputError(
            f"OFF coordinates have dimension {X.shape[1]}, the space form needs {space.coord_dim}")
    if space.kind != "euclidean":
        res = space.on_model_residual(X)
        if np.max(res) > 1e-8:
            raise InvalidInputError(f"OFF vertices are off the model (residual {np.max(res):.2e})")
    _check_orientation(faces)
    nu = _vertex_normals(space, X, faces)
    nu *= _outward_sign(space, X, nu)
    probe = TriangulatedSurface(space, X, faces, nu, np.zeros((len(X), X.shape[1], X.shape[1])),
                                H=np.zeros(len(X)))
    S = estimate_shape(space, X, faces, nu, probe.tangent_frames())
    return TriangulatedSurface(space, X, faces, nu, S)


def read_off(path, space=None):
    with open(path) as fh:
        return surface_from_off(fh.read(), space)
