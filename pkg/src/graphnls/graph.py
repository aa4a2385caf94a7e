"""Compact metric graphs and their P1 finite-element discretization.

A field on the graph is a plain coefficient vector over the global degrees of
freedom of a :class:`Discretization`; vertex DOFs are shared by every incident
edge, so continuity holds by construction and the Kirchhoff flux condition is
the natural boundary condition of the weak form.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .exceptions import (
    DisconnectedGraph,
    EmptyGraph,
    GraphError,
    InvalidExponent,
    LinearSolveFailure,
    NonPositiveLength,
)

DEFAULT_CELLS = 64
MIN_LOOP_CELLS = 3
MASS_SCHEMES = ("blended", "consistent")


@dataclass(frozen=True)
class Edge:
    tail: str
    head: str
    length: float
    cells: int | None = None

    @property
    def is_loop(self) -> bool:
        return self.tail == self.head


@dataclass(frozen=True)
class MetricGraph:
    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    total_length: float = field(init=False)

    def __post_init__(self):
        total = 0.0
        for e in self.edges:
            total += e.length
        object.__setattr__(self, "total_length", total)

    def degree(self, vertex: str) -> int:
        return sum((e.tail == vertex) + (e.head == vertex) for e in self.edges)

    def to_dict(self) -> dict:
        edges = []
        for e in self.edges:
            item = {"from": e.tail, "to": e.head, "length": e.length}
            if e.cells is not None:
                item["cells"] = e.cells
            edges.append(item)
        return {"vertices": list(self.vertices), "edges": edges}

    def digest(self) -> str:
        """SHA-256 of the canonical JSON description."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_graph(description: Mapping) -> MetricGraph:
    """Validate a graph description and return a :class:`MetricGraph`.

    Parameters
    ----------
    description : mapping
        ``{"vertices": [names], "edges": [{"from", "to", "length", "cells"}]}``.
        ``vertices`` may be omitted, in which case it is inferred from the
        edge endpoints in order of first appearance.

    Raises
    ------
    EmptyGraph, NonPositiveLength, DisconnectedGraph, GraphError
    """
    raw_edges = list(description.get("edges") or [])
    if not raw_edges:
        raise EmptyGraph("graph description has no edges")

    edges = []
    seen: list[str] = []
    for i, item in enumerate(raw_edges):
        try:
            tail, head = str(item["from"]), str(item["to"])
            length = float(item["length"])
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphError(f"edge {i} is malformed: {item!r}") from exc
        if not math.isfinite(length) or length <= 0.0:
            raise NonPositiveLength(
                f"edge {i} ({tail}->{head}) has non-positive or non-finite length {length!r}"
            )
        cells = item.get("cells")
        if cells is not None:
            cells = int(cells)
            if cells < 1:
                raise GraphError(f"edge {i} ({tail}->{head}) requests {cells} cells")
        edges.append(Edge(tail, head, length, cells))
        for v in (tail, head):
            if v not in seen:
                seen.append(v)

    if description.get("vertices") is not None:
        vertices = [str(v) for v in description["vertices"]]
        if len(set(vertices)) != len(vertices):
            raise GraphError("duplicate vertex names")
        unknown = [v for v in seen if v not in vertices]
        if unknown:
            raise GraphError(f"edges reference undeclared vertex {unknown[0]!r}")
    else:
        vertices = seen

    _check_connected(vertices, edges)
    return MetricGraph(tuple(vertices), tuple(edges))


def _check_connected(vertices: Sequence[str], edges: Sequence[Edge]) -> None:
    adjacency: dict[str, set[str]] = {v: set() for v in vertices}
    for e in edges:
        adjacency[e.tail].add(e.head)
        adjacency[e.head].add(e.tail)
    start = vertices[0]
    reached = {start}
    stack = [start]
    while stack:
        for w in adjacency[stack.pop()]:
            if w not in reached:
                reached.add(w)
                stack.append(w)
    for v in vertices:
        if v not in reached:
            raise DisconnectedGraph(f"vertex {v!r} is not connected to {start!r}")


def load_graph(path: str | Path) -> MetricGraph:
    with open(path, encoding="utf-8") as fh:
        return build_graph(json.load(fh))


# convenience constructors used throughout tests and the CLI


def interval(length: float = math.pi, cells: int | None = None) -> MetricGraph:
    edge = {"from": "a", "to": "b", "length": length}
    if cells is not None:
        edge["cells"] = cells
    return build_graph({"vertices": ["a", "b"], "edges": [edge]})


def star(n_edges: int = 3, length: float = 1.0) -> MetricGraph:
    edges = [{"from": "hub", "to": f"leaf{i}", "length": length} for i in range(n_edges)]
    return build_graph({"edges": edges})


def loop(length: float = 2 * math.pi) -> MetricGraph:
    return build_graph({"vertices": ["o"], "edges": [{"from": "o", "to": "o", "length": length}]})


def lollipop(loop_length: float = 2.0, tail_length: float = 1.0) -> MetricGraph:
    return build_graph(
        {
            "vertices": ["o", "tip"],
            "edges": [
                {"from": "o", "to": "o", "length": loop_length},
                {"from": "o", "to": "tip", "length": tail_length},
            ],
        }
    )


class Discretization:
    """Continuous piecewise-linear elements on every edge of a metric graph.

    Attributes
    ----------
    graph : MetricGraph
    cells : tuple of int
        Cell count per edge.
    n_dofs : int
    vertex_dofs : dict
        Vertex name -> global DOF index (shared by all incident edges).
    edge_dofs : list of ndarray
        Global DOF indices of the nodes of each edge, ordered tail -> head.
    A, M, S : scipy.sparse.csr_matrix
        Stiffness, mass and H^1 (``A + M``) matrices.

    Notes
    -----
    ``mass_scheme="consistent"`` is the exact L^2 Gram matrix of the hat
    functions.  The default ``"blended"`` averages it with the lumped mass;
    both reproduce ``1^T M 1 = ell`` and stay symmetric positive definite, but
    the blend cancels the leading O(h^2) eigenvalue error of P1 elements.
    Integrals of ``|u|^q`` always use Gauss quadrature regardless of scheme.
    """

    def __init__(
        self,
        graph: MetricGraph,
        cells: Sequence[int],
        quad_order: int = 5,
        mass_scheme: str = "blended",
    ):
        if mass_scheme not in MASS_SCHEMES:
            raise ValueError(f"mass_scheme must be one of {MASS_SCHEMES}, got {mass_scheme!r}")
        if quad_order < 2:
            raise ValueError(f"quad_order must be >= 2, got {quad_order}")
        if len(cells) != len(graph.edges):
            raise ValueError("one cell count per edge is required")
        self.graph = graph
        self.cells = tuple(int(c) for c in cells)
        self.quad_order = int(quad_order)
        self.mass_scheme = mass_scheme

        self.vertex_dofs = {v: i for i, v in enumerate(graph.vertices)}
        next_dof = len(graph.vertices)
        edge_dofs = []
        elem_dofs = []
        elem_h = []
        elem_edge = []
        for k, (e, n) in enumerate(zip(graph.edges, self.cells)):
            if n < 1:
                raise ValueError(f"edge {k} needs at least one cell")
            interior = np.arange(next_dof, next_dof + n - 1)
            next_dof += n - 1
            nodes = np.concatenate(([self.vertex_dofs[e.tail]], interior, [self.vertex_dofs[e.head]]))
            edge_dofs.append(nodes)
            elem_dofs.append(np.column_stack((nodes[:-1], nodes[1:])))
            elem_h.append(np.full(n, e.length / n))
            elem_edge.append(np.full(n, k))
        self.n_dofs = next_dof
        self.edge_dofs = edge_dofs
        self.elem_dofs = np.vstack(elem_dofs)
        self.elem_h = np.concatenate(elem_h)
        self.elem_edge = np.concatenate(elem_edge)

        x, w = np.polynomial.legendre.leggauss(self.quad_order)
        self.quad_points = 0.5 * (x + 1.0)
        self.quad_weights = 0.5 * w
        self._basis = np.column_stack((1.0 - self.quad_points, self.quad_points))

        self.A, self.M = self._assemble()
        self.S = (self.A + self.M).tocsr()
        self._s_norm = float(abs(self.S).sum(axis=1).max())
        self._lu = None
        self._ones = np.ones(self.n_dofs)

    def _assemble(self):
        h = self.elem_h
        i, j = self.elem_dofs[:, 0], self.elem_dofs[:, 1]
        rows = np.concatenate((i, j, i, j))
        cols = np.concatenate((i, j, j, i))
        a_vals = np.concatenate((1 / h, 1 / h, -1 / h, -1 / h))
        if self.mass_scheme == "consistent":
            m_diag, m_off = h / 3, h / 6
        else:
            # mean of consistent and lumped element masses: O(h^4) eigenvalues in 1D
            m_diag, m_off = 5 * h / 12, h / 12
        m_vals = np.concatenate((m_diag, m_diag, m_off, m_off))
        shape = (self.n_dofs, self.n_dofs)
        A = sparse.coo_matrix((a_vals, (rows, cols)), shape=shape).tocsr()
        M = sparse.coo_matrix((m_vals, (rows, cols)), shape=shape).tocsr()
        # float addition commutes, so this makes both matrices exactly symmetric
        A = ((A + A.T) * 0.5).tocsr()
        M = ((M + M.T) * 0.5).tocsr()
        A.sort_indices()
        M.sort_indices()
        return A, M

    # -- quadrature -------------------------------------------------------

    def quad_values(self, u: np.ndarray) -> np.ndarray:
        """Values of ``u`` at the Gauss points, shape ``(n_cells, quad_order)``."""
        return u[self.elem_dofs] @ self._basis.T

    def integrate_power(self, u: np.ndarray, q: float) -> float:
        """Gauss quadrature of ``int |u|^q dx`` over the graph."""
        if not q >= 1:
            raise InvalidExponent(f"exponent q must be >= 1, got {q!r}")
        vals = np.abs(self.quad_values(u)) ** q
        return float(np.sum((vals @ self.quad_weights) * self.elem_h))

    def nonlinear_load(self, u: np.ndarray, p: float) -> np.ndarray:
        """Weak load vector ``N_i = int |u|^{p-2} u phi_i dx``.

        Uses the same rule as :meth:`integrate_power`, so ``N`` is the exact
        gradient of ``(1/p) * integrate_power(u, p)``.
        """
        vals = self.quad_values(u)
        f = np.abs(vals) ** (p - 2) * vals
        local = (f * self.quad_weights * self.elem_h[:, None]) @ self._basis
        return np.bincount(self.elem_dofs.ravel(), weights=local.ravel(), minlength=self.n_dofs)

    def nonlinear_jacobian(self, u: np.ndarray, p: float) -> sparse.csr_matrix:
        """Derivative of :meth:`nonlinear_load`: ``(p-1) int |u|^{p-2} phi_i phi_j dx``."""
        vals = self.quad_values(u)
        f = (p - 1) * np.abs(vals) ** (p - 2) * self.quad_weights * self.elem_h[:, None]
        B = self._basis
        local = np.einsum("eq,qa,qb->eab", f, B, B)
        i, j = self.elem_dofs[:, 0], self.elem_dofs[:, 1]
        rows = np.concatenate((i, j, i, j))
        cols = np.concatenate((i, j, j, i))
        data = np.concatenate((local[:, 0, 0], local[:, 1, 1], local[:, 0, 1], local[:, 1, 0]))
        shape = (self.n_dofs, self.n_dofs)
        return sparse.coo_matrix((data, (rows, cols)), shape=shape).tocsr()

    # -- bilinear forms ----------------------------------------------------

    def mass(self, u: np.ndarray) -> float:
        return float(u @ (self.M @ u))

    def kinetic(self, u: np.ndarray) -> float:
        return float(u @ (self.A @ u))

    def h1_norm(self, u: np.ndarray) -> float:
        return math.sqrt(max(float(u @ (self.S @ u)), 0.0))

    def mean_value(self, u: np.ndarray) -> float:
        return float(self._ones @ (self.M @ u)) / self.graph.total_length

    def constant(self, value: float) -> np.ndarray:
        return np.full(self.n_dofs, float(value))

    def normalize(self, u: np.ndarray, mu: float) -> np.ndarray:
        """Rescale ``u`` to mass ``mu``; applied twice to absorb round-off."""
        v = u * math.sqrt(mu / self.mass(u))
        return v * math.sqrt(mu / self.mass(v))

    # -- linear solves -------------------------------------------------------

    def solve_h1(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``S x = rhs`` with a cached sparse LU factorization."""
        if self._lu is None:
            try:
                self._lu = splu(self.S.tocsc())
            except RuntimeError as exc:
                raise LinearSolveFailure(f"factorization of S failed: {exc}") from exc
        x = self._lu.solve(rhs)
        r = rhs - self.S @ x
        scale = np.linalg.norm(rhs)
        if np.linalg.norm(r) > 1e-13 * scale:
            x = x + self._lu.solve(r)
            r = rhs - self.S @ x
        # relative target 1e-12; on very fine meshes fall back to a backward-error bound
        limit = max(1e-12 * scale, 64 * np.finfo(float).eps * self._s_norm * np.linalg.norm(x))
        if not np.all(np.isfinite(x)) or np.linalg.norm(r) > limit:
            raise LinearSolveFailure(f"residual {np.linalg.norm(r):.3e} exceeds tolerance")
        return x

    # -- pointwise diagnostics -----------------------------------------------

    def edge_coordinates(self, edge: int) -> np.ndarray:
        n = self.cells[edge]
        return np.linspace(0.0, self.graph.edges[edge].length, n + 1)

    def edge_values(self, u: np.ndarray, edge: int) -> np.ndarray:
        return u[self.edge_dofs[edge]]

    def vertex_flux(self, u: np.ndarray) -> np.ndarray:
        """Sum of outgoing derivatives at each vertex, from one-sided differences.

        For a converged solution this vanishes to O(h) (Kirchhoff condition).
        """
        flux = np.zeros(len(self.graph.vertices))
        for k, e in enumerate(self.graph.edges):
            nodes = self.edge_dofs[k]
            h = e.length / self.cells[k]
            flux[self.vertex_dofs[e.tail]] += (u[nodes[1]] - u[nodes[0]]) / h
            flux[self.vertex_dofs[e.head]] += (u[nodes[-2]] - u[nodes[-1]]) / h
        return flux

    def sign_changes_along_edges(self, u: np.ndarray, tol: float = 0.0) -> int:
        """Number of nodal sign changes along each edge, summed over edges."""
        count = 0
        for nodes in self.edge_dofs:
            s = np.sign(np.where(np.abs(u[nodes]) > tol, u[nodes], 0.0))
            s = s[s != 0]
            count += int(np.count_nonzero(s[1:] != s[:-1]))
        return count


def assemble(
    graph: MetricGraph,
    cells_per_edge: int | Sequence[int] | None = None,
    quad_order: int = 5,
    mass_scheme: str = "blended",
) -> Discretization:
    """Build the P1 discretization of ``graph``.

    ``cells_per_edge`` may be a single count, one count per edge, or ``None``
    (use each edge's ``cells`` entry, falling back to ``DEFAULT_CELLS``).
    Loops always receive at least three cells.
    """
    n_edges = len(graph.edges)
    if cells_per_edge is None:
        cells = [e.cells if e.cells is not None else DEFAULT_CELLS for e in graph.edges]
    elif isinstance(cells_per_edge, (int, np.integer)):
        cells = [int(cells_per_edge)] * n_edges
    else:
        cells = [int(c) for c in cells_per_edge]
        if len(cells) != n_edges:
            raise ValueError(f"expected {n_edges} cell counts, got {len(cells)}")
    for k, (e, n) in enumerate(zip(graph.edges, cells)):
        if n < 1:
            raise ValueError(f"edge {k} needs at least one cell, got {n}")
        if e.is_loop and n < MIN_LOOP_CELLS:
            cells[k] = MIN_LOOP_CELLS
    return Discretization(graph, cells, quad_order, mass_scheme)
