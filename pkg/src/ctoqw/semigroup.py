"""Exact evolution of block states and the jump path-sum oracle.

The master-equation generator acts blockwise on a vertex-indexed state:

    d/dt rho(i) = G_i rho(i) + rho(i) G_i^dag + sum_{j != i} R[j->i] rho(j) R[j->i]^dag.

It never mixes in off-block-diagonal coherences, so the evolution is
represented on the block sector only, as a dense matrix of dimension
``sum_i d_i**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import BudgetError, ConvergenceError, PreconditionError
from .model import BlockState, VertexId, WalkModel


@dataclass(frozen=True)
class BlockGenerator:
    """Vectorized generator restricted to block-diagonal states.

    ``offsets[v]`` gives the slice of the stacked vec-vector holding block
    ``v``.  Trace preservation of a closed model shows up as a left null
    vector made of concatenated ``vec(Id_{d_i})``.
    """

    model: WalkModel
    matrix: np.ndarray
    offsets: dict[VertexId, slice]

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def stack(self, mu: BlockState) -> np.ndarray:
        out = np.zeros(self.dim, dtype=complex)
        for v in self.model.vertices:
            out[self.offsets[v.id]] = linalg.vec(mu.block(v.id, v.dim))
        return out

    def unstack(self, x: np.ndarray) -> BlockState:
        blocks = {}
        for v in self.model.vertices:
            blocks[v.id] = linalg.unvec(x[self.offsets[v.id]], (v.dim, v.dim))
        return BlockState(blocks)

    def trace_functional(self) -> np.ndarray:
        w = np.zeros(self.dim, dtype=complex)
        for v in self.model.vertices:
            w[self.offsets[v.id]] = linalg.vec(np.eye(v.dim))
        return w


def build_block_generator(model: WalkModel) -> BlockGenerator:
    offsets: dict[VertexId, slice] = {}
    pos = 0
    for v in model.vertices:
        offsets[v.id] = slice(pos, pos + v.dim**2)
        pos += v.dim**2
    mat = np.zeros((pos, pos), dtype=complex)
    eye = {v.id: np.eye(v.dim, dtype=complex) for v in model.vertices}
    for v in model.vertices:
        g = model.effective(v.id)
        s = offsets[v.id]
        mat[s, s] += np.kron(eye[v.id], g) + np.kron(g.conj(), eye[v.id])
    for src, dst, r in model.jumps():
        mat[offsets[dst], offsets[src]] += linalg.sandwich_matrix(r)
    return BlockGenerator(model, mat, offsets)


def lindblad_apply(model: WalkModel, mu: BlockState) -> dict[VertexId, np.ndarray]:
    """One application of the generator, returned as Hermitian blocks."""
    out: dict[VertexId, np.ndarray] = {}
    for v in model.vertices:
        g = model.effective(v.id)
        rho = mu.block(v.id, v.dim)
        acc = g @ rho + rho @ g.conj().T
        for src, r in model.in_edges(v.id):
            rho_src = mu.block(src, model.dim(src))
            acc += r @ rho_src @ r.conj().T
        out[v.id] = acc
    return out


def evolve(
    model: WalkModel,
    mu: BlockState,
    t: float,
    tol: float = 1e-10,
    generator: BlockGenerator | None = None,
) -> BlockState:
    """Propagate ``mu`` for time ``t`` through the exact matrix exponential.

    On models without escape defects the output trace is checked against
    one to ``max(tol, 1e-8) * (1 + t)``; a violation means the exponential
    lost accuracy (it should be machine precise at these sizes).
    """
    if t < 0:
        raise PreconditionError("evolution time must be nonnegative")
    gen = generator if generator is not None else build_block_generator(model)
    if t == 0:
        return mu.copy()
    prop = linalg.expm(t * gen.matrix)
    out = gen.unstack(prop @ gen.stack(mu))
    out.blocks = {k: linalg.herm(b) for k, b in out.blocks.items()}
    if not model.escaping_boundary():
        defect = abs(out.total_trace() - mu.total_trace())
        if defect > max(tol, 1e-8) * (1.0 + t):
            raise ConvergenceError(
                f"evolution lost trace mass {defect:.3e} on a closed model"
            )
    return out


def position_distribution(mu: BlockState) -> dict[VertexId, float]:
    """Marginal law of the position: vertex -> Tr rho(vertex)."""
    return {k: float(np.trace(b).real) for k, b in mu.blocks.items()}


def _support_vertices(model: WalkModel, mu: BlockState, atol: float = 0.0):
    out = []
    for v in model.vertices:
        if np.linalg.norm(mu.block(v.id, v.dim)) > atol:
            out.append(v.id)
    return out


def _paths_from(model: WalkModel, start: VertexId, n: int):
    """All vertex sequences of exactly n jumps starting at ``start``."""
    if n == 0:
        yield (start,)
        return
    stack = [(start,)]
    while stack:
        path = stack.pop()
        if len(path) == n + 1:
            yield path
            continue
        for dst, _ in model.out_edges(path[-1]):
            stack.append(path + (dst,))


def jump_tail_bound(c: float, t: float, n_max: int) -> float:
    """sum_{n > n_max} (c t)^n / n!, an upper bound on the neglected weight."""
    x = c * t
    total = 0.0
    term = x ** (n_max + 1) / math.factorial(n_max + 1)
    n = n_max + 1
    while term > 1e-300:
        total += term
        n += 1
        term *= x / n
        if n > n_max + 2000:
            break
    return float(total)


def dyson_partial(
    model: WalkModel,
    mu: BlockState,
    t: float,
    n_max: int,
    quad_points: int = 8,
    node_budget: int = 50_000_000,
) -> tuple[BlockState, float]:
    """Sum the jump expansion of the evolved state up to ``n_max`` jumps.

    Each term is a sum over vertex paths of a time-ordered integral of
    sandwich operators (free dwell segments interleaved with jumps),
    evaluated by tensorized Gauss-Legendre quadrature with ``quad_points``
    nodes per time dimension.  Returns the partial sum and the tail bound
    ``sum_{n > n_max} (C t)^n / n!`` on the trace weight of dropped terms.
    """
    if t < 0:
        raise PreconditionError("time must be nonnegative")
    if n_max < 0:
        raise PreconditionError("n_max must be nonnegative")

    support = _support_vertices(model, mu)
    total_nodes = 0
    for n in range(1, n_max + 1):
        n_paths = sum(len(list(_paths_from(model, s, n))) for s in support)
        total_nodes += n_paths * quad_points**n
    if total_nodes > node_budget:
        raise BudgetError(
            f"path enumeration needs {total_nodes} quadrature nodes, "
            f"budget is {node_budget}; lower n_max or quad_points"
        )

    props = {v.id: linalg.Propagator(model.effective(v.id)) for v in model.vertices}
    blocks = {
        v.id: np.zeros((v.dim, v.dim), dtype=complex) for v in model.vertices
    }

    for s in support:
        rho0 = mu.block(s, model.dim(s))
        e = props[s].at(t)
        blocks[s] += e @ rho0 @ e.conj().T

    for start in support:
        rho0 = mu.block(start, model.dim(start))
        for n in range(1, n_max + 1):
            for path in _paths_from(model, start, n):
                rmats = [model.jump(path[k], path[k + 1]) for k in range(n)]
                dest = path[-1]
                acc = np.zeros((model.dim(dest), model.dim(dest)), dtype=complex)
                for times, weights in linalg.simplex_quadrature_blocks(
                    n, t, quad_points
                ):
                    durations = np.diff(
                        np.concatenate(
                            [
                                np.zeros((times.shape[0], 1)),
                                times,
                                np.full((times.shape[0], 1), t),
                            ],
                            axis=1,
                        ),
                        axis=1,
                    )
                    np.clip(durations, 0.0, None, out=durations)
                    ops = props[path[0]].many(durations[:, 0])
                    for k in range(n):
                        ops = np.einsum("ab,nbc->nac", rmats[k], ops)
                        leg = props[path[k + 1]].many(durations[:, k + 1])
                        ops = np.einsum("nab,nbc->nac", leg, ops)
                    acc += np.einsum(
                        "n,nab,bc,ndc->ad", weights, ops, rho0, ops.conj()
                    )
                blocks[dest] += acc

    remainder = jump_tail_bound(model.rate_constant, t, n_max)
    return BlockState({k: linalg.herm(b) for k, b in blocks.items()}), remainder
