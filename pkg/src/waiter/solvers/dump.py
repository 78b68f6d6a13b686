"""Plain-text dumps of solver inputs for cross-checking with external tools."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .qp import QuadProgram
from .sdp import SdpProblem


def write_sdpa(prob: SdpProblem, path):
    """Write ``prob`` in SDPA sparse format (``.dat-s``).

    SDPA solves ``min c^T x  s.t.  sum_i x_i F_i - F_0 PSD``; our blocks are
    ``F0 + sum x_i F_i`` so the constant term changes sign. Linear rows and
    both sides of each equality go into one diagonal block.
    """
    n = prob.nvar
    lin_A = np.vstack([-prob.G, prob.A_eq, -prob.A_eq])
    lin_b = np.concatenate([-prob.h, prob.b_eq, -prob.b_eq])
    sizes = [blk.size for blk in prob.blocks]
    if lin_A.shape[0]:
        sizes.append(-lin_A.shape[0])
    lines = [f"{n}", f"{len(sizes)}", " ".join(str(s) for s in sizes),
             " ".join(repr(float(v)) for v in prob.c)]

    def emit(mat, blk, M):
        for i in range(M.shape[0]):
            for j in range(i, M.shape[1]):
                if M[i, j] != 0.0:
                    lines.append(f"{mat} {blk} {i + 1} {j + 1} {M[i, j]!r}")

    for b, blk in enumerate(prob.blocks, start=1):
        emit(0, b, -blk.F0)
        for k in range(n):
            emit(k + 1, b, blk.F[k])
    if lin_A.shape[0]:
        b = len(prob.blocks) + 1
        emit(0, b, np.diag(lin_b))
        for k in range(n):
            emit(k + 1, b, np.diag(lin_A[:, k]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_qp(prob: QuadProgram, path):
    """Dump QP data as labelled dense matrices, one section per field."""
    with open(path, "w") as fh:
        for name in ("P", "q", "Aeq", "beq", "Ain", "bin", "lb", "ub"):
            M = getattr(prob, name)
            if M is None:
                continue
            M = M.toarray() if sp.issparse(M) else np.atleast_2d(np.asarray(M, dtype=float))
            fh.write(f"# {name} {M.shape[0]} {M.shape[1]}\n")
            np.savetxt(fh, M, fmt="%.17g")


def read_qp(path) -> QuadProgram:
    fields = {}
    with open(path) as fh:
        text = fh.read().splitlines()
    i = 0
    while i < len(text):
        _, name, r, c = text[i].split()
        r, c = int(r), int(c)
        rows = [np.array(text[i + 1 + k].split(), dtype=float) for k in range(r)]
        fields[name] = np.array(rows).reshape(r, c)
        i += 1 + r
    vec = lambda k: None if k not in fields else fields[k].reshape(-1)
    mat = lambda k: fields.get(k)
    return QuadProgram(mat("P"), vec("q"), mat("Aeq"), vec("beq"), mat("Ain"), vec("bin"),
                       vec("lb"), vec("ub"))
