"""Symmetric positive-definite factorizations used for solves and Gaussian sampling."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.csgraph import reverse_cuthill_mckee

DENSE_LIMIT = 2048


class SingularBlockError(np.linalg.LinAlgError):
    """Raised when a block that should be positive definite is not."""


class SPDFactor:
    """Cholesky factor ``Q = U^T U`` of a symmetric positive-definite matrix.

    Dense LAPACK Cholesky is used up to ``DENSE_LIMIT`` unknowns. Larger
    (sparse) matrices are reordered with reverse Cuthill-McKee and factored in
    banded storage, which is exact and cheap for graph Laplacians of lattices
    and subdivided graphs.
    """

    def __init__(self, q, dense_limit: int = DENSE_LIMIT):
        n = q.shape[0]
        self.n = n
        self.banded = n > dense_limit and sp.issparse(q)
        try:
            if not self.banded:
                qd = q.toarray() if sp.issparse(q) else np.asarray(q, dtype=float)
                self._u = sla.cholesky(qd, lower=False)
            else:
                qs = sp.csr_matrix(q)
                perm = reverse_cuthill_mckee(qs, symmetric_mode=True)
                qp = qs[perm][:, perm].tocoo()
                kd = int(np.max(np.abs(qp.row - qp.col))) if qp.nnz else 0
                ab = np.zeros((kd + 1, n))
                upper = qp.col >= qp.row
                ab[kd + qp.row[upper] - qp.col[upper], qp.col[upper]] = qp.data[upper]
                self._ub = sla.cholesky_banded(ab, lower=False)
                self._perm = perm
                self._inv = np.empty_like(perm)
                self._inv[perm] = np.arange(n)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise SingularBlockError(f"matrix is not positive definite: {exc}") from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``Q x = b`` (``b`` may have trailing RHS columns)."""
        b = np.asarray(b, dtype=float)
        if not self.banded:
            return sla.cho_solve((self._u, False), b)
        x = sla.cho_solve_banded((self._ub, False), b[self._perm])
        return x[self._inv]

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.n))

    def sample(self, z: np.ndarray) -> np.ndarray:
        """Map i.i.d. standard normals ``z`` (shape ``(n, k)``) to ``N(0, Q^{-1})`` columns."""
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            return self.sample(z[:, None])[:, 0]
        if not self.banded:
            if z.shape[1] == 1:
                # a single RHS would go through trsv, whose rounding differs from the
                # multi-column trsm path; pad so results do not depend on batch size
                return sla.solve_triangular(self._u, np.hstack([z, z]), lower=False)[:, :1]
            return sla.solve_triangular(self._u, z, lower=False)
        x, info = lapack.dtbtrs(self._ub, z, uplo="U", trans="N", diag="N")
        if info != 0:  # pragma: no cover - defensive
            raise SingularBlockError(f"triangular banded solve failed (info={info})")
        # x solves U x = z in permuted coordinates; undo the ordering
        return x[self._inv]
