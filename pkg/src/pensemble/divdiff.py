"""Divided differences of the exponential and simplex integrals.

Everything here rests on one identity: for the upper bidiagonal matrix with
diagonal ``y`` and unit superdiagonal, ``exp(Z)[j, k]`` is the divided
difference ``exp[y_j, ..., y_k]``, i.e. the integral of ``exp(y . q)`` over
the standard simplex in ``k - j + 1`` weights.  With the diagonal shifted to
``<= 0`` the matrix is Metzler (nonnegative off-diagonal), so its
exponential can be formed from sums and products of nonnegative numbers
only.  That sidesteps the cancellation of the textbook recursion and treats
repeated nodes (confluent limits) with no special casing.

The superdiagonal is rescaled to ``h * (i + 1)`` (a diagonal similarity) so
that entries stay near unit magnitude; the factor is undone in log space.
"""
import numpy as np
from scipy import sparse
from scipy.special import gammaln

from .errors import DiagnosticError, InvalidInputError

_TAYLOR_THETA = 0.5
_TAYLOR_MAX_TERMS = 60
# Above this size only the needed rows are formed, by uniformization.
DENSE_LIMIT = 160


def expm_metzler(a, theta=_TAYLOR_THETA):
    """Exponential of a Metzler matrix, returned as ``(E, log_scale)``.

    ``exp(a) = exp(log_scale) * E`` with ``max(E) == 1`` after any squaring.
    The diagonal is shifted by its maximum, the matrix is scaled by ``2**-s``
    and made entrywise nonnegative by adding a multiple of the identity, the
    Taylor series is summed and the result is squared ``s`` times with
    renormalization.  Every operation acts on nonnegative entries.

    Args:
        a: square real matrix with nonnegative off-diagonal entries.
        theta: 1-norm bound for the scaled matrix.

    Returns:
        Tuple ``(E, log_scale)``.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    diag = np.diag(a)
    if np.any(a - np.diag(diag) < 0):
        raise InvalidInputError("matrix is not Metzler (negative off-diagonal entry)")
    shift = float(diag.max())
    b = a - shift * np.eye(n)
    norm = float(np.abs(b).sum(axis=0).max())
    s = max(0, int(np.ceil(np.log2(norm / theta)))) if norm > 0 else 0
    b /= 2.0 ** s
    nu = float(-np.diag(b).min())
    c = b + nu * np.eye(n)
    total = np.eye(n)
    term = np.eye(n)
    for k in range(1, _TAYLOR_MAX_TERMS):
        term = term @ c / k
        total += term
        if term.max() <= 1e-18 * total.max():
            break
    log_sq = 0.0
    for _ in range(s):
        total = total @ total
        top = total.max()
        total /= top
        log_sq = 2.0 * log_sq + np.log(top)
    return total, shift - nu * 2.0 ** s + log_sq


def expm_rows_metzler(a, rows):
    """Selected rows of ``exp(a)`` for a sparse Metzler matrix.

    Uses uniformization: with ``q`` the largest diagonal magnitude after a
    shift, ``P = I + (a - shift)/q`` is entrywise nonnegative and
    ``exp(a) = exp(shift - q) * sum_k q^k/k! P^k``.  The series is summed on
    the requested row vectors only, with running renormalization.

    Args:
        a: square Metzler matrix (dense or sparse).
        rows: row indices to return.

    Returns:
        ``(R, log_scale)`` with ``exp(a)[rows] = exp(log_scale) * R``.
    """
    a = sparse.csr_matrix(a, dtype=float)
    n = a.shape[0]
    diag = a.diagonal()
    shift = float(diag.max())
    q = float((shift - diag).max())
    rows = np.atleast_1d(np.asarray(rows, dtype=int))
    u = np.zeros((n, rows.size))
    u[rows, np.arange(rows.size)] = 1.0
    if q == 0.0:
        q = 1.0
    pt = (sparse.identity(n, format="csr") + (a - shift * sparse.identity(n)) / q).T.tocsr()
    if pt.min() < 0:
        raise InvalidInputError("matrix is not Metzler (negative off-diagonal entry)")
    total = u.copy()
    log_u = 0.0      # u_true = exp(log_u) * u
    log_total = 0.0  # total_true = exp(log_total) * total
    log_w = 0.0      # log(q^k / k!)
    # Entries at distance L from the diagonal only start receiving mass at
    # step L, so convergence is judged entry by entry once every entry is hit.
    k_min = int(q + 8.0 * np.sqrt(q) + 20) + n
    k = 0
    while True:
        k += 1
        u = pt @ u
        top = u.max()
        if not top > 0:
            break
        u /= top
        log_u += np.log(top)
        log_w += np.log(q) - np.log(k)
        rel = log_w + log_u - log_total
        if rel > 0:
            total *= np.exp(-rel)
            total += u
            log_total += rel
            rel = 0.0
        else:
            total += np.exp(rel) * u
        if k >= k_min and rel < -30.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(total > 0, u / total, np.where(u > 0, np.inf, 0.0))
            if np.exp(rel) * ratio.max() < 1e-17:
                break
        if k > 50 * k_min:
            raise DiagnosticError("uniformization did not converge", {"q": q, "k": k})
    return total.T, log_total + shift - q


def _row_exponential(a, rows):
    """Rows of ``exp(a)`` choosing the dense or uniformization path."""
    if a.shape[0] <= DENSE_LIMIT:
        e, log_scale = expm_metzler(a.toarray() if sparse.issparse(a) else a)
        top = e[rows].max()
        return e[rows] / top, log_scale + np.log(top)
    return expm_rows_metzler(a, rows)


def _bidiagonal_sparse(y, h):
    n = y.size
    i = np.arange(n - 1)
    return sparse.diags([y, h * (i + 1.0)], [0, 1], shape=(n, n), format="csr")


def _default_h(y):
    n = y.size
    spread = float(y.max() - y.min()) if n else 0.0
    return max(1.0, spread / max(n, 1))


def exp_divided_differences(y, h=None):
    """``log exp[y_0, ..., y_k]`` for ``k = 0 .. n-1``.

    Args:
        y: nodes (any real values; repeats allowed).
        h: superdiagonal scale; a spread-based default keeps entries O(1).

    Returns:
        Array of logs of the (positive) divided differences.
    """
    y = np.asarray(y, dtype=float).ravel()
    if h is None:
        h = _default_h(y)
    e, log_scale = _row_exponential(_bidiagonal_sparse(y, h), [0])
    k = np.arange(y.size)
    with np.errstate(divide="ignore"):
        out = np.log(e[0]) + log_scale - gammaln(k + 1) - k * np.log(h)
    if not np.all(np.isfinite(out)):
        raise DiagnosticError("divided-difference table under/overflowed",
                              {"n": y.size, "h": h})
    return out


def simplex_moments(x, c, order=1):
    """Log-partition and moments of ``x . q`` under a tilted flat Dirichlet.

    ``Z(c) = E[exp(-c x.q)]`` for ``q`` uniform on the probability simplex
    (the pushforward of the uniform sphere measure onto populations), and
    ``m_r = E[(x.q - min x)^r exp(-c x.q)] / Z`` for ``r = 1..order``.

    The moments come from a block bidiagonal exponential whose off-diagonal
    blocks are ``diag(x - min x) >= 0``, so no subtraction ever occurs.

    Args:
        x: real weights (length p).
        c: tilt (>= 0 recommended; any real accepted).
        order: highest central-shifted moment to return.

    Returns:
        ``(log_z, moments)`` with ``moments[r-1] = m_r``.
    """
    x = np.sort(np.asarray(x, dtype=float).ravel())
    p = x.size
    if p == 0:
        raise InvalidInputError("empty weight vector")
    x0 = x[0]
    xt = x - x0
    if p == 1:
        return -c * x0, np.zeros(order)
    y = -c * xt
    h = _default_h(y)
    base = _bidiagonal_sparse(y, h)
    blocks = order + 1
    shift_up = sparse.diags([np.ones(blocks - 1)], [1], shape=(blocks, blocks))
    big = (sparse.kron(sparse.identity(blocks), base)
           + sparse.kron(shift_up, sparse.diags(xt))).tocsr()
    e, log_scale = _row_exponential(big, [0])
    e = e.reshape(1, -1)
    top = e[0, p - 1]
    if not top > 0:
        raise DiagnosticError("simplex partition function underflowed", {"p": p, "c": c})
    log_z = np.log(top) + log_scale - (p - 1) * np.log(h) - c * x0
    fact = np.cumprod(np.arange(1, order + 1, dtype=float))
    moments = np.array([fact[r - 1] * e[0, (r + 1) * p - 1] / top
                        for r in range(1, order + 1)])
    return float(log_z), moments


def simplex_mean(x, c):
    """Mean of ``x . q`` under the flat Dirichlet tilted by ``exp(-c x.q)``."""
    x = np.asarray(x, dtype=float)
    _, m = simplex_moments(x, c, order=1)
    return float(x.min() + m[0])


def phi_table(nodes, c, rows, cols):
    """Scaled simplex integrals over node windows for the Newton reduction.

    For ascending ``nodes`` with ``nodes[0] == 0`` define
    ``Phi[j, k](c) = c^(k-j) * integral over the simplex of
    exp(-c * nodes[j:k+1] . q)``.  This routine returns ``D`` and a per-column
    log weight so that ``Phi[j, k] = D[j, k] * (h/c)^j * j! * exp(w[k])`` with
    ``w[k] = k log(c/h) - log k!``.

    Args:
        nodes: shifted spectrum (ascending, first entry 0).
        c: positive tilt.
        rows: number of leading rows needed.
        cols: column indices needed.

    Returns:
        ``(D, w, h)`` where ``D`` has shape ``(rows, len(cols))``.
    """
    nodes = np.asarray(nodes, dtype=float)
    if c <= 0:
        raise InvalidInputError("tilt must be positive")
    y = -c * nodes
    h = _default_h(y)
    e, log_scale = _row_exponential(_bidiagonal_sparse(y, h), np.arange(rows))
    cols = np.asarray(cols, dtype=int)
    d = e[:rows][:, cols]
    w = cols * np.log(c / h) - gammaln(cols + 1) + log_scale
    return d, w, h
