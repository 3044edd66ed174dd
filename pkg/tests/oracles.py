"""Independent reference implementations used by the tests.

Nothing here calls the package's operators: the dense acquisition matrix
is assembled entry by entry from index arithmetic, and the TV solver is a
plain accelerated projected gradient method on a smoothed objective.
"""
import numpy as np


def circulant_matrix(kernel):
    """Dense periodic-convolution matrix of a centered kernel (N x N)."""
    h, w = kernel.shape
    ch, cw = h // 2, w // 2
    n = h * w
    C = np.zeros((n, n))
    for r in range(h):
        for c in range(w):
            row = r * w + c
            for rr in range(h):
                for cc in range(w):
                    # out(r, c) += k(center + (r - rr, c - cc)) * x(rr, cc)
                    kr = (ch + r - rr) % h
                    kc = (cw + c - cc) % w
                    C[row, rr * w + cc] = kernel[kr, kc]
    return C


def selection_matrix(h, w, side):
    """Rows pick the centered ``side x side`` window in row-major order."""
    top, left = (h - side) // 2, (w - side) // 2
    R = np.zeros((side * side, h * w))
    k = 0
    for r in range(top, top + side):
        for c in range(left, left + side):
            R[k, r * w + c] = 1.0
            k += 1
    return R


def dense_operator(kernels, labels, side):
    """``R sum_i diag(labels == i) C_i`` as a dense matrix."""
    h, w = kernels[0].shape
    A = np.zeros((h * w, h * w))
    for i, k in enumerate(kernels):
        S = np.diag((np.asarray(labels) == i).astype(float))
        A += S @ circulant_matrix(k)
    return selection_matrix(h, w, side) @ A


def nested_loop_convolution(x, kernel):
    """Periodic convolution by direct summation."""
    h, w = x.shape
    ch, cw = h // 2, w // 2
    out = np.zeros_like(x, dtype=float)
    for r in range(h):
        for c in range(w):
            s = 0.0
            for rr in range(h):
                for cc in range(w):
                    s += kernel[(ch + r - rr) % h, (cw + c - cc) % w] * x[rr, cc]
            out[r, c] = s
    return out


def tv_explicit(u):
    """Isotropic TV by explicit summation with replicate boundary."""
    h, w = u.shape
    total = 0.0
    for r in range(h):
        for c in range(w):
            gx = u[r, c + 1] - u[r, c] if c + 1 < w else 0.0
            gy = u[r + 1, c] - u[r, c] if r + 1 < h else 0.0
            total += (gx * gx + gy * gy) ** 0.5
    return total


def difference_matrices(h, w):
    """Dense forward-difference matrices (replicate boundary)."""
    n = h * w
    Dx = np.zeros((n, n))
    Dy = np.zeros((n, n))
    for r in range(h):
        for c in range(w):
            i = r * w + c
            if c + 1 < w:
                Dx[i, i + 1], Dx[i, i] = 1.0, -1.0
            if r + 1 < h:
                Dy[i, i + w], Dy[i, i] = 1.0, -1.0
    return Dx, Dy


def exact_objective(A, y, rho, x, shape):
    Dx, Dy = difference_matrices(*shape)
    v = x.ravel()
    r = A @ v - y
    return float(r @ r + rho * np.sum(np.hypot(Dx @ v, Dy @ v)))


def smoothed_tv_pgd(A, y, rho, shape, eps=1e-6, nonneg=True, max_iters=200000, tol=1e-12):
    """Minimize ``||A x - y||^2 + rho * sum sqrt(gx^2 + gy^2 + eps^2)``.

    Accelerated projected gradient (FISTA with restart) with a continuation
    on the smoothing level that ends at ``eps``; each stage runs until the
    objective stagnates. Returns the final iterate.
    """
    Dx, Dy = difference_matrices(*shape)
    AtA = A.T @ A
    Aty = A.T @ y
    data_lip = 2.0 * np.linalg.eigvalsh(AtA)[-1]
    d_norm2 = np.linalg.eigvalsh(Dx.T @ Dx + Dy.T @ Dy)[-1]
    proj = (lambda v: np.maximum(v, 0.0)) if nonneg else (lambda v: v)

    def f(v, e):
        gx, gy = Dx @ v, Dy @ v
        r = A @ v - y
        return r @ r + rho * np.sum(np.sqrt(gx * gx + gy * gy + e * e))

    def grad(v, e):
        gx, gy = Dx @ v, Dy @ v
        m = np.sqrt(gx * gx + gy * gy + e * e)
        return 2.0 * (AtA @ v - Aty) + rho * (Dx.T @ (gx / m) + Dy.T @ (gy / m))

    x = proj(np.zeros(A.shape[1]))
    levels = []
    e = 1e-2
    while e > eps:
        levels.append(e)
        e /= 10.0
    levels.append(eps)
    for e in levels:
        step = 1.0 / (data_lip + rho * d_norm2 / e)
        v, t = x.copy(), 1.0
        prev = f(x, e)
        stall = 0
        for _ in range(max_iters):
            x_new = proj(v - step * grad(v, e))
            cur = f(x_new, e)
            if cur > prev:
                # restart momentum when the objective goes up
                v, t = x.copy(), 1.0
                continue
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            v = x_new + ((t - 1.0) / t_new) * (x_new - x)
            x, t = x_new, t_new
            stall = stall + 1 if prev - cur <= tol * max(abs(cur), 1e-300) else 0
            prev = cur
            if stall >= 20:
                break
    return x.reshape(shape)
