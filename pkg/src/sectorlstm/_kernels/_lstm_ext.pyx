# Compiled LSTM sequence kernels. Same contract as _lstm_py.
import numpy as np

from libc.math cimport exp, tanh
from scipy.linalg.cython_blas cimport dgemm


cdef inline void _gemm(char ta, char tb, int m, int n, int k, double alpha,
                       double* a, int lda, double* b, int ldb,
                       double beta, double* c, int ldc) noexcept nogil:
    # Row-major C(m x n) = alpha * op(A) @ op(B) + beta * C, via column-major BLAS
    # computing C^T = op(B)^T @ op(A)^T. lda/ldb/ldc are row strides.
    dgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


cdef inline double _sigmoid(double z) noexcept nogil:
    return 1.0 / (1.0 + exp(-z))


def lstm_forward(x, w, u, b):
    x = np.ascontiguousarray(x, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    cdef int batch = x.shape[0]
    cdef int steps = x.shape[1]
    cdef int hidden = u.shape[1]
    cdef int h4 = 4 * hidden
    gates_arr = np.ascontiguousarray(x @ np.asarray(w, dtype=np.float64).T + b)
    hs_arr = np.empty((batch, steps, hidden))
    cs_arr = np.empty((batch, steps, hidden))
    cdef double[:, :, ::1] z = gates_arr
    cdef double[:, :, ::1] hs = hs_arr
    cdef double[:, :, ::1] cs = cs_arr
    cdef double[:, ::1] uv = u
    cdef int t, n, j
    cdef double i, f, g, o, c, c_prev
    with nogil:
        for t in range(steps):
            if t > 0:
                _gemm(b'N', b'T', batch, h4, hidden, 1.0,
                      &hs[0, t - 1, 0], steps * hidden,
                      &uv[0, 0], hidden,
                      1.0, &z[0, t, 0], steps * h4)
            for n in range(batch):
                for j in range(hidden):
                    i = _sigmoid(z[n, t, j])
                    f = _sigmoid(z[n, t, hidden + j])
                    g = tanh(z[n, t, 2 * hidden + j])
                    o = _sigmoid(z[n, t, 3 * hidden + j])
                    c_prev = cs[n, t - 1, j] if t > 0 else 0.0
                    c = f * c_prev + i * g
                    cs[n, t, j] = c
                    hs[n, t, j] = o * tanh(c)
                    z[n, t, j] = i
                    z[n, t, hidden + j] = f
                    z[n, t, 2 * hidden + j] = g
                    z[n, t, 3 * hidden + j] = o
    return hs_arr, cs_arr, gates_arr


def lstm_backward(x, w, u, hs, cs, gates, dhs):
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    hs = np.ascontiguousarray(hs, dtype=np.float64)
    cdef int batch = x.shape[0]
    cdef int steps = x.shape[1]
    cdef int hidden = u.shape[1]
    cdef int h4 = 4 * hidden
    dz_arr = np.zeros((batch, steps, h4))
    dh_next_arr = np.zeros((batch, hidden))
    dc_next_arr = np.zeros((batch, hidden))
    cdef double[:, :, ::1] dz = dz_arr
    cdef double[:, ::1] dh_next = dh_next_arr
    cdef double[:, ::1] dc_next = dc_next_arr
    cdef const double[:, :, ::1] gv = np.ascontiguousarray(gates, dtype=np.float64)
    cdef const double[:, :, ::1] cv = np.ascontiguousarray(cs, dtype=np.float64)
    cdef const double[:, :, ::1] dv = np.ascontiguousarray(dhs, dtype=np.float64)
    cdef double[:, ::1] uv = u
    cdef int t, n, j
    cdef double i, f, g, o, tc, dh, dc, c_prev
    with nogil:
        for t in range(steps - 1, -1, -1):
            for n in range(batch):
                for j in range(hidden):
                    i = gv[n, t, j]
                    f = gv[n, t, hidden + j]
                    g = gv[n, t, 2 * hidden + j]
                    o = gv[n, t, 3 * hidden + j]
                    tc = tanh(cv[n, t, j])
                    dh = dv[n, t, j] + dh_next[n, j]
                    dc = dc_next[n, j] + dh * o * (1.0 - tc * tc)
                    c_prev = cv[n, t - 1, j] if t > 0 else 0.0
                    dz[n, t, j] = dc * g * i * (1.0 - i)
                    dz[n, t, hidden + j] = dc * c_prev * f * (1.0 - f)
                    dz[n, t, 2 * hidden + j] = dc * i * (1.0 - g * g)
                    dz[n, t, 3 * hidden + j] = dh * tc * o * (1.0 - o)
                    dc_next[n, j] = dc * f
            _gemm(b'N', b'N', batch, hidden, h4, 1.0,
                  &dz[0, t, 0], steps * h4,
                  &uv[0, 0], hidden,
                  0.0, &dh_next[0, 0], hidden)
    dx = dz_arr @ w
    dw = np.tensordot(dz_arr, x, axes=([0, 1], [0, 1]))
    du = np.tensordot(dz_arr[:, 1:, :], hs[:, :-1, :], axes=([0, 1], [0, 1]))
    db = dz_arr.sum(axis=(0, 1))
    return dx, dw, du, db
