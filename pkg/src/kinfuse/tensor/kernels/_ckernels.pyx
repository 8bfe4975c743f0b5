# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the hot kernels (see _pykernels.py for the contract).

Convolution loops are ordered so the innermost loop runs contiguously over
the output positions, which the C compiler auto-vectorizes. The LSTM gate
math keeps the one transcendental pass in numpy (vectorized exp) and fuses
all remaining elementwise algebra into single C loops.
"""

import numpy as np

cdef extern from *:
    """
    /* restrict-qualified inner loops so the compiler can vectorize; the
       Cython memoryview indexing above them cannot prove no-aliasing. */
    static void kf_axpy(double* restrict out, const double* restrict x,
                        double wv, long n) {
        for (long i = 0; i < n; ++i) out[i] += wv * x[i];
    }
    static void kf_axpy_strided(double* restrict out, const double* restrict x,
                                double wv, long n, long stride) {
        for (long i = 0; i < n; ++i) out[i] += wv * x[i * stride];
    }
    static void kf_axpy_scatter(double* restrict out, const double* restrict g,
                                double wv, long n, long stride) {
        for (long i = 0; i < n; ++i) out[i * stride] += wv * g[i];
    }
    static double kf_dot(const double* restrict a, const double* restrict b,
                         long n) {
        double s = 0.0;
        for (long i = 0; i < n; ++i) s += a[i] * b[i];
        return s;
    }
    static double kf_dot_strided(const double* restrict a, const double* restrict b,
                                 long n, long stride) {
        double s = 0.0;
        for (long i = 0; i < n; ++i) s += a[i * stride] * b[i];
        return s;
    }
    static double kf_sum(const double* restrict a, long n) {
        double s = 0.0;
        for (long i = 0; i < n; ++i) s += a[i];
        return s;
    }
    """
    void kf_axpy(double* out, const double* x, double wv, long n) nogil
    void kf_axpy_strided(double* out, const double* x, double wv, long n,
                         long stride) nogil
    void kf_axpy_scatter(double* out, const double* g, double wv, long n,
                         long stride) nogil
    double kf_dot(const double* a, const double* b, long n) nogil
    double kf_dot_strided(const double* a, const double* b, long n,
                          long stride) nogil
    double kf_sum(const double* a, long n) nogil


def conv1d_forward(double[:, :, ::1] x, double[:, :, ::1] w, double[::1] b, int stride):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t F = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t lo = (L - K) // stride + 1
    out_arr = np.empty((B, F, lo), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t n, f, l, c, k
    cdef double wv, bv
    cdef double* orow
    cdef const double* xrow
    with nogil:
        for n in range(B):
            for f in range(F):
                orow = &out[n, f, 0]
                bv = b[f]
                for l in range(lo):
                    orow[l] = bv
                for c in range(C):
                    xrow = &x[n, c, 0]
                    for k in range(K):
                        wv = w[f, c, k]
                        if stride == 1:
                            kf_axpy(orow, xrow + k, wv, lo)
                        else:
                            kf_axpy_strided(orow, xrow + k, wv, lo, stride)
    return out_arr


def conv1d_backward(double[:, :, ::1] x, double[:, :, ::1] w, int stride,
                    double[:, :, ::1] gout):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t F = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t lo = gout.shape[2]
    gx_arr = np.zeros((B, C, L), dtype=np.float64)
    gw_arr = np.zeros((F, C, K), dtype=np.float64)
    gb_arr = np.zeros(F, dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t n, f, c, k
    cdef double wv
    cdef const double* grow
    cdef const double* xrow
    cdef double* gxrow
    with nogil:
        for n in range(B):
            for f in range(F):
                grow = &gout[n, f, 0]
                gb[f] += kf_sum(grow, lo)
                for c in range(C):
                    xrow = &x[n, c, 0]
                    gxrow = &gx[n, c, 0]
                    for k in range(K):
                        wv = w[f, c, k]
                        if stride == 1:
                            gw[f, c, k] += kf_dot(xrow + k, grow, lo)
                            kf_axpy(gxrow + k, grow, wv, lo)
                        else:
                            gw[f, c, k] += kf_dot_strided(xrow + k, grow, lo, stride)
                            kf_axpy_scatter(gxrow + k, grow, wv, lo, stride)
    return gx_arr, gw_arr, gb_arr


def lstm_gates_forward(z, c_prev):
    znp = np.ascontiguousarray(z)
    cdef Py_ssize_t B = znp.shape[0], H = znp.shape[1] // 4
    # one vectorized exp covers all four gates: sigmoid(v) = 1/(1+e^-v),
    # tanh(v) = 2/(1+e^-2v) - 1
    scaled = np.empty_like(znp)
    cdef double[:, ::1] zv = znp
    cdef double[:, ::1] sv = scaled
    cdef Py_ssize_t n, j
    with nogil:
        for n in range(B):
            for j in range(H):
                sv[n, j] = -zv[n, j]
                sv[n, H + j] = -zv[n, H + j]
                sv[n, 2 * H + j] = -2.0 * zv[n, 2 * H + j]
                sv[n, 3 * H + j] = -zv[n, 3 * H + j]
    E = np.exp(scaled)
    cdef double[:, ::1] ev = E
    i_arr = np.empty((B, H), dtype=np.float64)
    f_arr = np.empty((B, H), dtype=np.float64)
    g_arr = np.empty((B, H), dtype=np.float64)
    o_arr = np.empty((B, H), dtype=np.float64)
    c_arr = np.empty((B, H), dtype=np.float64)
    cp_arr = np.ascontiguousarray(c_prev)
    cdef double[:, ::1] iv = i_arr, fv = f_arr, gv = g_arr, ov = o_arr
    cdef double[:, ::1] cv = c_arr, cpv = cp_arr
    cdef double ii, ff, gg, oo
    with nogil:
        for n in range(B):
            for j in range(H):
                ii = 1.0 / (1.0 + ev[n, j])
                ff = 1.0 / (1.0 + ev[n, H + j])
                gg = 2.0 / (1.0 + ev[n, 2 * H + j]) - 1.0
                oo = 1.0 / (1.0 + ev[n, 3 * H + j])
                iv[n, j] = ii
                fv[n, j] = ff
                gv[n, j] = gg
                ov[n, j] = oo
                cv[n, j] = ff * cpv[n, j] + ii * gg
    # tanh of the new cell state, again via one vectorized exp
    E2 = np.exp(-2.0 * c_arr)
    tc_arr = np.empty((B, H), dtype=np.float64)
    cdef double[:, ::1] e2v = E2
    cdef double[:, ::1] tcv = tc_arr
    h_arr = np.empty((B, H), dtype=np.float64)
    cdef double[:, ::1] hv = h_arr
    cdef double tc
    with nogil:
        for n in range(B):
            for j in range(H):
                tc = 2.0 / (1.0 + e2v[n, j]) - 1.0
                tcv[n, j] = tc
                hv[n, j] = ov[n, j] * tc
    return h_arr, c_arr, (i_arr, f_arr, g_arr, o_arr, cp_arr, tc_arr)


def lstm_gates_backward(cache, grad_h, grad_c):
    i_arr, f_arr, g_arr, o_arr, cp_arr, tc_arr = cache
    cdef double[:, ::1] iv = i_arr, fv = f_arr, gv = g_arr, ov = o_arr
    cdef double[:, ::1] cpv = cp_arr, tcv = tc_arr
    cdef Py_ssize_t B = i_arr.shape[0], H = i_arr.shape[1]
    gz_arr = np.empty((B, 4 * H), dtype=np.float64)
    gcp_arr = np.empty((B, H), dtype=np.float64)
    cdef double[:, ::1] gz = gz_arr
    cdef double[:, ::1] gcp = gcp_arr
    cdef double[:, ::1] ghv
    cdef double[:, ::1] gcv
    cdef bint has_h = grad_h is not None
    cdef bint has_c = grad_c is not None
    if has_h:
        ghv = np.ascontiguousarray(grad_h)
    if has_c:
        gcv = np.ascontiguousarray(grad_c)
    cdef Py_ssize_t n, j
    cdef double gc, gh, tc
    with nogil:
        for n in range(B):
            for j in range(H):
                tc = tcv[n, j]
                gc = gcv[n, j] if has_c else 0.0
                if has_h:
                    gh = ghv[n, j]
                    gc += gh * ov[n, j] * (1.0 - tc * tc)
                    gz[n, 3 * H + j] = gh * tc * ov[n, j] * (1.0 - ov[n, j])
                else:
                    gz[n, 3 * H + j] = 0.0
                gz[n, j] = gc * gv[n, j] * iv[n, j] * (1.0 - iv[n, j])
                gz[n, H + j] = gc * cpv[n, j] * fv[n, j] * (1.0 - fv[n, j])
                gz[n, 2 * H + j] = gc * iv[n, j] * (1.0 - gv[n, j] * gv[n, j])
                gcp[n, j] = gc * fv[n, j]
    return gz_arr, gcp_arr
