# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM kernels: BLAS dgemm for the matmuls, fused C loops for the
gate math.  Drop-in replacements for kernels_numpy with identical signatures.
"""

import numpy as np

from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

NAME = "cython"


cdef inline double _exp(double x) noexcept nogil:
    # Branch-light Cephes-style exp: e^x = 2^n * e^r, |r| <= ln2 / 2.
    # The 1.5 * 2^52 add/subtract rounds x*log2(e) to the nearest integer.
    cdef double n, r, xx, px, qx, scale
    cdef long long bits
    if x > 700.0:
        x = 700.0
    elif x < -700.0:
        x = -700.0
    n = (x * 1.4426950408889634 + 6755399441055744.0) - 6755399441055744.0
    r = (x - n * 6.93145751953125e-1) - n * 1.42860682030941723212e-6
    xx = r * r
    px = 1.26177193074810590878e-4
    px = px * xx + 3.02994407707441961300e-2
    px = px * xx + 9.99999999999999999910e-1
    px = r * px
    qx = 3.00198505138664455042e-6
    qx = qx * xx + 2.52448340349684104192e-3
    qx = qx * xx + 2.27265548208155028766e-1
    qx = qx * xx + 2.00000000000000000005e0
    r = 1.0 + 2.0 * px / (qx - px)
    bits = (<long long> n + 1023) << 52
    memcpy(&scale, &bits, sizeof(double))
    return r * scale


cdef inline double _sigmoid(double z) noexcept nogil:
    return 1.0 / (1.0 + _exp(-z))


cdef inline double _tanh(double z) noexcept nogil:
    return 1.0 - 2.0 / (_exp(2.0 * z) + 1.0)


cdef void _mm_nn(double* a, double* b, double* c, int m, int n, int k,
                 double alpha, double beta) noexcept nogil:
    # row-major C[m,n] = alpha * A[m,k] @ B[k,n] + beta * C
    cdef char no = b'N'
    dgemm(&no, &no, &n, &m, &k, &alpha, b, &n, a, &k, &beta, c, &n)


cdef void _mm_nt(double* a, double* b, double* c, int m, int n, int k,
                 double alpha, double beta) noexcept nogil:
    # row-major C[m,n] = alpha * A[m,k] @ B[n,k]^T + beta * C
    cdef char tr = b'T'
    cdef char no = b'N'
    dgemm(&tr, &no, &n, &m, &k, &alpha, b, &k, a, &k, &beta, c, &n)


cdef void _mm_tn(double* a, double* b, double* c, int m, int n, int k,
                 double alpha, double beta) noexcept nogil:
    # row-major C[m,n] = alpha * A[k,m]^T @ B[k,n] + beta * C
    cdef char tr = b'T'
    cdef char no = b'N'
    dgemm(&no, &tr, &n, &m, &k, &alpha, b, &n, a, &m, &beta, c, &n)


def lstm_forward(double[:, :, ::1] x, double[:, ::1] wx, double[:, ::1] wh,
                 double[::1] b, double[:, ::1] h0, double[:, ::1] c0):
    cdef int T = <int> x.shape[0]
    cdef int B = <int> x.shape[1]
    cdef int I = <int> x.shape[2]
    cdef int H = <int> wh.shape[0]
    cdef int G = 4 * H
    cdef Py_ssize_t t, bi, j

    h_seq = np.empty((T, B, H), dtype=np.float64)
    c_seq = np.empty((T, B, H), dtype=np.float64)
    gates = np.empty((T, B, G), dtype=np.float64)
    tanh_c = np.empty((T, B, H), dtype=np.float64)
    pre_all = np.empty((T, B, G), dtype=np.float64)
    cdef double[:, :, ::1] hs = h_seq
    cdef double[:, :, ::1] cs = c_seq
    cdef double[:, :, ::1] gs = gates
    cdef double[:, :, ::1] tcs = tanh_c
    cdef double[:, :, ::1] pre = pre_all
    cdef double gi, gf, gg, go, c_new, c_prev
    cdef double* h_prev_ptr
    cdef double* pre_ptr

    with nogil:
        # input contribution for every timestep in one call
        _mm_nn(&x[0, 0, 0], &wx[0, 0], &pre[0, 0, 0], T * B, G, I, 1.0, 0.0)
        for t in range(T):
            h_prev_ptr = &h0[0, 0] if t == 0 else &hs[t - 1, 0, 0]
            _mm_nn(h_prev_ptr, &wh[0, 0], &pre[t, 0, 0], B, G, H, 1.0, 1.0)
            for bi in range(B):
                for j in range(H):
                    gi = _sigmoid(pre[t, bi, j] + b[j])
                    gf = _sigmoid(pre[t, bi, H + j] + b[H + j])
                    gg = _tanh(pre[t, bi, 2 * H + j] + b[2 * H + j])
                    go = _sigmoid(pre[t, bi, 3 * H + j] + b[3 * H + j])
                    c_prev = c0[bi, j] if t == 0 else cs[t - 1, bi, j]
                    c_new = gf * c_prev + gi * gg
                    cs[t, bi, j] = c_new
                    tcs[t, bi, j] = _tanh(c_new)
                    hs[t, bi, j] = go * tcs[t, bi, j]
                    gs[t, bi, j] = gi
                    gs[t, bi, H + j] = gf
                    gs[t, bi, 2 * H + j] = gg
                    gs[t, bi, 3 * H + j] = go
    return h_seq, c_seq, gates, tanh_c


def lstm_backward(double[:, :, ::1] dh_out, double[:, :, ::1] x,
                  double[:, :, ::1] h_seq, double[:, :, ::1] c_seq,
                  double[:, :, ::1] gates, double[:, :, ::1] tanh_c,
                  double[:, ::1] wx, double[:, ::1] wh,
                  double[:, ::1] h0, double[:, ::1] c0):
    cdef int T = <int> x.shape[0]
    cdef int B = <int> x.shape[1]
    cdef int I = <int> x.shape[2]
    cdef int H = <int> h_seq.shape[2]
    cdef int G = 4 * H
    cdef Py_ssize_t t, bi, j, g

    dx_arr = np.empty((T, B, I), dtype=np.float64)
    dwx_arr = np.empty((I, G), dtype=np.float64)
    dwh_arr = np.empty((H, G), dtype=np.float64)
    db_arr = np.zeros(G, dtype=np.float64)
    dpre_arr = np.empty((T, B, G), dtype=np.float64)
    hprev_arr = np.empty((T, B, H), dtype=np.float64)
    dh_carry_arr = np.zeros((B, H), dtype=np.float64)
    dc_arr = np.zeros((B, H), dtype=np.float64)

    cdef double[:, :, ::1] dx = dx_arr
    cdef double[:, ::1] dwx = dwx_arr
    cdef double[:, ::1] dwh = dwh_arr
    cdef double[::1] db = db_arr
    cdef double[:, :, ::1] dpre = dpre_arr
    cdef double[:, :, ::1] hprev = hprev_arr
    cdef double[:, ::1] dh_carry = dh_carry_arr
    cdef double[:, ::1] dc = dc_arr
    cdef double gi, gf, gg, go, dh, tc, do_, dcj, c_prev

    with nogil:
        memcpy(&hprev[0, 0, 0], &h0[0, 0], sizeof(double) * B * H)
        if T > 1:
            memcpy(&hprev[1, 0, 0], &h_seq[0, 0, 0], sizeof(double) * (T - 1) * B * H)
        for t in range(T - 1, -1, -1):
            for bi in range(B):
                for j in range(H):
                    gi = gates[t, bi, j]
                    gf = gates[t, bi, H + j]
                    gg = gates[t, bi, 2 * H + j]
                    go = gates[t, bi, 3 * H + j]
                    dh = dh_out[t, bi, j] + dh_carry[bi, j]
                    tc = tanh_c[t, bi, j]
                    do_ = tc * dh
                    dcj = dc[bi, j] + (1.0 - tc * tc) * go * dh
                    c_prev = c0[bi, j] if t == 0 else c_seq[t - 1, bi, j]
                    dpre[t, bi, j] = gi * (1.0 - gi) * (gg * dcj)
                    dpre[t, bi, H + j] = gf * (1.0 - gf) * (c_prev * dcj)
                    dpre[t, bi, 2 * H + j] = (1.0 - gg * gg) * (gi * dcj)
                    dpre[t, bi, 3 * H + j] = go * (1.0 - go) * do_
                    dc[bi, j] = gf * dcj
            # recurrent gradient into the previous timestep
            _mm_nt(&dpre[t, 0, 0], &wh[0, 0], &dh_carry[0, 0], B, H, G, 1.0, 0.0)
        # batched parameter and input gradients over all timesteps
        _mm_tn(&x[0, 0, 0], &dpre[0, 0, 0], &dwx[0, 0], I, G, T * B, 1.0, 0.0)
        _mm_tn(&hprev[0, 0, 0], &dpre[0, 0, 0], &dwh[0, 0], H, G, T * B, 1.0, 0.0)
        _mm_nt(&dpre[0, 0, 0], &wx[0, 0], &dx[0, 0, 0], T * B, I, G, 1.0, 0.0)
        for t in range(T):
            for bi in range(B):
                for g in range(G):
                    db[g] += dpre[t, bi, g]
    return dx_arr, dwx_arr, dwh_arr, db_arr
