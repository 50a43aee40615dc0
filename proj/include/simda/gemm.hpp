#pragma once

#include <vector>

namespace simda {

// Row-major matrix kernels. These are the only hot loops in the project;
// everything (matmul, conv via im2col, attention) routes through gemm_nn.
// The i-k-j order streams B and C rows so the j loop vectorizes without
// reassociating any reduction.

// C[m x n] (+)= A[m x k] * B[k x n]
template <typename S>
void gemm_nn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        S* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) crow[j] = S(0);
        const S* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const S av = arow[p];
            if (av == S(0)) continue;
            const S* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// B[k x n] -> out[n x k]
template <typename S>
void transpose(const S* b, S* out, int k, int n) {
    for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j) * k + p] = b[static_cast<std::size_t>(p) * n + j];
}

// C[m x n] (+)= A[m x k] * B[n x k]^T
template <typename S>
void gemm_nt(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    std::vector<S> bt(static_cast<std::size_t>(k) * n);
    transpose(b, bt.data(), n, k);
    gemm_nn(a, bt.data(), c, m, k, n, accumulate);
}

// C[m x n] (+)= A[k x m]^T * B[k x n]
template <typename S>
void gemm_tn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    std::vector<S> at(static_cast<std::size_t>(m) * k);
    transpose(a, at.data(), k, m);
    gemm_nn(at.data(), b, c, m, k, n, accumulate);
}

} // namespace simda
