#pragma once

// Blocked single-threaded GEMM used by convolution and dense layers.
// Row-major storage throughout; transposition is resolved while packing.

#include <algorithm>
#include <cstddef>
#include <vector>

namespace pap {

enum class Trans { No, Yes };

namespace detail {

template <typename T> struct GemmTile;
template <> struct GemmTile<float> {
    static constexpr int mr = 8;
    static constexpr int nr = 32;
};
template <> struct GemmTile<double> {
    static constexpr int mr = 8;
    static constexpr int nr = 16;
};

inline constexpr int kGemmKc = 256;
inline constexpr int kGemmMc = 96;
inline constexpr int kGemmNc = 2048;

// MR x NR register tile; NR is a multiple of the 64-byte vector width.
template <typename T, int MR, int NR>
inline void micro_kernel(int kc, const T* __restrict a, const T* __restrict b, T* __restrict c,
                         int ldc, int rows, int cols) {
    constexpr int lanes = 64 / static_cast<int>(sizeof(T));
    constexpr int nv = NR / lanes;
    static_assert(NR % lanes == 0);
    typedef T vec __attribute__((vector_size(64)));

    vec acc[MR][nv];
    for (int i = 0; i < MR; ++i)
        for (int v = 0; v < nv; ++v) acc[i][v] = vec{};
    for (int k = 0; k < kc; ++k) {
        vec bv[nv];
        for (int v = 0; v < nv; ++v)
            __builtin_memcpy(&bv[v], b + static_cast<std::ptrdiff_t>(k) * NR + v * lanes, sizeof(vec));
        const T* ak = a + static_cast<std::ptrdiff_t>(k) * MR;
        for (int i = 0; i < MR; ++i) {
            const T av = ak[i];
            for (int v = 0; v < nv; ++v) acc[i][v] += av * bv[v];
        }
    }
    T out[MR][NR];
    __builtin_memcpy(out, acc, sizeof(out));
    for (int i = 0; i < rows; ++i) {
        T* ci = c + static_cast<std::ptrdiff_t>(i) * ldc;
        for (int j = 0; j < cols; ++j) ci[j] += out[i][j];
    }
}

}  // namespace detail

/// C = op(A) * op(B) (+ C when accumulate). op(A) is M x K, op(B) is K x N.
template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c,
          int ldc, bool accumulate) {
    using Tile = detail::GemmTile<T>;
    constexpr int MR = Tile::mr;
    constexpr int NR = Tile::nr;
    using detail::kGemmKc;
    using detail::kGemmMc;
    using detail::kGemmNc;

    if (!accumulate) {
        for (int i = 0; i < m; ++i) std::fill_n(c + static_cast<std::ptrdiff_t>(i) * ldc, n, T{0});
    }
    if (m == 0 || n == 0 || k == 0) return;

    thread_local std::vector<T> bpack;
    thread_local std::vector<T> apack;

    for (int jc = 0; jc < n; jc += kGemmNc) {
        const int nc = std::min(kGemmNc, n - jc);
        const int npanels = (nc + NR - 1) / NR;
        for (int pc = 0; pc < k; pc += kGemmKc) {
            const int kc = std::min(kGemmKc, k - pc);
            bpack.assign(static_cast<std::size_t>(npanels) * kc * NR, T{0});
            for (int p = 0; p < npanels; ++p) {
                const int j0 = jc + p * NR;
                const int cols = std::min(NR, n - j0);
                T* dst = bpack.data() + static_cast<std::ptrdiff_t>(p) * kc * NR;
                if (tb == Trans::No) {
                    for (int kk = 0; kk < kc; ++kk) {
                        const T* src = b + static_cast<std::ptrdiff_t>(pc + kk) * ldb + j0;
                        std::copy_n(src, cols, dst + static_cast<std::ptrdiff_t>(kk) * NR);
                    }
                } else {
                    for (int j = 0; j < cols; ++j) {
                        const T* src = b + static_cast<std::ptrdiff_t>(j0 + j) * ldb + pc;
                        for (int kk = 0; kk < kc; ++kk) dst[static_cast<std::ptrdiff_t>(kk) * NR + j] = src[kk];
                    }
                }
            }
            for (int ic = 0; ic < m; ic += kGemmMc) {
                const int mc = std::min(kGemmMc, m - ic);
                const int mpanels = (mc + MR - 1) / MR;
                apack.assign(static_cast<std::size_t>(mpanels) * kc * MR, T{0});
                for (int p = 0; p < mpanels; ++p) {
                    const int i0 = ic + p * MR;
                    const int rows = std::min(MR, m - i0);
                    T* dst = apack.data() + static_cast<std::ptrdiff_t>(p) * kc * MR;
                    if (ta == Trans::No) {
                        for (int i = 0; i < rows; ++i) {
                            const T* src = a + static_cast<std::ptrdiff_t>(i0 + i) * lda + pc;
                            for (int kk = 0; kk < kc; ++kk) dst[static_cast<std::ptrdiff_t>(kk) * MR + i] = src[kk];
                        }
                    } else {
                        for (int kk = 0; kk < kc; ++kk) {
                            const T* src = a + static_cast<std::ptrdiff_t>(pc + kk) * lda + i0;
                            std::copy_n(src, rows, dst + static_cast<std::ptrdiff_t>(kk) * MR);
                        }
                    }
                }
                for (int pj = 0; pj < npanels; ++pj) {
                    const int j0 = jc + pj * NR;
                    const int cols = std::min(NR, n - j0);
                    const T* bp = bpack.data() + static_cast<std::ptrdiff_t>(pj) * kc * NR;
                    for (int pi = 0; pi < mpanels; ++pi) {
                        const int i0 = ic + pi * MR;
                        const int rows = std::min(MR, m - i0);
                        detail::micro_kernel<T, MR, NR>(
                            kc, apack.data() + static_cast<std::ptrdiff_t>(pi) * kc * MR, bp,
                            c + static_cast<std::ptrdiff_t>(i0) * ldc + j0, ldc, rows, cols);
                    }
                }
            }
        }
    }
}

}  // namespace pap
