#pragma once

// Internal dense kernels shared by the autodiff ops. Single-threaded with a
// fixed accumulation order, so results are bit-reproducible.

#include <algorithm>
#include <cstddef>
#include <vector>

namespace pvtadp::kernels {

// C[M,N] (+)= A[M,K] * B[K,N], all row-major with explicit leading dims.
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < M; ++i) std::fill(C + i * ldc, C + i * ldc + N, T(0));
  }
  constexpr std::size_t kBlockK = 256;
  constexpr std::size_t kBlockN = 1024;
  for (std::size_t j0 = 0; j0 < N; j0 += kBlockN) {
    const std::size_t nb = std::min(kBlockN, N - j0);
    for (std::size_t k0 = 0; k0 < K; k0 += kBlockK) {
      const std::size_t kend = std::min(K, k0 + kBlockK);
      std::size_t i = 0;
      for (; i + 4 <= M; i += 4) {
        T* c0 = C + i * ldc + j0;
        T* c1 = c0 + ldc;
        T* c2 = c1 + ldc;
        T* c3 = c2 + ldc;
        for (std::size_t k = k0; k < kend; ++k) {
          const T a0 = A[i * lda + k];
          const T a1 = A[(i + 1) * lda + k];
          const T a2 = A[(i + 2) * lda + k];
          const T a3 = A[(i + 3) * lda + k];
          const T* b = B + k * ldb + j0;
          for (std::size_t j = 0; j < nb; ++j) {
            const T bv = b[j];
            c0[j] += a0 * bv;
            c1[j] += a1 * bv;
            c2[j] += a2 * bv;
            c3[j] += a3 * bv;
          }
        }
      }
      for (; i < M; ++i) {
        T* c = C + i * ldc + j0;
        for (std::size_t k = k0; k < kend; ++k) {
          const T a = A[i * lda + k];
          const T* b = B + k * ldb + j0;
          for (std::size_t j = 0; j < nb; ++j) c[j] += a * b[j];
        }
      }
    }
  }
}

// dst[cols, rows] = src[rows, cols]^T
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, std::size_t lds, T* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t rend = std::min(rows, r0 + kTile);
      const std::size_t cend = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < rend; ++r) {
        for (std::size_t c = c0; c < cend; ++c) dst[c * rows + r] = src[r * lds + c];
      }
    }
  }
}

// C[M,N] (+)= A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc, bool accumulate, std::vector<T>& scratch) {
  scratch.resize(K * N);
  transpose(N, K, B, ldb, scratch.data());
  gemm_nn(M, N, K, A, lda, scratch.data(), N, C, ldc, accumulate);
}

// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc, bool accumulate, std::vector<T>& scratch) {
  scratch.resize(M * K);
  transpose(K, M, A, lda, scratch.data());
  gemm_nn(M, N, K, scratch.data(), K, B, ldb, C, ldc, accumulate);
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;
};

// cols[(c*kh + i)*kw + j, oy*out_w + ox] = x[c, oy*s - p + i, ox*s - p + j] (zero outside).
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t P = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* xc = x + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? T(0)
                                                                     : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatters-adds cols back into dx.
template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* dx) {
  const std::size_t P = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* xc = dx + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          T* dst = xc + static_cast<std::size_t>(iy) * g.width;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace pvtadp::kernels
