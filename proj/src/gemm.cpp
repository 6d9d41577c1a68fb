#include "ssrstf/gemm.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <vector>

#include "ssrstf/parallel.hpp"

namespace ssrstf {

std::size_t thread_count() {
  static const std::size_t count = [] {
    if (const char* env = std::getenv("SSRSTF_THREADS")) {
      char* end = nullptr;
      long v = std::strtol(env, &end, 10);
      if (end != env && v > 0) return static_cast<std::size_t>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return static_cast<std::size_t>(hw == 0 ? 1 : hw);
  }();
  return count;
}

namespace gemm {

namespace {

// Register tile: kRows rows of C by two vector widths of columns.
constexpr std::size_t kRows = 4;
template <typename T>
constexpr std::size_t kCols = 128 / sizeof(T);

// C[r, 0:W] += sum_k A[r, k] B[k, 0:W] for kRows rows. lda/ldb/ldc are row strides.
template <typename T>
inline void tile(std::size_t K, const T* A, std::size_t lda, const T* B, std::size_t ldb, T* C,
                 std::size_t ldc) {
  constexpr std::size_t W = kCols<T>;
  T acc[kRows][W];
  for (std::size_t r = 0; r < kRows; ++r)
    for (std::size_t j = 0; j < W; ++j) acc[r][j] = C[r * ldc + j];
  for (std::size_t k = 0; k < K; ++k) {
    const T* b = B + k * ldb;
    for (std::size_t r = 0; r < kRows; ++r) {
      const T a = A[r * lda + k];
      for (std::size_t j = 0; j < W; ++j) acc[r][j] += a * b[j];
    }
  }
  for (std::size_t r = 0; r < kRows; ++r)
    for (std::size_t j = 0; j < W; ++j) C[r * ldc + j] = acc[r][j];
}

// Plain row kernel for products too small to tile.
template <typename T>
void simple(std::size_t r0, std::size_t r1, std::size_t N, std::size_t K, const T* A, const T* B,
            T* C) {
  for (std::size_t i = r0; i < r1; ++i) {
    const T* a = A + i * K;
    T* c = C + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// Row blocks per task; keeps tiny products on the calling thread.
std::size_t block_grain(std::size_t cols, std::size_t inner) {
  std::size_t work = std::max<std::size_t>(1, kRows * cols * inner);
  return std::max<std::size_t>(1, (1u << 16) / work);
}

// Full kRows x W tiles go through the register kernel; the ragged right and
// bottom edges use the row kernel.
template <typename T>
void tiled(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  constexpr std::size_t W = kCols<T>;
  const std::size_t full_cols = N - N % W;
  const std::size_t blocks = M / kRows;
  parallel_for(blocks, block_grain(N, K), [&](std::size_t b0, std::size_t b1) {
    for (std::size_t blk = b0; blk < b1; ++blk) {
      const std::size_t i0 = blk * kRows;
      for (std::size_t j0 = 0; j0 < full_cols; j0 += W)
        tile(K, A + i0 * K, K, B + j0, N, C + i0 * N + j0, N);
      if (full_cols < N)
        for (std::size_t i = i0; i < i0 + kRows; ++i)
          for (std::size_t k = 0; k < K; ++k) {
            const T av = A[i * K + k];
            const T* b = B + k * N;
            T* c = C + i * N;
            for (std::size_t j = full_cols; j < N; ++j) c[j] += av * b[j];
          }
    }
  });
  simple(blocks * kRows, M, N, K, A, B, C);
}

template <typename T>
std::vector<T> transposed(std::size_t rows, std::size_t cols, const T* X) {
  std::vector<T> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = X[i * cols + j];
  return out;
}

}  // namespace

template <typename T>
void nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  if (M < kRows || N < kCols<T>) {
    parallel_for(M, std::max<std::size_t>(1, (1u << 16) / std::max<std::size_t>(1, N * K)),
                 [=](std::size_t r0, std::size_t r1) { simple(r0, r1, N, K, A, B, C); });
    return;
  }
  tiled(M, N, K, A, B, C);
}

template <typename T>
void nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  const auto bt = transposed(K, N, B);
  nn(M, K, N, A, bt.data(), C);
}

template <typename T>
void tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  const auto at = transposed(M, K, A);
  nn(K, N, M, at.data(), B, C);
}

template void nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void tn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void tn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);

}  // namespace gemm
}  // namespace ssrstf
