#pragma once

#include <cstddef>

namespace ssrstf::gemm {

// Row-major kernels that accumulate into C (C += ...). Callers zero C first
// when they want a plain product.

/// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C);

/// C[M,K] += A[M,N] * B[K,N]^T
template <typename T>
void nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C);

/// C[K,N] += A[M,K]^T * B[M,N]
template <typename T>
void tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C);

}  // namespace ssrstf::gemm
