#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <type_traits>

#include "ssrstf/gemm.hpp"
#include "ssrstf/ops.hpp"
#include "ssrstf/verify/gradcheck.hpp"
#include "test_support.hpp"

using namespace ssrstf;
using ssrstf::testing::random_tensor;
using ssrstf::testing::tensor;
using ssrstf::testing::values;

TEST(Tensor, RejectsMismatchedDataLength) {
  EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_THROW(Tensor<float>({2, 0}), ShapeError);
}

TEST(Matmul, IdentityTimesMatrix) {
  Tape<double> tape;
  auto eye = tape.constant(tensor<double>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  auto m = tape.constant(tensor<double>({3, 2}, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(values(matmul(eye, m).value()), values(m.value()));
}

TEST(Matmul, HandArithmetic) {
  Tape<float> tape;
  auto a = tape.constant(tensor<float>({2, 2}, {1, 2, 3, 4}));
  auto b = tape.constant(tensor<float>({2, 1}, {1, 1}));
  auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(values(c.value()), (std::vector<double>{3, 7}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_tensor<double>(rng, {4, 5});
    auto b = random_tensor<double>(rng, {5, 6});
    Tape<double> tape;
    auto c = matmul(tape.constant(a), tape.constant(b)).value();
    auto ref = verify::matmul_triple_loop(a, b);
    double inf = 0;
    for (auto v : ref.data()) inf = std::max(inf, std::abs(v));
    EXPECT_LE(max_abs_diff(c, ref), 1e-6 * inf);
  }
}

TEST(Matmul, BroadcastsLeadingAxes) {
  Rng rng(3);
  auto a = random_tensor<double>(rng, {2, 3, 4, 5});
  auto b = random_tensor<double>(rng, {3, 5, 2});
  Tape<double> tape;
  auto c = matmul(tape.constant(a), tape.constant(b)).value();
  ASSERT_EQ(c.shape(), (Shape{2, 3, 4, 2}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t h = 0; h < 3; ++h) {
      Tensor<double> a2({4, 5}), b2({5, 2});
      for (std::size_t i = 0; i < 20; ++i) a2[i] = a[(n * 3 + h) * 20 + i];
      for (std::size_t i = 0; i < 10; ++i) b2[i] = b[h * 10 + i];
      auto ref = verify::matmul_triple_loop(a2, b2);
      for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(c[(n * 3 + h) * 8 + i], ref[i], 1e-12);
    }
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  Tape<float> tape;
  auto a = tape.constant(Tensor<float>({2, 3}));
  auto b = tape.constant(Tensor<float>({4, 2}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos);
    EXPECT_NE(msg.find("(4, 2)"), std::string::npos);
  }
}

// Sizes chosen to hit the register tiles, the ragged right and bottom edges
// and the small-product path.
template <typename T>
void check_gemm_kernels(std::size_t M, std::size_t N, std::size_t K) {
  std::mt19937_64 rng(M * 1000 + N * 10 + K);
  std::uniform_real_distribution<double> d(-1, 1);
  auto fill = [&](std::size_t n) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(d(rng));
    return v;
  };
  const auto A = fill(M * K), B = fill(K * N), C0 = fill(M * N);
  const double tol = std::is_same_v<T, float> ? 1e-4 : 1e-12;
  // C += A B
  auto C = C0;
  gemm::nn(M, N, K, A.data(), B.data(), C.data());
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      double ref = C0[i * N + j];
      for (std::size_t k = 0; k < K; ++k) ref += double(A[i * K + k]) * B[k * N + j];
      ASSERT_NEAR(C[i * N + j], ref, tol) << "nn " << M << "x" << N << "x" << K;
    }
  // D[M,K] += C0[M,N] B[K,N]^T
  auto D = A;
  gemm::nt(M, N, K, C0.data(), B.data(), D.data());
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t k = 0; k < K; ++k) {
      double ref = A[i * K + k];
      for (std::size_t j = 0; j < N; ++j) ref += double(C0[i * N + j]) * B[k * N + j];
      ASSERT_NEAR(D[i * K + k], ref, tol) << "nt " << M << "x" << N << "x" << K;
    }
  // E[K,N] += A[M,K]^T C0[M,N]
  auto E = B;
  gemm::tn(M, N, K, A.data(), C0.data(), E.data());
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < N; ++j) {
      double ref = B[k * N + j];
      for (std::size_t i = 0; i < M; ++i) ref += double(A[i * K + k]) * C0[i * N + j];
      ASSERT_NEAR(E[k * N + j], ref, tol) << "tn " << M << "x" << N << "x" << K;
    }
}

TEST(Gemm, KernelsMatchDirectSums) {
  for (auto [M, N, K] : std::vector<std::array<std::size_t, 3>>{
           {1, 1, 1}, {3, 40, 5}, {4, 32, 1}, {37, 70, 19}, {64, 64, 64}, {9, 17, 33}, {130, 33, 7}}) {
    check_gemm_kernels<float>(M, N, K);
    check_gemm_kernels<double>(M, N, K);
  }
}

TEST(Softmax, UniformLogits) {
  Tape<double> tape;
  auto y = softmax_last_axis(tape.constant(tensor<double>({3}, {2.5, 2.5, 2.5}))).value();
  for (auto v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ExactAnalyticCase) {
  Tape<double> tape;
  auto y = softmax_last_axis(tape.constant(tensor<double>({3}, {0, std::log(2.0), std::log(3.0)}))).value();
  EXPECT_NEAR(y[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(y[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(y[2], 1.0 / 2.0, 1e-15);
}

TEST(Softmax, MatchesExpNormalizeOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor<float>(rng, {7}, -4, 4);
    Tape<float> tape;
    auto y = softmax_last_axis(tape.constant(x)).value();
    auto ref = verify::softmax_direct(values(x));
    double total = 0;
    for (std::size_t i = 0; i < 7; ++i) {
      EXPECT_NEAR(y[i], ref[i], 1e-6);
      EXPECT_GE(y[i], 0.0f);
      EXPECT_LE(y[i], 1.0f);
      total += y[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Softmax, NonFiniteInputReported) {
  Tape<float> tape;
  auto x = tape.constant(tensor<float>({2}, {0, std::nan("")}));
  EXPECT_THROW(softmax_last_axis(x), NumericError);
}

TEST(LayerNorm, ConstantSliceGivesZeros) {
  Tape<double> tape;
  auto x = tape.constant(tensor<double>({4}, {3, 3, 3, 3}));
  auto y = layer_norm(x, tape.constant(Tensor<double>::ones({4})), tape.constant(Tensor<double>::zeros({4})));
  for (auto v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoElementCase) {
  Tape<double> tape;
  auto x = tape.constant(tensor<double>({2}, {1, 3}));
  auto y = layer_norm(x, tape.constant(Tensor<double>::ones({2})),
                      tape.constant(Tensor<double>::zeros({2})), 1e-12).value();
  EXPECT_NEAR(y[0], -1.0, 1e-9);
  EXPECT_NEAR(y[1], 1.0, 1e-9);
}

TEST(LayerNorm, RandomSliceMoments) {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_tensor<float>(rng, {3, 16}, -5, 5);
    Tape<float> tape;
    auto y = layer_norm(tape.constant(x), tape.constant(Tensor<float>::ones({16})),
                        tape.constant(Tensor<float>::zeros({16}))).value();
    for (std::size_t r = 0; r < 3; ++r) {
      long double m = 0, v = 0;
      for (std::size_t c = 0; c < 16; ++c) m += y[r * 16 + c];
      m /= 16;
      for (std::size_t c = 0; c < 16; ++c) v += (y[r * 16 + c] - m) * (y[r * 16 + c] - m);
      v /= 16;
      EXPECT_LE(std::abs(static_cast<double>(m)), 1e-6);
      EXPECT_NEAR(static_cast<double>(v), 1.0, 1e-4);
    }
  }
}

TEST(Gelu, KnownPointsAndOracleGrid) {
  Tape<double> tape;
  std::vector<double> grid;
  for (int i = 0; i < 100; ++i) grid.push_back(-6.0 + 12.0 * i / 99.0);
  auto y = gelu(tape.constant(tensor<double>({100}, grid))).value();
  for (int i = 0; i < 100; ++i) EXPECT_NEAR(y[i], verify::gelu_erf(grid[i]), 1e-6);
  auto z = gelu(tape.constant(tensor<double>({2}, {0, 10}))).value();
  EXPECT_EQ(z[0], 0.0);
  EXPECT_NEAR(z[1], 10.0, 1e-4);
}

TEST(Elementwise, HadamardWithOnesIsIdentity) {
  Rng rng(1);
  auto x = random_tensor<float>(rng, {3, 4});
  Tape<float> tape;
  auto y = mul(tape.constant(x), tape.constant(Tensor<float>::ones({3, 4}))).value();
  EXPECT_EQ(values(y), values(x));
}

TEST(Elementwise, PermuteAndReshapeRoundTripsAreBitIdentical) {
  Rng rng(2);
  auto x = random_tensor<float>(rng, {2, 3, 4, 5});
  Tape<float> tape;
  auto v = tape.constant(x);
  auto p = permute(permute(v, {2, 0, 3, 1}), {1, 3, 0, 2});
  EXPECT_EQ(p.value().vec(), x.vec());
  auto r = reshape(reshape(v, {6, 20}), {2, 3, 4, 5});
  EXPECT_EQ(r.value().vec(), x.vec());
  EXPECT_EQ(r.shape(), x.shape());
}

TEST(Elementwise, ConcatSlicesAreRecoverable) {
  Rng rng(4);
  auto a = random_tensor<double>(rng, {2, 3});
  auto b = random_tensor<double>(rng, {2, 5});
  Tape<double> tape;
  auto c = concat_last_axis(tape.constant(a), tape.constant(b));
  ASSERT_EQ(c.shape(), (Shape{2, 8}));
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(c.value().at({i, j}), a.at({i, j}));
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(c.value().at({i, 3 + j}), b.at({i, j}));
  }
  EXPECT_EQ(slice(c, 1, 3, 5).value().vec(), b.vec());
}

TEST(Elementwise, BroadcastShapeMismatchThrows) {
  Tape<float> tape;
  EXPECT_THROW(add(tape.constant(Tensor<float>({2, 3})), tape.constant(Tensor<float>({4}))),
               ShapeError);
}

TEST(Backward, SumGivesOnes) {
  Rng rng(6);
  Tape<double> tape;
  auto x = tape.variable(random_tensor<double>(rng, {3, 4}));
  tape.backward(sum(x));
  for (auto g : tape.grad(x).data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, QuadraticFormGivesInput) {
  Rng rng(7);
  Tape<double> tape;
  auto xv = random_tensor<double>(rng, {5});
  auto x = tape.variable(xv);
  tape.backward(scale(sum(mul(x, x)), 0.5));
  EXPECT_EQ(tape.grad(x).vec(), xv.vec());
}

TEST(Backward, UnreachableInputGetsZeroGradient) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>::ones({3}));
  auto unused = tape.variable(Tensor<double>::ones({2}));
  tape.backward(sum(x));
  for (auto g : tape.grad(unused).data()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, ReusedTapeIsUsageError) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>::ones({3}));
  auto loss = sum(x);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), UsageError);
}

TEST(Backward, NonScalarLossIsUsageError) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>::ones({3}));
  EXPECT_THROW(tape.backward(x), UsageError);
}

// Finite-difference checks for every primitive over 20 random instances each.
class PrimitiveGradients : public ::testing::TestWithParam<std::string> {};

TEST_P(PrimitiveGradients, MatchCentralDifferences) {
  const std::string op = GetParam();
  Rng rng(std::hash<std::string>{}(op));
  for (int instance = 0; instance < 20; ++instance) {
    std::vector<Tensor<double>> inputs;
    verify::LossFn fn;
    // A random projection keeps the loss sensitive to every output element.
    auto weighted = [](Tape<double>& t, const Var<double>& y, std::uint64_t seed) {
      Rng r(seed);
      return sum(mul(y, t.constant(random_tensor<double>(r, y.shape()))));
    };
    const std::uint64_t wseed = rng();
    if (op == "matmul") {
      inputs = {random_tensor<double>(rng, {2, 3, 4}), random_tensor<double>(rng, {4, 5})};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, matmul(v[0], v[1]), wseed); };
    } else if (op == "batched_matmul") {
      inputs = {random_tensor<double>(rng, {2, 3, 4}), random_tensor<double>(rng, {2, 4, 2})};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, matmul(v[0], v[1]), wseed); };
    } else if (op == "linear") {
      inputs = {random_tensor<double>(rng, {3, 4}), random_tensor<double>(rng, {4, 2}),
                random_tensor<double>(rng, {2})};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, linear(v[0], v[1], v[2]), wseed); };
    } else if (op == "add_broadcast") {
      inputs = {random_tensor<double>(rng, {2, 3, 4}), random_tensor<double>(rng, {1, 3, 4})};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, add(v[0], v[1]), wseed); };
    } else if (op == "sub") {
      inputs = {random_tensor<double>(rng, {3, 4}), random_tensor<double>(rng, {4})};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, sub(v[0], v[1]), wseed); };
    } else if (op == "hadamard_broadcast") {
      inputs = {random_tensor<double>(rng, {2, 3, 1}), random_tensor<double>(rng, {2, 3, 4})};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, mul(v[0], v[1]), wseed); };
    } else if (op == "scale") {
      inputs = {random_tensor<double>(rng, {5})};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, scale(v[0], -1.7), wseed); };
    } else if (op == "permute") {
      inputs = {random_tensor<double>(rng, {2, 3, 4})};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, permute(v[0], {2, 0, 1}), wseed); };
    } else if (op == "reshape") {
      inputs = {random_tensor<double>(rng, {2, 6})};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, reshape(v[0], {3, 4}), wseed); };
    } else if (op == "concat") {
      inputs = {random_tensor<double>(rng, {2, 3}), random_tensor<double>(rng, {2, 2})};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, concat_last_axis(v[0], v[1]), wseed); };
    } else if (op == "slice_pad") {
      inputs = {random_tensor<double>(rng, {3, 5, 2})};
      fn = [&](Tape<double>& t, const auto& v) {
        return weighted(t, pad(slice(v[0], 1, 1, 3), 0, 1, 2), wseed);
      };
    } else if (op == "softmax") {
      inputs = {random_tensor<double>(rng, {3, 6}, -3, 3)};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, softmax_last_axis(v[0]), wseed); };
    } else if (op == "layer_norm") {
      inputs = {random_tensor<double>(rng, {3, 6}, -2, 2), random_tensor<double>(rng, {6}),
                random_tensor<double>(rng, {6})};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, layer_norm(v[0], v[1], v[2]), wseed); };
    } else if (op == "gelu") {
      inputs = {random_tensor<double>(rng, {10}, -3, 3)};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, gelu(v[0]), wseed); };
    } else if (op == "tanh") {
      inputs = {random_tensor<double>(rng, {10}, -2, 2)};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, ssrstf::tanh(v[0]), wseed); };
    } else if (op == "mean") {
      inputs = {random_tensor<double>(rng, {4, 3})};
      fn = [&](Tape<double>&, const auto& v) { return scale(mean(mul(v[0], v[0])), 3.0); };
    } else if (op == "norm_last_axis") {
      inputs = {random_tensor<double>(rng, {4, 3})};
      fn = [&](Tape<double>& t, const auto& v) { return weighted(t, norm_last_axis(v[0]), wseed); };
    }
    ASSERT_TRUE(fn) << op;
    auto r = verify::check_gradients(fn, inputs);
    EXPECT_TRUE(r.passed) << op << " instance " << instance << " max rel err " << r.max_rel_error
                          << " at " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradients,
                         ::testing::Values("matmul", "batched_matmul", "linear", "add_broadcast",
                                           "sub", "hadamard_broadcast", "scale", "permute",
                                           "reshape", "concat", "slice_pad", "softmax",
                                           "layer_norm", "gelu", "tanh", "mean",
                                           "norm_last_axis"));

TEST(GradCheck, CatchesAWrongGradient) {
  Rng rng(41);
  const std::vector<Tensor<double>> inputs{random_tensor<double>(rng, {6}, 0.5, 1.5)};
  // the recorded graph and the re-evaluated loss disagree by 0.1 percent
  auto r = verify::check_gradients(
      [](Tape<double>& t, const auto& v) {
        return t.grad_enabled() ? sum(mul(v[0], v[0])) : sum(mul(v[0], scale(v[0], 1.001)));
      },
      inputs);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_rel_error, 5e-4);
}

TEST(GradCheck, TinyGradientsAreJudgedAgainstRoundingNoise) {
  // a large constant loss term leaves the gradient unchanged but adds rounding
  const std::vector<Tensor<double>> inputs{Tensor<double>({3}, 1e-4)};
  auto fn = [](Tape<double>& t, const auto& v) {
    return add(sum(mul(v[0], v[0])), t.constant(Tensor<double>::scalar(1e5)));
  };
  verify::GradCheckOptions opts;
  EXPECT_TRUE(verify::check_gradients(fn, inputs, opts).passed);
  opts.rounding_floor = false;
  EXPECT_FALSE(verify::check_gradients(fn, inputs, opts).passed);
}
