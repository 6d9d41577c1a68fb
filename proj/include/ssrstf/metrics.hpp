#pragma once

// Pose evaluation. Poses are tensors whose last two axes are (J, 3) in
// millimetres; any leading axes (batch, frames) are treated as a list of poses.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ssrstf/tensor.hpp"

namespace ssrstf::metrics {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;  // row-major

inline constexpr std::size_t kRootJoint = 0;
inline constexpr double kPckThresholdMm = 150.0;

/// Similarity (rotation, translation, uniform scale) or strict rigid (scale 1).
enum class ProcrustesMode { similarity, rigid };

struct Alignment {
  Mat3 rotation{};
  double scale = 1.0;
  Vec3 translation{};
  /// Set when the cross-covariance has rank < 2 and the pose was root-aligned instead.
  bool fallback = false;
};

/// Best s R p + t for one pose: pred, gt are J x 3, J >= 3. Throws
/// std::invalid_argument if the ground truth has no spread at all. A rank < 2
/// cross-covariance falls back to translating pred's root onto gt's root.
Alignment procrustes_transform(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                               ProcrustesMode mode = ProcrustesMode::similarity,
                               std::size_t root = kRootJoint);

std::vector<Vec3> apply_alignment(const Alignment& a, const std::vector<Vec3>& points);

std::vector<Vec3> procrustes_align(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                                   ProcrustesMode mode = ProcrustesMode::similarity);

/// Number of poses in a (..., J, 3) tensor and pose `i` as a point list.
std::size_t pose_count(const Tensor<double>& poses);
std::vector<Vec3> pose_at(const Tensor<double>& poses, std::size_t i);

/// Root-aligned Euclidean error of every joint of every pose, pose-major.
std::vector<double> joint_errors(const Tensor<double>& pred, const Tensor<double>& gt,
                                 std::size_t root = kRootJoint);

/// Protocol 1: mean root-aligned joint error.
double mpjpe(const Tensor<double>& pred, const Tensor<double>& gt, std::size_t root = kRootJoint);

struct ProcrustesSummary {
  double error_mm = 0;
  std::size_t fallbacks = 0;  // poses that were only root-aligned
};

/// Protocol 2: mean joint error after per-pose Procrustes alignment.
ProcrustesSummary p_mpjpe_detail(const Tensor<double>& pred, const Tensor<double>& gt,
                                 ProcrustesMode mode = ProcrustesMode::similarity,
                                 std::size_t root = kRootJoint);
double p_mpjpe(const Tensor<double>& pred, const Tensor<double>& gt,
               ProcrustesMode mode = ProcrustesMode::similarity);

/// Percentage of errors <= threshold (threshold may be 0 here).
double pck_of_errors(const std::vector<double>& errors, double threshold_mm);
/// Mean PCK over thresholds 0, 5, ..., 150 mm.
double auc_of_errors(const std::vector<double>& errors);
std::vector<double> auc_thresholds();

/// PCK over root-aligned joint errors; threshold must be positive.
double pck(const Tensor<double>& pred, const Tensor<double>& gt,
           double threshold_mm = kPckThresholdMm, std::size_t root = kRootJoint);
double auc(const Tensor<double>& pred, const Tensor<double>& gt, std::size_t root = kRootJoint);

struct Histogram {
  double bin_width_mm = 0;
  std::vector<double> edges_mm;     // bins + 1 edges, [edge_k, edge_k+1)
  std::vector<double> proportions;  // sums to 1

  std::string to_csv() const;
};

/// Histogram of per-pose root-aligned MPJPE.
Histogram histogram_of(const std::vector<double>& pose_errors, double bin_width_mm);
Histogram error_histogram(const Tensor<double>& pred, const Tensor<double>& gt,
                          double bin_width_mm, std::size_t root = kRootJoint);
/// Root-aligned MPJPE of each pose.
std::vector<double> pose_errors(const Tensor<double>& pred, const Tensor<double>& gt,
                                std::size_t root = kRootJoint);

struct ActionScores {
  double mpjpe_mm = 0;
  double p_mpjpe_mm = 0;
  std::size_t poses = 0;
};

struct EvalReport {
  double mpjpe_mm = 0;
  double p_mpjpe_mm = 0;
  double pck_threshold_mm = kPckThresholdMm;
  double pck_percent = 0;
  double auc_percent = 0;
  std::size_t poses = 0;
  std::size_t procrustes_fallbacks = 0;
  ProcrustesMode procrustes_mode = ProcrustesMode::similarity;
  std::map<std::string, ActionScores> per_action;
  Histogram histogram;

  std::string to_json() const;
};

struct EvalClip {
  std::string action;
  Tensor<double> pred;  // (T, J, 3) or any (..., J, 3)
  Tensor<double> gt;
};

struct EvalOptions {
  ProcrustesMode mode = ProcrustesMode::similarity;
  double pck_threshold_mm = kPckThresholdMm;
  double bin_width_mm = 10.0;
  std::size_t root = kRootJoint;
};

/// Pools all clips; per-action scores pool the clips sharing a label.
EvalReport evaluate(const std::vector<EvalClip>& clips, const EvalOptions& options = {});

// Small linear-algebra helpers, exposed for tests.
double determinant(const Mat3& m);
Mat3 multiply(const Mat3& a, const Mat3& b);
Mat3 transpose(const Mat3& m);
/// a = U diag(s) V^T with s descending and non-negative, U and V orthogonal
/// where the rank allows (columns of U for zero singular values are zero).
struct Svd3 {
  Mat3 u{};
  Vec3 s{};
  Mat3 v{};
};
Svd3 svd3(const Mat3& a);

}  // namespace ssrstf::metrics
