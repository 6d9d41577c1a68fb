#include "ssrstf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ssrstf::metrics {

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 column(const Mat3& m, std::size_t c) { return {m[0][c], m[1][c], m[2][c]}; }
void set_column(Mat3& m, std::size_t c, const Vec3& v) {
  for (std::size_t r = 0; r < 3; ++r) m[r][c] = v[r];
}

Mat3 identity() { return {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}}; }

Vec3 centroid(const std::vector<Vec3>& pts) {
  Vec3 c{};
  for (const auto& p : pts)
    for (std::size_t k = 0; k < 3; ++k) c[k] += p[k];
  for (auto& v : c) v /= static_cast<double>(pts.size());
  return c;
}

void check_pair(const Tensor<double>& pred, const Tensor<double>& gt) {
  if (pred.shape() != gt.shape())
    throw ShapeError("metrics: prediction " + to_string(pred.shape()) + " vs ground truth " +
                     to_string(gt.shape()));
  if (pred.rank() < 2 || pred.shape().back() != 3)
    throw ShapeError("metrics: expected (..., J, 3) poses, got " + to_string(pred.shape()));
}

std::size_t joints_of(const Tensor<double>& t) { return t.shape()[t.rank() - 2]; }

}  // namespace

double determinant(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat3 transpose(const Mat3& m) {
  Mat3 t{};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) t[i][j] = m[j][i];
  return t;
}

// One-sided Jacobi: rotate column pairs of A until mutually orthogonal. The
// accumulated rotations form V; column norms are the singular values.
Svd3 svd3(const Mat3& a) {
  Mat3 w = a;
  Mat3 v = identity();
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p < 2; ++p)
      for (std::size_t q = p + 1; q < 3; ++q) {
        const Vec3 wp = column(w, p), wq = column(w, q);
        const double alpha = dot(wp, wp), beta = dot(wq, wq), gamma = dot(wp, wq);
        if (gamma == 0 || std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1 + zeta * zeta));
        const double c = 1 / std::sqrt(1 + t * t), s = c * t;
        for (Mat3* m : {&w, &v}) {
          const Vec3 mp = column(*m, p), mq = column(*m, q);
          Vec3 np{}, nq{};
          for (std::size_t r = 0; r < 3; ++r) {
            np[r] = c * mp[r] - s * mq[r];
            nq[r] = s * mp[r] + c * mq[r];
          }
          set_column(*m, p, np);
          set_column(*m, q, nq);
        }
      }
    if (!rotated) break;
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  Vec3 sigma{norm(column(w, 0)), norm(column(w, 1)), norm(column(w, 2))};
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return sigma[i] > sigma[j]; });
  Svd3 out;
  const double tol = 1e-12 * std::max(sigma[order[0]], 1e-300);
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t src = order[k];
    out.s[k] = sigma[src];
    set_column(out.v, k, column(v, src));
    Vec3 u{};
    if (sigma[src] > tol)
      for (std::size_t r = 0; r < 3; ++r) u[r] = w[r][src] / sigma[src];
    set_column(out.u, k, u);
  }
  return out;
}

Alignment procrustes_transform(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                               ProcrustesMode mode, std::size_t root) {
  if (pred.size() != gt.size())
    throw ShapeError("procrustes: " + std::to_string(pred.size()) + " predicted vs " +
                     std::to_string(gt.size()) + " ground-truth joints");
  if (gt.size() < 3) throw std::invalid_argument("procrustes: need at least 3 joints");
  if (root >= gt.size()) throw std::invalid_argument("procrustes: root index out of range");
  const Vec3 mp = centroid(pred), mg = centroid(gt);
  const double n = static_cast<double>(gt.size());
  double var_p = 0, var_g = 0;
  Mat3 cov{};  // (1/n) sum (g - mg)(p - mp)^T
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Vec3 p = sub(pred[i], mp), g = sub(gt[i], mg);
    var_p += dot(p, p) / n;
    var_g += dot(g, g) / n;
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) cov[r][c] += g[r] * p[c] / n;
  }
  if (var_g == 0) throw std::invalid_argument("procrustes: degenerate ground truth, all joints coincide");

  Alignment a;
  auto svd = svd3(cov);
  const double rank_tol = 1e-10 * svd.s[0];
  const int rank = (svd.s[0] > 0) + (svd.s[1] > rank_tol) + (svd.s[2] > rank_tol);
  if (rank < 2) {
    a.rotation = identity();
    a.scale = 1;
    a.translation = sub(gt[root], pred[root]);
    a.fallback = true;
    return a;
  }
  if (rank == 2) set_column(svd.u, 2, cross(column(svd.u, 0), column(svd.u, 1)));
  const double flip = determinant(svd.u) * determinant(svd.v) < 0 ? -1.0 : 1.0;
  Mat3 us = svd.u;
  for (std::size_t r = 0; r < 3; ++r) us[r][2] *= flip;
  a.rotation = multiply(us, transpose(svd.v));
  a.scale = mode == ProcrustesMode::similarity
                ? (svd.s[0] + svd.s[1] + flip * svd.s[2]) / var_p
                : 1.0;
  Vec3 rp{};
  for (std::size_t r = 0; r < 3; ++r) rp[r] = dot(a.rotation[r], mp);
  for (std::size_t r = 0; r < 3; ++r) a.translation[r] = mg[r] - a.scale * rp[r];
  return a;
}

std::vector<Vec3> apply_alignment(const Alignment& a, const std::vector<Vec3>& points) {
  std::vector<Vec3> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t r = 0; r < 3; ++r)
      out[i][r] = a.scale * dot(a.rotation[r], points[i]) + a.translation[r];
  return out;
}

std::vector<Vec3> procrustes_align(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                                   ProcrustesMode mode) {
  return apply_alignment(procrustes_transform(pred, gt, mode), pred);
}

std::size_t pose_count(const Tensor<double>& poses) {
  if (poses.rank() < 2 || poses.shape().back() != 3)
    throw ShapeError("metrics: expected (..., J, 3) poses, got " + to_string(poses.shape()));
  return poses.size() / (3 * joints_of(poses));
}

std::vector<Vec3> pose_at(const Tensor<double>& poses, std::size_t i) {
  const std::size_t J = joints_of(poses);
  std::vector<Vec3> out(J);
  const double* p = poses.ptr() + i * J * 3;
  for (std::size_t j = 0; j < J; ++j) out[j] = {p[3 * j], p[3 * j + 1], p[3 * j + 2]};
  return out;
}

std::vector<double> joint_errors(const Tensor<double>& pred, const Tensor<double>& gt,
                                 std::size_t root) {
  check_pair(pred, gt);
  const std::size_t J = joints_of(gt);
  if (root >= J) throw std::invalid_argument("metrics: root index out of range");
  std::vector<double> out;
  out.reserve(pred.size() / 3);
  for (std::size_t i = 0; i < pose_count(gt); ++i) {
    const auto p = pose_at(pred, i), g = pose_at(gt, i);
    for (std::size_t j = 0; j < J; ++j) out.push_back(norm(sub(sub(p[j], p[root]), sub(g[j], g[root]))));
  }
  return out;
}

double mpjpe(const Tensor<double>& pred, const Tensor<double>& gt, std::size_t root) {
  const auto e = joint_errors(pred, gt, root);
  return std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
}

ProcrustesSummary p_mpjpe_detail(const Tensor<double>& pred, const Tensor<double>& gt,
                                 ProcrustesMode mode, std::size_t root) {
  check_pair(pred, gt);
  ProcrustesSummary out;
  const std::size_t poses = pose_count(gt);
  double total = 0;
  for (std::size_t i = 0; i < poses; ++i) {
    const auto p = pose_at(pred, i), g = pose_at(gt, i);
    const auto a = procrustes_transform(p, g, mode, root);
    out.fallbacks += a.fallback;
    const auto aligned = apply_alignment(a, p);
    double pose_total = 0;
    for (std::size_t j = 0; j < g.size(); ++j) pose_total += norm(sub(aligned[j], g[j]));
    total += pose_total / static_cast<double>(g.size());
  }
  out.error_mm = total / static_cast<double>(poses);
  return out;
}

double p_mpjpe(const Tensor<double>& pred, const Tensor<double>& gt, ProcrustesMode mode) {
  return p_mpjpe_detail(pred, gt, mode).error_mm;
}

double pck_of_errors(const std::vector<double>& errors, double threshold_mm) {
  if (errors.empty()) throw std::invalid_argument("pck: no errors");
  const auto hits = std::count_if(errors.begin(), errors.end(), [&](double e) { return e <= threshold_mm; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(errors.size());
}

std::vector<double> auc_thresholds() {
  std::vector<double> t;
  for (int k = 0; k <= 30; ++k) t.push_back(5.0 * k);
  return t;
}

double auc_of_errors(const std::vector<double>& errors) {
  if (errors.empty()) throw std::invalid_argument("auc: no errors");
  // Integer hit counts keep the mean of the PCK curve exact.
  const auto ts = auc_thresholds();
  std::size_t hits = 0;
  for (double t : ts)
    hits += static_cast<std::size_t>(
        std::count_if(errors.begin(), errors.end(), [&](double e) { return e <= t; }));
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ts.size() * errors.size());
}

double pck(const Tensor<double>& pred, const Tensor<double>& gt, double threshold_mm,
           std::size_t root) {
  if (!(threshold_mm > 0)) throw std::invalid_argument("pck: threshold must be positive");
  return pck_of_errors(joint_errors(pred, gt, root), threshold_mm);
}

double auc(const Tensor<double>& pred, const Tensor<double>& gt, std::size_t root) {
  return auc_of_errors(joint_errors(pred, gt, root));
}

std::vector<double> pose_errors(const Tensor<double>& pred, const Tensor<double>& gt,
                                std::size_t root) {
  const auto e = joint_errors(pred, gt, root);
  const std::size_t J = joints_of(gt);
  std::vector<double> out;
  for (std::size_t i = 0; i < e.size(); i += J)
    out.push_back(std::accumulate(e.begin() + i, e.begin() + i + J, 0.0) / static_cast<double>(J));
  return out;
}

Histogram histogram_of(const std::vector<double>& errors, double bin_width_mm) {
  if (!(bin_width_mm > 0)) throw std::invalid_argument("histogram: bin width must be positive");
  if (errors.empty()) throw std::invalid_argument("histogram: no poses");
  Histogram h;
  h.bin_width_mm = bin_width_mm;
  const double top = *std::max_element(errors.begin(), errors.end());
  const std::size_t bins = static_cast<std::size_t>(std::floor(top / bin_width_mm)) + 1;
  std::vector<std::size_t> counts(bins, 0);
  for (double e : errors) ++counts[std::min(bins - 1, static_cast<std::size_t>(std::floor(e / bin_width_mm)))];
  for (std::size_t k = 0; k <= bins; ++k) h.edges_mm.push_back(static_cast<double>(k) * bin_width_mm);
  for (auto c : counts) h.proportions.push_back(static_cast<double>(c) / static_cast<double>(errors.size()));
  return h;
}

Histogram error_histogram(const Tensor<double>& pred, const Tensor<double>& gt,
                          double bin_width_mm, std::size_t root) {
  return histogram_of(pose_errors(pred, gt, root), bin_width_mm);
}

std::string Histogram::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "bin_start_mm,bin_end_mm,proportion\n";
  for (std::size_t k = 0; k < proportions.size(); ++k)
    os << edges_mm[k] << ',' << edges_mm[k + 1] << ',' << proportions[k] << '\n';
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["poses"] = poses;
  j["mpjpe_mm"] = mpjpe_mm;
  j["p_mpjpe_mm"] = p_mpjpe_mm;
  j["procrustes_mode"] = procrustes_mode == ProcrustesMode::similarity ? "similarity" : "rigid";
  j["procrustes_fallbacks"] = procrustes_fallbacks;
  j["pck_threshold_mm"] = pck_threshold_mm;
  j["pck_percent"] = pck_percent;
  j["auc_percent"] = auc_percent;
  nlohmann::ordered_json actions = nlohmann::ordered_json::object();
  for (const auto& [name, s] : per_action)
    actions[name] = {{"poses", s.poses}, {"mpjpe_mm", s.mpjpe_mm}, {"p_mpjpe_mm", s.p_mpjpe_mm}};
  j["per_action"] = actions;
  j["histogram"] = {{"bin_width_mm", histogram.bin_width_mm},
                    {"edges_mm", histogram.edges_mm},
                    {"proportions", histogram.proportions}};
  return j.dump(2);
}

EvalReport evaluate(const std::vector<EvalClip>& clips, const EvalOptions& options) {
  if (clips.empty()) throw std::invalid_argument("evaluate: no clips");
  EvalReport r;
  r.procrustes_mode = options.mode;
  r.pck_threshold_mm = options.pck_threshold_mm;
  std::vector<double> joints, poses;
  double p2_total = 0;
  struct Acc {
    double p1 = 0, p2 = 0;
    std::size_t joints = 0, poses = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& clip : clips) {
    const auto e = joint_errors(clip.pred, clip.gt, options.root);
    const auto pe = pose_errors(clip.pred, clip.gt, options.root);
    const auto p2 = p_mpjpe_detail(clip.pred, clip.gt, options.mode, options.root);
    const std::size_t n = pose_count(clip.gt);
    joints.insert(joints.end(), e.begin(), e.end());
    poses.insert(poses.end(), pe.begin(), pe.end());
    p2_total += p2.error_mm * static_cast<double>(n);
    r.procrustes_fallbacks += p2.fallbacks;
    auto& a = acc[clip.action];
    a.p1 += std::accumulate(e.begin(), e.end(), 0.0);
    a.joints += e.size();
    a.p2 += p2.error_mm * static_cast<double>(n);
    a.poses += n;
  }
  r.poses = poses.size();
  r.mpjpe_mm = std::accumulate(joints.begin(), joints.end(), 0.0) / static_cast<double>(joints.size());
  r.p_mpjpe_mm = p2_total / static_cast<double>(r.poses);
  r.pck_percent = pck_of_errors(joints, options.pck_threshold_mm);
  r.auc_percent = auc_of_errors(joints);
  r.histogram = histogram_of(poses, options.bin_width_mm);
  for (const auto& [name, a] : acc)
    r.per_action[name] = {a.p1 / static_cast<double>(a.joints), a.p2 / static_cast<double>(a.poses), a.poses};
  return r;
}

}  // namespace ssrstf::metrics
