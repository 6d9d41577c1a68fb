#include "ssrstf/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "ssrstf/params.hpp"

namespace ssrstf::data {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'P', 'S', 'E', 'Q'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 1 + 4 + 4 + 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> payload_bytes(const PoseClip& clip) {
  std::vector<std::uint8_t> out;
  out.reserve(clip.values.size() * 4);
  for (float v : clip.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

using Mat = std::array<std::array<double, 3>, 3>;
using Vec = std::array<double, 3>;

Mat mul(const Mat& a, const Mat& b) {
  Mat r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

Vec mul(const Mat& a, const Vec& v) {
  Vec r{};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r[i] += a[i][k] * v[k];
  return r;
}

// Rz(z) Ry(y) Rx(x)
Mat rotation(double x, double y, double z) {
  const double cx = std::cos(x), sx = std::sin(x);
  const double cy = std::cos(y), sy = std::sin(y);
  const double cz = std::cos(z), sz = std::sin(z);
  const Mat rx{{{1, 0, 0}, {0, cx, -sx}, {0, sx, cx}}};
  const Mat ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
  const Mat rz{{{cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1}}};
  return mul(rz, mul(ry, rx));
}

}  // namespace

std::string to_string(PoseKind kind) { return kind == PoseKind::pose2d ? "pose2d" : "pose3d"; }

PoseKind parse_pose_kind(const std::string& text) {
  if (text == "pose2d") return PoseKind::pose2d;
  if (text == "pose3d") return PoseKind::pose3d;
  throw std::invalid_argument("unknown pose kind '" + text + "' (expected pose2d or pose3d)");
}

void PoseClip::validate() const {
  if (frames < 1) throw std::invalid_argument("clip '" + id + "': needs at least one frame");
  if (joints < 2) throw std::invalid_argument("clip '" + id + "': needs at least two joints");
  const std::size_t n = static_cast<std::size_t>(frames) * joints * 3;
  if (values.size() != n)
    throw std::invalid_argument("clip '" + id + "': " + std::to_string(values.size()) +
                                " values for " + std::to_string(frames) + "x" +
                                std::to_string(joints) + "x3");
  if (kind == PoseKind::pose2d)
    for (std::size_t i = 2; i < n; i += 3)
      if (!(values[i] >= 0.0f && values[i] <= 1.0f))
        throw std::invalid_argument("clip '" + id + "': confidence " + std::to_string(values[i]) +
                                    " outside [0, 1]");
}

Tensor<double> PoseClip::tensor() const {
  validate();
  return Tensor<double>({frames, joints, 3}, std::vector<double>(values.begin(), values.end()));
}

PoseClip PoseClip::from_tensor(std::string id, PoseKind kind, const Tensor<double>& t, float fps) {
  if (t.rank() != 3 || t.extent(2) != 3)
    throw ShapeError("clip tensor must be (T, J, 3), got " + ssrstf::to_string(t.shape()));
  PoseClip c;
  c.id = std::move(id);
  c.kind = kind;
  c.frames = static_cast<std::uint32_t>(t.extent(0));
  c.joints = static_cast<std::uint32_t>(t.extent(1));
  c.fps = fps;
  c.values.assign(t.data().begin(), t.data().end());
  c.validate();
  return c;
}

std::vector<std::uint8_t> encode_clip(const PoseClip& clip) {
  clip.validate();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kClipVersion);
  out.push_back(static_cast<std::uint8_t>(clip.kind));
  put_u32(out, clip.frames);
  put_u32(out, clip.joints);
  put_u32(out, std::bit_cast<std::uint32_t>(clip.fps));
  const auto payload = payload_bytes(clip);
  out.insert(out.end(), payload.begin(), payload.end());
  put_u32(out, crc_of(payload.data(), payload.size()));
  return out;
}

PoseClip decode_clip(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  if (bytes.size() < 4)
    throw TruncationError(source + ": truncated, " + std::to_string(bytes.size()) +
                          " bytes is shorter than the magic");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw BadMagicError(source + ": bad magic, expected \"PSEQ\"");
  if (bytes.size() < kHeaderBytes)
    throw TruncationError(source + ": truncated header (" + std::to_string(bytes.size()) +
                          " of " + std::to_string(kHeaderBytes) + " bytes)");
  const std::uint8_t* p = bytes.data();
  const std::uint32_t version = get_u32(p + 4);
  if (version != kClipVersion)
    throw VersionError(source + ": unsupported version " + std::to_string(version) +
                       ", expected " + std::to_string(kClipVersion));
  PoseClip clip;
  const std::uint8_t kind = p[8];
  if (kind > 1) throw ClipFormatError(source + ": unknown kind byte " + std::to_string(kind));
  clip.kind = static_cast<PoseKind>(kind);
  clip.frames = get_u32(p + 9);
  clip.joints = get_u32(p + 13);
  clip.fps = std::bit_cast<float>(get_u32(p + 17));

  const std::uint64_t count = std::uint64_t{clip.frames} * clip.joints * 3;
  const std::uint64_t expected = kHeaderBytes + count * 4 + 4;
  if (bytes.size() < expected)
    throw TruncationError(source + ": truncated, " + std::to_string(bytes.size()) + " of " +
                          std::to_string(expected) + " bytes");
  if (bytes.size() > expected)
    throw ClipFormatError(source + ": " + std::to_string(bytes.size() - expected) +
                          " trailing bytes");
  const std::uint8_t* payload = p + kHeaderBytes;
  const std::uint32_t stored = get_u32(payload + count * 4);
  const std::uint32_t actual = crc_of(payload, count * 4);
  if (stored != actual) {
    std::ostringstream msg;
    msg << source << ": checksum mismatch (stored " << std::hex << stored << ", computed "
        << actual << ")";
    throw ChecksumError(msg.str());
  }
  clip.values.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    clip.values[i] = std::bit_cast<float>(get_u32(payload + 4 * i));
  try {
    clip.validate();
  } catch (const std::invalid_argument& e) {
    throw ClipFormatError(source + ": " + e.what());
  }
  return clip;
}

void save_clip(const PoseClip& clip, const std::filesystem::path& path) {
  const auto bytes = encode_clip(clip);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

PoseClip load_clip(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  PoseClip clip = decode_clip(bytes, path.string());
  clip.id = path.stem().string();
  return clip;
}

std::uint32_t payload_checksum(const PoseClip& clip) {
  const auto payload = payload_bytes(clip);
  return crc_of(payload.data(), payload.size());
}

RootRelative normalize(const Tensor<double>& poses, std::size_t root) {
  if (poses.rank() != 3 || poses.extent(2) != 3 || root >= poses.extent(1))
    throw ShapeError("normalize expects (T, J, 3) with the root in range, got " +
                     ssrstf::to_string(poses.shape()));
  const std::size_t T = poses.extent(0), J = poses.extent(1);
  RootRelative out{poses, Tensor<double>({T, 3})};
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < 3; ++c) {
      const double r = poses[(t * J + root) * 3 + c];
      out.roots[t * 3 + c] = r;
      for (std::size_t j = 0; j < J; ++j) out.poses[(t * J + j) * 3 + c] -= r;
    }
  return out;
}

Tensor<double> denormalize(const Tensor<double>& relative, const Tensor<double>& roots,
                           std::size_t root) {
  if (relative.rank() != 3 || relative.extent(2) != 3 || root >= relative.extent(1))
    throw ShapeError("denormalize expects (T, J, 3), got " + ssrstf::to_string(relative.shape()));
  const std::size_t T = relative.extent(0), J = relative.extent(1);
  if (roots.shape() != Shape{T, 3})
    throw ShapeError("denormalize: roots " + ssrstf::to_string(roots.shape()) + " for poses " +
                     ssrstf::to_string(relative.shape()));
  Tensor<double> out = relative;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t c = 0; c < 3; ++c) out[(t * J + j) * 3 + c] += roots[t * 3 + c];
  return out;
}

PoseClip normalize(const PoseClip& clip, std::size_t root) {
  if (clip.kind != PoseKind::pose3d)
    throw std::invalid_argument("normalize needs a pose3d clip, '" + clip.id + "' is " +
                                to_string(clip.kind));
  return PoseClip::from_tensor(clip.id, clip.kind, normalize(clip.tensor(), root).poses, clip.fps);
}

double Sinusoid::at(double seconds) const {
  if (amplitude == 0.0) return 0.0;
  return amplitude * std::sin(2.0 * std::numbers::pi * frequency_hz * seconds + phase);
}

std::array<double, 2> project(const PinholeCamera& camera, double x, double y, double z) {
  const double u = camera.focal_px * x / z + camera.cx;
  const double v = camera.focal_px * y / z + camera.cy;
  return {(u - 0.5 * camera.width) / (0.5 * camera.width),
          (v - 0.5 * camera.height) / (0.5 * camera.height)};
}

SyntheticRigConfig SyntheticRigConfig::h36m() {
  SyntheticRigConfig r;
  // hip, r-hip, r-knee, r-foot, l-hip, l-knee, l-foot, spine, thorax, neck,
  // head, l-shoulder, l-elbow, l-wrist, r-shoulder, r-elbow, r-wrist
  r.parents = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};
  r.segment_mm = {0, 132, 442, 454, 132, 442, 454, 233, 257, 121, 115, 151, 278, 252, 151, 278, 252};
  const Vec up{0, 1, 0}, down{0, -1, 0}, left{1, 0, 0}, right{-1, 0, 0};
  r.direction = {up,   right, down, down, left, down, down, up, up,
                 up,   up,    left, down, down, right, down, down};
  r.angles.assign(17, {});
  auto swing = [&](std::size_t j, std::size_t axis, double amp, double hz, double phase) {
    r.angles[j][axis] = {amp, hz, phase};
  };
  const double pi = std::numbers::pi;
  swing(0, 1, 0.4, 0.15, 0.0);   // pelvis yaw
  swing(1, 0, 0.5, 1.0, 0.0);    // right hip flexion
  swing(2, 0, 0.6, 1.0, 0.5);    // right knee
  swing(4, 0, 0.5, 1.0, pi);     // left hip, opposite phase
  swing(5, 0, 0.6, 1.0, pi + 0.5);
  swing(7, 0, 0.15, 0.5, 0.0);   // spine lean
  swing(7, 2, 0.1, 0.7, 1.0);
  swing(9, 1, 0.3, 0.4, 0.0);    // neck turn
  swing(11, 0, 0.6, 1.0, 0.0);   // arms swing against the legs
  swing(11, 2, 0.3, 0.6, 0.2);
  swing(12, 0, 0.7, 1.0, 0.3);
  swing(14, 0, 0.6, 1.0, pi);
  swing(14, 2, 0.3, 0.6, 1.2);
  swing(15, 0, 0.7, 1.0, pi + 0.3);
  r.root_sway = {Sinusoid{250, 0.2, 0}, Sinusoid{30, 2.0, 0}, Sinusoid{300, 0.15, 1.0}};
  return r;
}

SyntheticRigConfig SyntheticRigConfig::truncated(std::size_t joints) const {
  if (joints < 2 || joints > this->joints())
    throw std::invalid_argument("joint count " + std::to_string(joints) + " outside [2, " +
                                std::to_string(this->joints()) + "]");
  SyntheticRigConfig r = *this;
  r.parents.resize(joints);
  r.segment_mm.resize(joints);
  r.direction.resize(joints);
  r.angles.resize(joints);
  return r;
}

std::vector<std::string> SyntheticRigConfig::problems() const {
  std::vector<std::string> out;
  const std::size_t J = parents.size();
  if (J < 2) out.push_back("rig needs at least two joints");
  if (segment_mm.size() != J) out.push_back("segment_mm has " + std::to_string(segment_mm.size()) + " entries for " + std::to_string(J) + " joints");
  if (direction.size() != J) out.push_back("direction has " + std::to_string(direction.size()) + " entries for " + std::to_string(J) + " joints");
  if (angles.size() != J) out.push_back("angles has " + std::to_string(angles.size()) + " entries for " + std::to_string(J) + " joints");
  if (J > 0 && parents[0] != -1) out.push_back("joint 0 must be the root (parent -1)");
  for (std::size_t j = 1; j < J; ++j)
    if (parents[j] < 0 || static_cast<std::size_t>(parents[j]) >= j)
      out.push_back("joint " + std::to_string(j) + " has parent " + std::to_string(parents[j]) +
                    "; parents must precede their children");
  for (std::size_t j = 1; j < std::min(J, segment_mm.size()); ++j)
    if (!(segment_mm[j] > 0)) out.push_back("segment " + std::to_string(j) + " must be positive");
  for (std::size_t j = 1; j < std::min(J, direction.size()); ++j) {
    const auto& d = direction[j];
    if (!(d[0] * d[0] + d[1] * d[1] + d[2] * d[2] > 0))
      out.push_back("direction " + std::to_string(j) + " is zero");
  }
  auto check = [&](const Sinusoid& s, const std::string& what) {
    if (!(s.frequency_hz >= 0) || !std::isfinite(s.amplitude) || !std::isfinite(s.phase))
      out.push_back(what + " needs finite values and a non-negative frequency");
  };
  for (std::size_t j = 0; j < angles.size(); ++j)
    for (std::size_t a = 0; a < 3; ++a)
      check(angles[j][a], "angle " + std::to_string(j) + "." + std::to_string(a));
  for (std::size_t a = 0; a < 3; ++a) check(root_sway[a], "root sway " + std::to_string(a));
  if (!(camera.focal_px > 0) || !(camera.width > 0) || !(camera.height > 0))
    out.push_back("camera needs positive focal length and image size");
  if (!(camera.subject_distance_mm > 0)) out.push_back("subject distance must be positive");
  if (!(confidence_noise >= 0)) out.push_back("confidence_noise must be non-negative");
  if (!(keypoint_noise >= 0)) out.push_back("keypoint_noise must be non-negative");
  if (!(fps > 0)) out.push_back("fps must be positive");
  if (styles < 1) out.push_back("styles must be at least 1");
  return out;
}

void SyntheticRigConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid rig:";
  for (const auto& s : p) msg += "\n  " + s;
  throw std::invalid_argument(msg);
}

std::vector<ClipPair> generate_synthetic(const SyntheticRigConfig& rig, std::size_t clips,
                                         std::size_t frames) {
  rig.validate();
  if (frames < 1) throw std::invalid_argument("generate_synthetic needs at least one frame");
  const std::size_t J = rig.joints();
  Rng rng(rig.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  std::vector<Vec> offsets(J);
  for (std::size_t j = 1; j < J; ++j) {
    const auto& d = rig.direction[j];
    const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    for (int c = 0; c < 3; ++c) offsets[j][c] = d[c] / n * rig.segment_mm[j];
  }

  std::vector<ClipPair> out;
  out.reserve(clips);
  for (std::size_t n = 0; n < clips; ++n) {
    const std::size_t style = n % rig.styles;
    const double speed = 1.0 + 0.5 * static_cast<double>(style);
    // per-clip variation: amplitude scale, extra phase, viewing yaw
    auto angles = rig.angles;
    for (auto& joint : angles)
      for (auto& s : joint) {
        s.amplitude *= 0.6 + 0.8 * unit(rng);
        s.phase += two_pi * unit(rng);
        s.frequency_hz *= speed;
      }
    auto sway = rig.root_sway;
    for (auto& s : sway) s.phase += two_pi * unit(rng);
    const Mat yaw = rotation(0, two_pi * unit(rng), 0);

    ClipPair pair;
    pair.id = "clip_" + std::to_string(n);
    pair.action = "style_" + std::to_string(style);
    Tensor<double> pose3d({frames, J, 3});
    Tensor<double> pose2d({frames, J, 3});
    std::vector<Mat> global(J);
    std::vector<Vec> pos(J);
    for (std::size_t t = 0; t < frames; ++t) {
      const double sec = static_cast<double>(t) / rig.fps;
      for (std::size_t j = 0; j < J; ++j) {
        const Mat local = rotation(angles[j][0].at(sec), angles[j][1].at(sec), angles[j][2].at(sec));
        if (j == 0) {
          global[0] = mul(yaw, local);
          pos[0] = {sway[0].at(sec), sway[1].at(sec), sway[2].at(sec)};
        } else {
          const auto p = static_cast<std::size_t>(rig.parents[j]);
          global[j] = mul(global[p], local);
          const Vec o = mul(global[j], offsets[j]);
          for (int c = 0; c < 3; ++c) pos[j][c] = pos[p][c] + o[c];
        }
      }
      for (std::size_t j = 0; j < J; ++j) {
        // world is y-up; camera is y-down looking along +z
        const float x = static_cast<float>(pos[j][0]);
        const float y = static_cast<float>(-pos[j][1]);
        const float z = static_cast<float>(pos[j][2] + rig.camera.subject_distance_mm);
        const std::size_t i = (t * J + j) * 3;
        pose3d[i] = x;
        pose3d[i + 1] = y;
        pose3d[i + 2] = z;
        auto uv = project(rig.camera, x, y, z);
        if (rig.keypoint_noise > 0)
          for (auto& c : uv) c = std::clamp(c + rig.keypoint_noise * gauss(rng), -1.0, 1.0);
        double conf = 1.0;
        if (rig.confidence_noise > 0)
          conf = std::clamp(1.0 - std::abs(rig.confidence_noise * gauss(rng)), 0.0, 1.0);
        pose2d[i] = static_cast<float>(uv[0]);
        pose2d[i + 1] = static_cast<float>(uv[1]);
        pose2d[i + 2] = static_cast<float>(conf);
      }
    }
    pair.input = PoseClip::from_tensor(pair.id, PoseKind::pose2d, pose2d, rig.fps);
    pair.target = PoseClip::from_tensor(pair.id, PoseKind::pose3d, pose3d, rig.fps);
    out.push_back(std::move(pair));
  }
  return out;
}

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + text + "' (expected train or test)");
}

namespace {

json file_json(const ClipFile& f) {
  return json{{"path", f.path}, {"kind", to_string(f.kind)}, {"crc32", f.crc32}};
}

ClipFile file_from(const json& j) {
  return {j.at("path").get<std::string>(), parse_pose_kind(j.at("kind").get<std::string>()),
          j.at("crc32").get<std::uint32_t>()};
}

}  // namespace

std::string DatasetManifest::to_json() const {
  json clips = json::array();
  for (const auto& e : entries)
    clips.push_back({{"id", e.id},
                     {"action", e.action},
                     {"split", to_string(e.split)},
                     {"input", file_json(e.input)},
                     {"target", file_json(e.target)}});
  return json{{"version", 1}, {"clips", clips}}.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text, std::filesystem::path root) {
  DatasetManifest m;
  m.root = std::move(root);
  try {
    const json j = json::parse(text);
    if (j.at("version").get<int>() != 1)
      throw std::invalid_argument("unsupported manifest version " + j.at("version").dump());
    for (const auto& c : j.at("clips")) {
      ManifestEntry e;
      e.id = c.at("id").get<std::string>();
      e.action = c.value("action", std::string("unlabeled"));
      e.split = parse_split(c.at("split").get<std::string>());
      e.input = file_from(c.at("input"));
      e.target = file_from(c.at("target"));
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed manifest: ") + e.what());
  }
  std::set<std::string> ids, paths;
  for (const auto& e : m.entries) {
    if (!ids.insert(e.id).second)
      throw std::invalid_argument("manifest lists clip '" + e.id + "' more than once");
    for (const auto* f : {&e.input, &e.target})
      if (!paths.insert(f->path).second)
        throw std::invalid_argument("manifest references " + f->path + " more than once");
    if (e.input.kind != PoseKind::pose2d || e.target.kind != PoseKind::pose3d)
      throw std::invalid_argument("clip '" + e.id + "' needs a pose2d input and a pose3d target");
  }
  return m;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  DatasetManifest m = from_json(ss.str(), path.parent_path());
  for (const auto& e : m.entries)
    for (const auto* file : {&e.input, &e.target}) {
      const auto full = m.root / file->path;
      if (!std::filesystem::exists(full))
        throw std::runtime_error("manifest references missing file " + full.string());
      const PoseClip clip = load_clip(full);
      if (clip.kind != file->kind)
        throw std::runtime_error(full.string() + " holds " + to_string(clip.kind) +
                                 ", manifest says " + to_string(file->kind));
      if (payload_checksum(clip) != file->crc32)
        throw ChecksumError(full.string() + ": checksum differs from the manifest");
    }
  return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << to_json();
}

DatasetManifest write_dataset(const std::filesystem::path& dir, const std::vector<ClipPair>& pairs,
                              std::size_t test_clips) {
  if (test_clips > pairs.size())
    throw std::invalid_argument("test split of " + std::to_string(test_clips) + " from " +
                                std::to_string(pairs.size()) + " clips");
  std::filesystem::create_directories(dir);
  DatasetManifest m;
  m.root = dir;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    ManifestEntry e;
    e.id = p.id;
    e.action = p.action;
    e.split = i + test_clips >= pairs.size() ? Split::test : Split::train;
    e.input = {p.id + ".2d.pseq", PoseKind::pose2d, payload_checksum(p.input)};
    e.target = {p.id + ".3d.pseq", PoseKind::pose3d, payload_checksum(p.target)};
    save_clip(p.input, dir / e.input.path);
    save_clip(p.target, dir / e.target.path);
    m.entries.push_back(std::move(e));
  }
  m.save(dir / "manifest.json");
  return m;
}

std::vector<ClipPair> load_split(const DatasetManifest& manifest, Split split) {
  std::vector<ClipPair> out;
  for (const auto& e : manifest.entries) {
    if (e.split != split) continue;
    ClipPair p;
    p.id = e.id;
    p.action = e.action;
    p.input = load_clip(manifest.root / e.input.path);
    p.target = load_clip(manifest.root / e.target.path);
    p.input.id = p.target.id = e.id;
    if (p.input.frames != p.target.frames || p.input.joints != p.target.joints)
      throw std::runtime_error("clip '" + e.id + "': input and target extents differ");
    out.push_back(std::move(p));
  }
  if (out.empty()) throw std::invalid_argument("split '" + to_string(split) + "' is empty");
  return out;
}

std::vector<WindowRef> clip_windows(const std::vector<ClipPair>& clips, std::size_t window) {
  if (window < 1) throw std::invalid_argument("window length must be positive");
  std::vector<WindowRef> out;
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const std::size_t L = clips[c].input.frames;
    for (std::size_t s = 0; s < L; s += window) out.push_back({c, s, std::min(window, L - s)});
  }
  return out;
}

Batch make_batch(const std::vector<ClipPair>& clips, const std::vector<WindowRef>& windows,
                 std::size_t window) {
  if (windows.empty()) throw std::invalid_argument("make_batch needs at least one window");
  const std::size_t J = clips.at(windows[0].clip).input.joints;
  const std::size_t B = windows.size();
  Batch b;
  b.x2d = Tensor<float>({B, window, J, 3});
  b.gt3d = Tensor<float>({B, window, J, 3});
  b.mask.assign(B * window, 0.0f);
  b.windows = windows;
  for (std::size_t i = 0; i < B; ++i) {
    const WindowRef& w = windows[i];
    const ClipPair& p = clips.at(w.clip);
    if (p.input.joints != J)
      throw std::invalid_argument("clips in one batch must share the joint count");
    b.actions.push_back(p.action);
    for (std::size_t t = 0; t < window; ++t) {
      const std::size_t src = w.start + std::min(t, w.valid - 1);
      if (t < w.valid) b.mask[i * window + t] = 1.0f;
      float* x = b.x2d.ptr() + ((i * window + t) * J) * 3;
      float* g = b.gt3d.ptr() + ((i * window + t) * J) * 3;
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t c = 0; c < 3; ++c) {
          x[j * 3 + c] = p.input.at(src, j, c);
          // root-relative; the root is joint 0
          g[j * 3 + c] = static_cast<float>(static_cast<double>(p.target.at(src, j, c)) -
                                            p.target.at(src, 0, c));
        }
    }
  }
  return b;
}

BatchIterator::BatchIterator(const std::vector<ClipPair>& clips, std::size_t batch_size,
                             std::size_t window, std::optional<std::uint64_t> shuffle_seed)
    : clips_(&clips), batch_size_(batch_size), window_(window), seed_(shuffle_seed) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (clips.empty()) throw std::invalid_argument("batch iterator over an empty split");
  windows_ = clip_windows(clips, window);
  start_epoch(0);
}

void BatchIterator::start_epoch(std::size_t epoch) {
  order_ = windows_;
  if (seed_) {
    std::seed_seq seq{static_cast<std::uint32_t>(*seed_), static_cast<std::uint32_t>(*seed_ >> 32),
                      static_cast<std::uint32_t>(epoch)};
    Rng rng(seq);
    // explicit Fisher-Yates so the order does not depend on the library's shuffle
    for (std::size_t i = order_.size(); i > 1; --i) {
      const std::size_t k = static_cast<std::size_t>(rng() % i);
      std::swap(order_[i - 1], order_[k]);
    }
  }
  cursor_ = 0;
}

void BatchIterator::skip(std::size_t batches) {
  cursor_ = std::min(order_.size(), cursor_ + batches * batch_size_);
}

bool BatchIterator::next(Batch& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  std::vector<WindowRef> w(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                           order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  out = make_batch(*clips_, w, window_);
  return true;
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (windows_.size() + batch_size_ - 1) / batch_size_;
}

}  // namespace ssrstf::data
