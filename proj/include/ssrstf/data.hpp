#pragma once

// Pose clips, the PSEQ clip file format, a synthetic motion generator with
// pinhole projection, dataset manifests and windowed batching.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssrstf/tensor.hpp"

namespace ssrstf::data {

enum class PoseKind : std::uint8_t { pose2d = 0, pose3d = 1 };

std::string to_string(PoseKind kind);
PoseKind parse_pose_kind(const std::string& text);

/// T x J x 3 float values. pose2d holds (u, v, confidence) with u, v in
/// [-1, 1]; pose3d holds millimetres.
struct PoseClip {
  std::string id;
  PoseKind kind = PoseKind::pose3d;
  std::uint32_t frames = 0;
  std::uint32_t joints = 0;
  float fps = 50.0f;
  std::vector<float> values;

  float& at(std::size_t t, std::size_t j, std::size_t c) { return values[(t * joints + j) * 3 + c]; }
  float at(std::size_t t, std::size_t j, std::size_t c) const {
    return values[(t * joints + j) * 3 + c];
  }

  /// Throws std::invalid_argument on size mismatch, T < 1, J < 2, or a 2D
  /// confidence outside [0, 1].
  void validate() const;

  Tensor<double> tensor() const;  // (T, J, 3)
  static PoseClip from_tensor(std::string id, PoseKind kind, const Tensor<double>& t, float fps);
};

// Clip file errors. Each failure mode has its own type.
class ClipFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadMagicError : public ClipFormatError {
 public:
  using ClipFormatError::ClipFormatError;
};
class VersionError : public ClipFormatError {
 public:
  using ClipFormatError::ClipFormatError;
};
class TruncationError : public ClipFormatError {
 public:
  using ClipFormatError::ClipFormatError;
};
class ChecksumError : public ClipFormatError {
 public:
  using ClipFormatError::ClipFormatError;
};

inline constexpr std::uint32_t kClipVersion = 1;

/// "PSEQ", u32 version, u8 kind, u32 T, u32 J, f32 fps, T*J*3 f32, u32 CRC32
/// of the value payload. All little-endian.
std::vector<std::uint8_t> encode_clip(const PoseClip& clip);
/// `source` names the origin in error messages. The clip id is left empty.
PoseClip decode_clip(const std::vector<std::uint8_t>& bytes, const std::string& source = "clip");

void save_clip(const PoseClip& clip, const std::filesystem::path& path);
/// The id is taken from the file stem.
PoseClip load_clip(const std::filesystem::path& path);
/// CRC32 of the value payload as it is stored in the file.
std::uint32_t payload_checksum(const PoseClip& clip);

// Root-relative normalization, done in double so denormalize is an exact inverse
// up to double rounding.
struct RootRelative {
  Tensor<double> poses;  // (T, J, 3), root joint at the origin
  Tensor<double> roots;  // (T, 3)
};
RootRelative normalize(const Tensor<double>& poses, std::size_t root = 0);
Tensor<double> denormalize(const Tensor<double>& relative, const Tensor<double>& roots,
                           std::size_t root = 0);
/// Root-relative clip; throws std::invalid_argument unless the kind is pose3d.
PoseClip normalize(const PoseClip& clip, std::size_t root = 0);

// Synthetic data.
struct Sinusoid {
  double amplitude = 0;     // radians for joint angles, millimetres for root sway
  double frequency_hz = 0;  // >= 0
  double phase = 0;         // radians

  double at(double seconds) const;
};

struct PinholeCamera {
  double focal_px = 1145.0;
  double cx = 500.0;
  double cy = 500.0;
  double width = 1000.0;
  double height = 1000.0;
  double subject_distance_mm = 4500.0;
};

/// (u, v) in [-1, 1] image-normalized coordinates of a camera-frame point (mm).
std::array<double, 2> project(const PinholeCamera& camera, double x, double y, double z);

struct SyntheticRigConfig {
  std::vector<int> parents;                      // -1 for the root, which is joint 0
  std::vector<double> segment_mm;                // length to the parent, 0 for the root
  std::vector<std::array<double, 3>> direction;  // rest-pose bone direction
  /// Per joint, rotations about x, y, z of that joint (radians).
  std::vector<std::array<Sinusoid, 3>> angles;
  std::array<Sinusoid, 3> root_sway;  // root translation, mm
  PinholeCamera camera;
  double confidence_noise = 0.05;
  double keypoint_noise = 0.005;  // sigma in normalized units
  float fps = 50.0f;
  std::uint64_t seed = 0;
  /// Clips cycle through this many motion styles with scaled frequencies.
  std::size_t styles = 3;

  /// 17-joint Human3.6M topology with walking-like default motion.
  static SyntheticRigConfig h36m();
  /// The first `joints` joints of this rig (parents precede children, so any
  /// prefix is a valid tree). Throws std::invalid_argument outside [2, joints()].
  SyntheticRigConfig truncated(std::size_t joints) const;

  std::size_t joints() const { return parents.size(); }
  std::vector<std::string> problems() const;
  void validate() const;
};

struct ClipPair {
  std::string id;
  std::string action;
  PoseClip input;   // pose2d
  PoseClip target;  // pose3d, camera frame, absolute
};

/// Deterministic in rig.seed. Throws std::invalid_argument for an invalid rig.
std::vector<ClipPair> generate_synthetic(const SyntheticRigConfig& rig, std::size_t clips,
                                         std::size_t frames);

// Manifest.
enum class Split { train, test };
std::string to_string(Split split);
Split parse_split(const std::string& text);

struct ClipFile {
  std::string path;  // relative to the manifest directory
  PoseKind kind = PoseKind::pose2d;
  std::uint32_t crc32 = 0;
};

struct ManifestEntry {
  std::string id;
  std::string action;
  Split split = Split::train;
  ClipFile input;
  ClipFile target;
};

struct DatasetManifest {
  std::filesystem::path root;  // directory holding the manifest
  std::vector<ManifestEntry> entries;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text, std::filesystem::path root);
  /// Parses the file and checks that every referenced clip exists, parses, has
  /// the declared kind and checksum, and that ids are unique across splits.
  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Writes every pair as two clip files plus manifest.json into `dir`. The last
/// `test_clips` pairs form the test split.
DatasetManifest write_dataset(const std::filesystem::path& dir, const std::vector<ClipPair>& pairs,
                              std::size_t test_clips);

/// Loads the clips of one split. Throws std::invalid_argument if it is empty.
std::vector<ClipPair> load_split(const DatasetManifest& manifest, Split split);

// Batching.
struct WindowRef {
  std::size_t clip = 0;   // index into the clip list
  std::size_t start = 0;  // first frame
  std::size_t valid = 0;  // real frames; the rest are edge copies
};

/// Non-overlapping windows starting at 0, T, 2T, ...; the last one of each
/// clip is completed by repeating the final frame.
std::vector<WindowRef> clip_windows(const std::vector<ClipPair>& clips, std::size_t window);

struct Batch {
  Tensor<float> x2d;          // (B, T, J, 3)
  Tensor<float> gt3d;         // (B, T, J, 3), root-relative mm
  std::vector<float> mask;    // B*T, 1 for real frames
  std::vector<WindowRef> windows;
  std::vector<std::string> actions;
};

Batch make_batch(const std::vector<ClipPair>& clips, const std::vector<WindowRef>& windows,
                 std::size_t window);

/// Walks every window once per epoch. With a seed the order is a permutation
/// drawn from (seed, epoch); without one it is the natural order. The final
/// batch of an epoch may be smaller.
class BatchIterator {
 public:
  BatchIterator(const std::vector<ClipPair>& clips, std::size_t batch_size, std::size_t window,
                std::optional<std::uint64_t> shuffle_seed);

  void start_epoch(std::size_t epoch);
  /// Skips the first `batches` batches of the current epoch (for resuming).
  void skip(std::size_t batches);
  bool next(Batch& out);

  std::size_t windows_per_epoch() const { return windows_.size(); }
  std::size_t batches_per_epoch() const;
  const std::vector<WindowRef>& order() const { return order_; }

 private:
  const std::vector<ClipPair>* clips_;
  std::size_t batch_size_;
  std::size_t window_;
  std::optional<std::uint64_t> seed_;
  std::vector<WindowRef> windows_;
  std::vector<WindowRef> order_;
  std::size_t cursor_ = 0;
};

}  // namespace ssrstf::data
