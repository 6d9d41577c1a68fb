#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "ssrstf/data.hpp"
#include "ssrstf/model.hpp"

using namespace ssrstf;
using namespace ssrstf::data;

namespace {

PoseClip random_clip(PoseKind kind, std::uint32_t T, std::uint32_t J, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-2000.0f, 2000.0f);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  PoseClip c;
  c.id = "c";
  c.kind = kind;
  c.frames = T;
  c.joints = J;
  c.fps = 50.0f;
  c.values.resize(std::size_t{T} * J * 3);
  for (std::size_t i = 0; i < c.values.size(); ++i)
    c.values[i] = (kind == PoseKind::pose2d && i % 3 == 2) ? u(rng) : d(rng);
  return c;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

// Bitwise CRC-32 (reflected polynomial 0xEDB88320), independent of zlib.
std::uint32_t slow_crc32(const std::vector<std::uint8_t>& bytes) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::uint8_t b : bytes) {
    crc ^= b;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("ssrstf_data_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

SyntheticRigConfig quiet_rig() {
  auto rig = SyntheticRigConfig::h36m();
  rig.keypoint_noise = 0;
  rig.confidence_noise = 0;
  return rig;
}

ClipPair pair_of_length(std::size_t frames, const std::string& id) {
  auto rig = SyntheticRigConfig::h36m();
  rig.seed = frames;
  auto p = generate_synthetic(rig, 1, frames).at(0);
  p.id = id;
  return p;
}

}  // namespace

TEST(ClipFormat, RoundTripIsBitIdentical) {
  for (auto kind : {PoseKind::pose2d, PoseKind::pose3d}) {
    auto c = random_clip(kind, 13, 17, 3);
    if (kind == PoseKind::pose3d) {
      c.values[0] = -0.0f;
      c.values[1] = std::numeric_limits<float>::denorm_min();
      c.values[3] = std::numeric_limits<float>::max();
    }
    const PoseClip back = decode_clip(encode_clip(c));
    EXPECT_EQ(back.kind, kind);
    EXPECT_EQ(back.frames, 13u);
    EXPECT_EQ(back.joints, 17u);
    EXPECT_EQ(back.fps, 50.0f);
    EXPECT_TRUE(same_bits(back.values, c.values));
  }
}

TEST(ClipFormat, FileRoundTripTakesIdFromStem) {
  TempDir dir;
  const auto c = random_clip(PoseKind::pose3d, 5, 4, 9);
  save_clip(c, dir.path / "walk_01.pseq");
  const PoseClip back = load_clip(dir.path / "walk_01.pseq");
  EXPECT_EQ(back.id, "walk_01");
  EXPECT_TRUE(same_bits(back.values, c.values));
}

TEST(ClipFormat, ByteLayout) {
  PoseClip c;
  c.kind = PoseKind::pose2d;
  c.frames = 1;
  c.joints = 2;
  c.fps = 25.0f;
  c.values = {1.0f, -1.0f, 0.5f, 0.0f, 0.25f, 1.0f};
  const auto bytes = encode_clip(c);
  ASSERT_EQ(bytes.size(), 21u + 6 * 4 + 4);
  const std::vector<std::uint8_t> header = {'P', 'S', 'E', 'Q', 1, 0, 0, 0, 0,
                                            1,   0,   0,   0,   2, 0, 0, 0,
                                            0x00, 0x00, 0xC8, 0x41};  // 25.0f
  EXPECT_TRUE(std::equal(header.begin(), header.end(), bytes.begin()));
  // 1.0f little-endian
  EXPECT_EQ(bytes[21], 0x00);
  EXPECT_EQ(bytes[24], 0x3F);
  EXPECT_EQ(bytes[23], 0x80);
  const std::vector<std::uint8_t> payload(bytes.begin() + 21, bytes.end() - 4);
  const std::uint32_t crc = slow_crc32(payload);
  const std::uint32_t stored = bytes[45] | bytes[46] << 8 | bytes[47] << 16 |
                               static_cast<std::uint32_t>(bytes[48]) << 24;
  EXPECT_EQ(stored, crc);
  EXPECT_EQ(payload_checksum(c), crc);
}

TEST(ClipFormat, ChecksumMatchesReferenceCrc) {
  const std::vector<std::uint8_t> check = {'1', '2', '3', '4', '5', '6', '7', '8', '9'};
  ASSERT_EQ(slow_crc32(check), 0xCBF43926u);
  const auto c = random_clip(PoseKind::pose3d, 31, 17, 5);
  const auto bytes = encode_clip(c);
  EXPECT_EQ(payload_checksum(c),
            slow_crc32(std::vector<std::uint8_t>(bytes.begin() + 21, bytes.end() - 4)));
}

TEST(ClipFormat, TruncationIsReportedAtEveryCut) {
  const auto bytes = encode_clip(random_clip(PoseKind::pose3d, 3, 5, 1));
  for (std::size_t cut : {std::size_t{0}, std::size_t{2}, std::size_t{4}, std::size_t{10},
                          std::size_t{20}, std::size_t{21}, std::size_t{40}, bytes.size() - 1}) {
    std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    EXPECT_THROW(decode_clip(part), TruncationError) << "cut at " << cut;
  }
}

TEST(ClipFormat, WrongMagicNamesExpected) {
  auto bytes = encode_clip(random_clip(PoseKind::pose3d, 2, 3, 1));
  bytes[0] = 'X';
  try {
    decode_clip(bytes, "f.pseq");
    FAIL() << "no error";
  } catch (const BadMagicError& e) {
    EXPECT_NE(std::string(e.what()).find("\"PSEQ\""), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("f.pseq"), std::string::npos);
  }
}

TEST(ClipFormat, VersionChecksumAndTrailingErrorsAreDistinct) {
  const auto good = encode_clip(random_clip(PoseKind::pose3d, 2, 3, 1));
  auto v = good;
  v[4] = 2;
  EXPECT_THROW(decode_clip(v), VersionError);
  auto corrupt = good;
  corrupt[30] ^= 0x01;
  EXPECT_THROW(decode_clip(corrupt), ChecksumError);
  auto crc = good;
  crc.back() ^= 0x80;
  EXPECT_THROW(decode_clip(crc), ChecksumError);
  auto longer = good;
  longer.push_back(0);
  try {
    decode_clip(longer);
    FAIL() << "no error";
  } catch (const TruncationError&) {
    FAIL() << "trailing bytes reported as truncation";
  } catch (const ChecksumError&) {
    FAIL() << "trailing bytes reported as checksum failure";
  } catch (const ClipFormatError&) {
  }
  auto kind = good;
  kind[8] = 7;
  EXPECT_THROW(decode_clip(kind), ClipFormatError);
}

TEST(ClipFormat, RejectsInvalidClips) {
  auto c = random_clip(PoseKind::pose2d, 2, 3, 1);
  c.values[2] = 1.5f;
  EXPECT_THROW(encode_clip(c), std::invalid_argument);
  auto one_joint = random_clip(PoseKind::pose3d, 2, 1, 1);
  EXPECT_THROW(encode_clip(one_joint), std::invalid_argument);
  auto short_values = random_clip(PoseKind::pose3d, 2, 3, 1);
  short_values.values.pop_back();
  EXPECT_THROW(encode_clip(short_values), std::invalid_argument);
}

TEST(Normalize, RootIsExactlyZeroAndInverseRestores) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-5000, 5000);
  Tensor<double> poses({20, 17, 3});
  for (auto& v : poses.data()) v = d(rng);
  const auto rel = normalize(poses);
  for (std::size_t t = 0; t < 20; ++t)
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(rel.poses.at({t, 0, c}), 0.0);
      EXPECT_EQ(rel.roots.at({t, c}), poses.at({t, 0, c}));
    }
  EXPECT_LE(max_abs_diff(denormalize(rel.poses, rel.roots), poses), 1e-6);
}

TEST(Normalize, AlreadyRelativeIsUnchanged) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-900, 900);
  Tensor<double> poses({6, 5, 3});
  for (auto& v : poses.data()) v = d(rng);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t c = 0; c < 3; ++c) poses.at({t, 0, c}) = 0.0;
  const auto rel = normalize(poses);
  EXPECT_EQ(rel.poses.vec(), poses.vec());
  for (double r : rel.roots.vec()) EXPECT_EQ(r, 0.0);
}

TEST(Normalize, ClipOverloadNeedsPose3d) {
  const auto c2 = random_clip(PoseKind::pose2d, 2, 3, 1);
  EXPECT_THROW(normalize(c2), std::invalid_argument);
  const auto c3 = normalize(random_clip(PoseKind::pose3d, 2, 3, 1));
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(c3.at(t, 0, c), 0.0f);
  EXPECT_THROW(normalize(Tensor<double>({2, 3, 2})), ShapeError);
  EXPECT_THROW(denormalize(Tensor<double>({2, 3, 3}), Tensor<double>({3, 3})), ShapeError);
}

TEST(Synthetic, ShapesRangesAndLabels) {
  auto rig = SyntheticRigConfig::h36m();
  rig.seed = 11;
  const auto pairs = generate_synthetic(rig, 4, 60);
  ASSERT_EQ(pairs.size(), 4u);
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const auto& p = pairs[n];
    EXPECT_EQ(p.input.kind, PoseKind::pose2d);
    EXPECT_EQ(p.target.kind, PoseKind::pose3d);
    EXPECT_EQ(p.input.frames, 60u);
    EXPECT_EQ(p.input.joints, 17u);
    EXPECT_EQ(p.action, "style_" + std::to_string(n % 3));
    for (std::size_t t = 0; t < 60; ++t)
      for (std::size_t j = 0; j < 17; ++j) {
        EXPECT_GE(p.input.at(t, j, 0), -1.0f);
        EXPECT_LE(p.input.at(t, j, 0), 1.0f);
        EXPECT_GE(p.input.at(t, j, 1), -1.0f);
        EXPECT_LE(p.input.at(t, j, 1), 1.0f);
        EXPECT_GE(p.input.at(t, j, 2), 0.0f);
        EXPECT_LE(p.input.at(t, j, 2), 1.0f);
        EXPECT_GT(p.target.at(t, j, 2), 0.0f);  // in front of the camera
      }
  }
}

TEST(Synthetic, BoneLengthsArePreserved) {
  auto rig = SyntheticRigConfig::h36m();
  rig.seed = 2;
  const auto pairs = generate_synthetic(rig, 2, 40);
  for (const auto& p : pairs)
    for (std::size_t t = 0; t < 40; ++t)
      for (std::size_t j = 1; j < 17; ++j) {
        const auto q = static_cast<std::size_t>(rig.parents[j]);
        double sq = 0;
        for (std::size_t c = 0; c < 3; ++c) {
          const double d = p.target.at(t, j, c) - p.target.at(t, q, c);
          sq += d * d;
        }
        EXPECT_NEAR(std::sqrt(sq), rig.segment_mm[j], 2e-3) << "joint " << j << " frame " << t;
      }
}

TEST(Synthetic, ZeroNoiseReprojectsExactly) {
  auto rig = quiet_rig();
  rig.seed = 8;
  const auto pairs = generate_synthetic(rig, 3, 30);
  for (const auto& p : pairs)
    for (std::size_t t = 0; t < 30; ++t)
      for (std::size_t j = 0; j < 17; ++j) {
        const auto uv = project(rig.camera, p.target.at(t, j, 0), p.target.at(t, j, 1),
                                p.target.at(t, j, 2));
        EXPECT_EQ(static_cast<float>(uv[0]), p.input.at(t, j, 0));
        EXPECT_EQ(static_cast<float>(uv[1]), p.input.at(t, j, 1));
        EXPECT_EQ(p.input.at(t, j, 2), 1.0f);
      }
}

TEST(Synthetic, ProjectionMatchesPinholeFormula) {
  PinholeCamera cam;
  // on the optical axis -> image centre
  auto uv = project(cam, 0, 0, 4500);
  EXPECT_EQ(uv[0], 0.0);
  EXPECT_EQ(uv[1], 0.0);
  // x = 500 mm at 4500 mm: u = 1145 * 500 / 4500 + 500 px
  uv = project(cam, 500, -250, 4500);
  EXPECT_NEAR(uv[0], (1145.0 * 500 / 4500) / 500.0, 1e-15);
  EXPECT_NEAR(uv[1], (1145.0 * -250 / 4500) / 500.0, 1e-15);
}

TEST(Synthetic, ZeroAmplitudesGiveStaticPose) {
  auto rig = SyntheticRigConfig::h36m();
  for (auto& joint : rig.angles)
    for (auto& s : joint) s.amplitude = 0;
  for (auto& s : rig.root_sway) s.amplitude = 0;
  rig.keypoint_noise = 0;
  const auto p = generate_synthetic(rig, 1, 12).at(0);
  for (std::size_t t = 1; t < 12; ++t)
    for (std::size_t j = 0; j < 17; ++j)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(p.target.at(t, j, c), p.target.at(0, j, c));
  Tape<double> tape(false);
  auto gt = tape.constant(p.target.tensor().reshaped({1, 12, 17, 3}));
  auto zero = tape.constant(Tensor<double>({1, 12, 17, 3}));
  // a static target has no velocity, so a zero-velocity prediction has no velocity loss
  EXPECT_EQ(loss_velocity(zero, gt, LossReduction::mean).value()[0], 0.0);
  EXPECT_EQ(loss_velocity(gt, gt, LossReduction::mean).value()[0], 0.0);
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  auto rig = SyntheticRigConfig::h36m();
  rig.seed = 99;
  const auto a = generate_synthetic(rig, 3, 25);
  const auto b = generate_synthetic(rig, 3, 25);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(same_bits(a[i].input.values, b[i].input.values));
    EXPECT_TRUE(same_bits(a[i].target.values, b[i].target.values));
  }
  rig.seed = 100;
  const auto c = generate_synthetic(rig, 1, 25);
  EXPECT_FALSE(same_bits(a[0].target.values, c[0].target.values));
}

TEST(Synthetic, TruncatedRigKeepsLeadingJoints) {
  auto rig = SyntheticRigConfig::h36m();
  rig.seed = 5;
  const auto small = rig.truncated(7);
  EXPECT_EQ(small.joints(), 7u);
  const auto a = generate_synthetic(small, 2, 10);
  EXPECT_EQ(a[0].target.joints, 7u);
  EXPECT_EQ(a[0].input.joints, 7u);
  EXPECT_THROW(rig.truncated(1), std::invalid_argument);
  EXPECT_THROW(rig.truncated(18), std::invalid_argument);
  EXPECT_EQ(rig.truncated(17).parents, rig.parents);
}

TEST(Synthetic, InvalidRigsAreRejected) {
  auto rig = SyntheticRigConfig::h36m();
  rig.parents[5] = 9;  // parent after child
  EXPECT_THROW(generate_synthetic(rig, 1, 5), std::invalid_argument);
  rig = SyntheticRigConfig::h36m();
  rig.parents[0] = 3;
  EXPECT_THROW(generate_synthetic(rig, 1, 5), std::invalid_argument);
  rig = SyntheticRigConfig::h36m();
  rig.segment_mm[4] = 0;
  EXPECT_THROW(generate_synthetic(rig, 1, 5), std::invalid_argument);
  rig = SyntheticRigConfig::h36m();
  rig.angles[2][0].frequency_hz = -1;
  EXPECT_THROW(generate_synthetic(rig, 1, 5), std::invalid_argument);
  rig = SyntheticRigConfig::h36m();
  rig.segment_mm.pop_back();
  rig.parents[3] = 3;
  try {
    rig.validate();
    FAIL() << "no error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("segment_mm"), std::string::npos);
    EXPECT_NE(msg.find("joint 3"), std::string::npos);
  }
}

TEST(Manifest, WriteLoadRoundTrip) {
  TempDir dir;
  auto rig = SyntheticRigConfig::h36m();
  const auto pairs = generate_synthetic(rig, 5, 20);
  write_dataset(dir.path, pairs, 2);
  const auto m = DatasetManifest::load(dir.path / "manifest.json");
  ASSERT_EQ(m.entries.size(), 5u);
  EXPECT_EQ(m.entries[2].split, Split::train);
  EXPECT_EQ(m.entries[3].split, Split::test);
  const auto train = load_split(m, Split::train);
  const auto test = load_split(m, Split::test);
  ASSERT_EQ(train.size(), 3u);
  ASSERT_EQ(test.size(), 2u);
  EXPECT_EQ(test[1].id, pairs[4].id);
  EXPECT_EQ(test[1].action, pairs[4].action);
  EXPECT_TRUE(same_bits(test[1].target.values, pairs[4].target.values));
  EXPECT_TRUE(same_bits(train[0].input.values, pairs[0].input.values));
}

TEST(Manifest, DetectsMissingAndAlteredFiles) {
  TempDir dir;
  const auto pairs = generate_synthetic(SyntheticRigConfig::h36m(), 2, 10);
  const auto m = write_dataset(dir.path, pairs, 1);
  // a different but well-formed clip under the same name
  auto other = pairs[0].target;
  other.values[0] += 1.0f;
  save_clip(other, dir.path / m.entries[0].target.path);
  EXPECT_THROW(DatasetManifest::load(dir.path / "manifest.json"), ChecksumError);
  std::filesystem::remove(dir.path / m.entries[0].target.path);
  try {
    DatasetManifest::load(dir.path / "manifest.json");
    FAIL() << "no error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(m.entries[0].target.path), std::string::npos);
  }
}

TEST(Manifest, RejectsDuplicatesAndEmptySplits) {
  TempDir dir;
  const auto pairs = generate_synthetic(SyntheticRigConfig::h36m(), 2, 10);
  auto m = write_dataset(dir.path, pairs, 0);
  EXPECT_THROW(load_split(m, Split::test), std::invalid_argument);
  auto dup = m;
  dup.entries[1].id = dup.entries[0].id;
  dup.entries[1].split = Split::test;
  EXPECT_THROW(DatasetManifest::from_json(dup.to_json(), dir.path), std::invalid_argument);
  EXPECT_THROW(DatasetManifest::from_json("{\"clips\": 3}", dir.path), std::invalid_argument);
  auto swapped = m;
  std::swap(swapped.entries[0].input.kind, swapped.entries[0].target.kind);
  EXPECT_THROW(DatasetManifest::from_json(swapped.to_json(), dir.path), std::invalid_argument);
}

TEST(Batching, OneClipOneWindowGivesOneBatch) {
  std::vector<ClipPair> clips = {pair_of_length(9, "a")};
  BatchIterator it(clips, 1, 9, 42);
  Batch b;
  std::size_t n = 0;
  while (it.next(b)) ++n;
  EXPECT_EQ(n, 1u);
  EXPECT_EQ(it.batches_per_epoch(), 1u);
  EXPECT_EQ(b.x2d.shape(), (Shape{1, 9, 17, 3}));
  for (float m : b.mask) EXPECT_EQ(m, 1.0f);
}

TEST(Batching, WindowCountMatchesDirectCount) {
  std::vector<ClipPair> clips;
  const std::vector<std::size_t> lengths = {5, 27, 28, 54, 100, 1};
  for (std::size_t i = 0; i < lengths.size(); ++i)
    clips.push_back(pair_of_length(lengths[i], "c" + std::to_string(i)));
  const std::size_t window = 27;
  std::size_t expected = 0;
  for (std::size_t L : lengths) {
    std::size_t k = 0;
    for (std::size_t s = 0; s < L; s += window) ++k;
    expected += k;
  }
  BatchIterator it(clips, 4, window, 7);
  EXPECT_EQ(it.windows_per_epoch(), expected);
  Batch b;
  std::size_t windows = 0, real_frames = 0;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  while (it.next(b)) {
    windows += b.windows.size();
    for (const auto& w : b.windows) EXPECT_TRUE(seen.insert({w.clip, w.start}).second);
    for (float m : b.mask) real_frames += m == 1.0f;
  }
  EXPECT_EQ(windows, expected);
  std::size_t total = 0;
  for (std::size_t L : lengths) total += L;
  EXPECT_EQ(real_frames, total);
}

TEST(Batching, SeededOrderIsReproducible) {
  std::vector<ClipPair> clips;
  for (std::size_t i = 0; i < 6; ++i) clips.push_back(pair_of_length(40 + i, "c" + std::to_string(i)));
  auto starts = [](const BatchIterator& it) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& w : it.order()) out.push_back({w.clip, w.start});
    return out;
  };
  BatchIterator a(clips, 3, 10, 5), b(clips, 3, 10, 5), c(clips, 3, 10, 6);
  EXPECT_EQ(starts(a), starts(b));
  EXPECT_NE(starts(a), starts(c));
  const auto first = starts(a);
  a.start_epoch(1);
  EXPECT_NE(starts(a), first);
  b.start_epoch(1);
  EXPECT_EQ(starts(a), starts(b));
  BatchIterator plain(clips, 3, 10, std::nullopt);
  EXPECT_EQ(plain.order().front().clip, 0u);
  EXPECT_EQ(plain.order().back().clip, 5u);
}

TEST(Batching, SkipResumesMidEpoch) {
  std::vector<ClipPair> clips = {pair_of_length(50, "a"), pair_of_length(33, "b")};
  BatchIterator full(clips, 2, 8, 3), resumed(clips, 2, 8, 3);
  Batch b;
  full.next(b);
  full.next(b);
  full.next(b);
  resumed.skip(2);
  Batch r;
  ASSERT_TRUE(resumed.next(r));
  EXPECT_EQ(r.x2d.vec(), b.x2d.vec());
  EXPECT_EQ(r.gt3d.vec(), b.gt3d.vec());
}

TEST(Batching, ShortClipIsEdgePaddedAndMasked) {
  std::vector<ClipPair> clips = {pair_of_length(4, "short")};
  const auto& clip = clips[0];
  const Batch b = make_batch(clips, clip_windows(clips, 7), 7);
  ASSERT_EQ(b.x2d.shape(), (Shape{1, 7, 17, 3}));
  for (std::size_t t = 0; t < 7; ++t) {
    EXPECT_EQ(b.mask[t], t < 4 ? 1.0f : 0.0f);
    const std::size_t src = std::min<std::size_t>(t, 3);
    for (std::size_t j = 0; j < 17; ++j)
      for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_EQ(b.x2d.at({0, t, j, c}), clip.input.at(src, j, c));
        const float rel = static_cast<float>(static_cast<double>(clip.target.at(src, j, c)) -
                                             clip.target.at(src, 0, c));
        EXPECT_EQ(b.gt3d.at({0, t, j, c}), rel);
      }
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(b.gt3d.at({0, t, 0, c}), 0.0f);
  }
}

TEST(Batching, EmptySplitIsAnError) {
  std::vector<ClipPair> none;
  EXPECT_THROW(BatchIterator(none, 2, 8, 1), std::invalid_argument);
  std::vector<ClipPair> clips = {pair_of_length(5, "a")};
  EXPECT_THROW(BatchIterator(clips, 0, 8, 1), std::invalid_argument);
}
