#include "ssrstf/trainer.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <map>
#include <sstream>

#include "ssrstf/metrics.hpp"

namespace ssrstf {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'S', 'S', 'R', 'W'};

std::uint32_t update_crc(std::uint32_t crc, const std::uint8_t* p, std::size_t n) {
  uLong c = crc;
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

json progress_json(const TrainProgress& p) {
  return {{"epoch", p.epoch},
          {"batch", p.batch},
          {"global_step", p.global_step},
          {"sum_position", p.sum_position},
          {"sum_velocity", p.sum_velocity},
          {"sum_total", p.sum_total}};
}

TrainProgress progress_from(const json& j) {
  TrainProgress p;
  p.epoch = j.at("epoch").get<std::size_t>();
  p.batch = j.at("batch").get<std::size_t>();
  p.global_step = j.at("global_step").get<std::uint64_t>();
  p.sum_position = j.at("sum_position").get<double>();
  p.sum_velocity = j.at("sum_velocity").get<double>();
  p.sum_total = j.at("sum_total").get<double>();
  return p;
}

std::string moment_name(const char* which, const std::string& param) {
  return std::string("adam.") + which + "/" + param;
}

// Writes to a sibling temporary and renames, so a crash never leaves a half
// written checkpoint in place of the previous one.
void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ofstream&)>& body) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    body(f);
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

template <typename T>
AdamWState<T> AdamWState<T>::zeros_like(const ParamSet<T>& params) {
  AdamWState<T> s;
  for (const auto& p : params) {
    s.m.push_back(Tensor<T>::zeros(p.value.shape()));
    s.v.push_back(Tensor<T>::zeros(p.value.shape()));
  }
  return s;
}

template <typename T>
void adamw_step(ParamSet<T>& params, const std::vector<Tensor<T>>& grads, AdamWState<T>& state,
                double lr, const AdamWHyper& h) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw std::invalid_argument("adamw_step: " + std::to_string(grads.size()) + " gradients and " +
                                std::to_string(state.m.size()) + " moments for " +
                                std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (grads[i].shape() != p.value.shape() || state.m[i].shape() != p.value.shape() ||
        state.v[i].shape() != p.value.shape())
      throw ShapeError("adamw_step: parameter '" + p.name + "' has shape " +
                       to_string(p.value.shape()) + ", gradient " + to_string(grads[i].shape()));
    for (T g : grads[i].data())
      if (!std::isfinite(static_cast<double>(g)))
        throw NumericError("non-finite gradient for parameter '" + p.name + "'");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const double shrink = p.decay ? 1.0 - lr * h.weight_decay : 1.0;
    T* w = p.value.ptr();
    T* m = state.m[i].ptr();
    T* v = state.v[i].ptr();
    const T* g = grads[i].ptr();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double gk = g[k];
      const double mk = h.beta1 * m[k] + (1.0 - h.beta1) * gk;
      const double vk = h.beta2 * v[k] + (1.0 - h.beta2) * gk * gk;
      double wk = static_cast<double>(w[k]) * shrink;
      wk -= lr * (mk / bc1) / (std::sqrt(vk / bc2) + h.eps);
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      w[k] = static_cast<T>(wk);
    }
  }
}

template <typename T>
double global_norm(const std::vector<Tensor<T>>& grads) {
  double sq = 0;
  for (const auto& g : grads)
    for (T x : g.data()) sq += static_cast<double>(x) * x;
  return std::sqrt(sq);
}

template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm) {
  if (!(max_norm > 0)) throw std::invalid_argument("clip norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (auto& x : g.data()) x = static_cast<T>(x * s);
  }
  return norm;
}

double lr_at(std::size_t epoch, double lr0, double decay) {
  return lr0 * std::pow(decay, static_cast<double>(epoch));
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  check_weights(ckpt.params, ckpt.config.model);
  struct Entry {
    std::string name;
    std::string role;
    const Tensor<float>* tensor;
    bool decay;
  };
  std::vector<Entry> entries;
  for (const auto& p : ckpt.params) entries.push_back({p.name, "weight", &p.value, p.decay});
  if (ckpt.optimizer) {
    const auto& o = *ckpt.optimizer;
    if (o.m.size() != ckpt.params.size() || o.v.size() != ckpt.params.size())
      throw std::invalid_argument("optimizer state does not match the parameter set");
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
      entries.push_back({moment_name("m", ckpt.params[i].name), "adam_m", &o.m[i], false});
      entries.push_back({moment_name("v", ckpt.params[i].name), "adam_v", &o.v[i], false});
    }
  }

  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    tensors.push_back({{"name", e.name},
                       {"role", e.role},
                       {"shape", e.tensor->shape()},
                       {"decay", e.decay},
                       {"offset", offset}});
    offset += e.tensor->size() * 4;
  }
  json header;
  header["config"] = json::parse(ckpt.config.to_json());
  header["progress"] = progress_json(ckpt.progress);
  if (ckpt.optimizer) header["optimizer"] = {{"step", ckpt.optimizer->step}};
  header["tensors"] = tensors;
  header["payload_bytes"] = offset;
  const std::string text = header.dump();

  write_atomically(path, [&](std::ofstream& f) {
    std::vector<std::uint8_t> head(std::begin(kMagic), std::end(kMagic));
    put_le(head, kCheckpointVersion, 4);
    put_le(head, text.size(), 8);
    f.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::uint32_t crc = update_crc(0, nullptr, 0);
    std::vector<std::uint8_t> buf;
    for (const auto& e : entries) {
      buf.clear();
      buf.reserve(e.tensor->size() * 4);
      for (float v : e.tensor->data()) put_le(buf, std::bit_cast<std::uint32_t>(v), 4);
      crc = update_crc(crc, buf.data(), buf.size());
      f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    buf.clear();
    put_le(buf, crc, 4);
    f.write(reinterpret_cast<const char*>(buf.data()), 4);
  });
}

namespace {

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                        std::istreambuf_iterator<char>());
  const std::string src = path.string();
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw CheckpointError(src + ": bad magic, expected \"SSRW\"");
  if (bytes.size() < 16) throw CheckpointError(src + ": truncated header");
  const auto version = static_cast<std::uint32_t>(get_le(bytes.data() + 4, 4));
  if (version != kCheckpointVersion)
    throw CheckpointError(src + ": unsupported checkpoint version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  const std::uint64_t header_len = get_le(bytes.data() + 8, 8);
  if (header_len > bytes.size() - 16) throw CheckpointError(src + ": truncated header");
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(header_len));
  } catch (const json::exception& e) {
    throw CheckpointError(src + ": malformed header: " + e.what());
  }

  Checkpoint ck;
  try {
    ck.config = RunConfig::from_json(header.at("config").dump());
    ck.progress = progress_from(header.at("progress"));
  } catch (const std::exception& e) {
    throw CheckpointError(src + ": " + e.what());
  }
  const std::uint64_t payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
  const std::size_t start = 16 + header_len;
  if (bytes.size() < start + payload_bytes + 4)
    throw CheckpointError(src + ": truncated, " + std::to_string(bytes.size()) + " of " +
                          std::to_string(start + payload_bytes + 4) + " bytes");
  if (bytes.size() > start + payload_bytes + 4)
    throw CheckpointError(src + ": trailing bytes after the payload");
  const std::uint8_t* payload = bytes.data() + start;
  const auto stored = static_cast<std::uint32_t>(get_le(payload + payload_bytes, 4));
  if (update_crc(update_crc(0, nullptr, 0), payload, payload_bytes) != stored)
    throw CheckpointError(src + ": payload checksum mismatch");

  std::map<std::string, Tensor<float>> moments;
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const std::string role = t.at("role").get<std::string>();
    const Shape shape = t.at("shape").get<Shape>();
    const std::uint64_t offset = t.at("offset").get<std::uint64_t>();
    const std::size_t n = numel(shape);
    if (offset + n * 4 > payload_bytes)
      throw CheckpointError(src + ": tensor '" + name + "' lies outside the payload");
    Tensor<float> value(shape);
    for (std::size_t i = 0; i < n; ++i)
      value[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(payload + offset + 4 * i, 4)));
    if (role == "weight")
      ck.params.add(name, std::move(value), t.at("decay").get<bool>());
    else if (role == "adam_m" || role == "adam_v")
      moments.emplace(name, std::move(value));
    else
      throw CheckpointError(src + ": tensor '" + name + "' has unknown role '" + role + "'");
  }
  try {
    check_weights(ck.params, ck.config.model);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(src + ": " + e.what());
  }
  if (header.contains("optimizer")) {
    AdamWState<float> o;
    o.step = header["optimizer"].at("step").get<std::uint64_t>();
    for (const auto& p : ck.params)
      for (const char* which : {"m", "v"}) {
        const std::string name = moment_name(which, p.name);
        auto it = moments.find(name);
        if (it == moments.end())
          throw CheckpointError(src + ": missing tensor '" + name + "'");
        if (it->second.shape() != p.value.shape())
          throw CheckpointError(src + ": tensor '" + name + "' has shape " +
                                to_string(it->second.shape()) + ", expected " +
                                to_string(p.value.shape()));
        (which[0] == 'm' ? o.m : o.v).push_back(std::move(it->second));
      }
    ck.optimizer = std::move(o);
  }
  return ck;
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return read_checkpoint(path);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": malformed header: " + e.what());
  }
}

Tensor<double> predict_clip(const ParamSet<float>& params, const ModelConfig& config,
                            const data::PoseClip& input) {
  if (input.kind != data::PoseKind::pose2d)
    throw std::invalid_argument("prediction needs a pose2d clip, '" + input.id + "' is " +
                                data::to_string(input.kind));
  input.validate();
  if (input.joints != config.joints)
    throw ShapeError("clip '" + input.id + "' has " + std::to_string(input.joints) +
                     " joints, model expects " + std::to_string(config.joints));
  const std::size_t T = input.frames, J = input.joints, W = config.frames;
  const std::size_t windows = (T + W - 1) / W;
  constexpr std::size_t kChunk = 16;  // windows per forward pass
  Tensor<double> out({T, J, 3});
  for (std::size_t w0 = 0; w0 < windows; w0 += kChunk) {
    const std::size_t nw = std::min(kChunk, windows - w0);
    Tensor<float> x({nw, W, J, 3});
    for (std::size_t b = 0; b < nw; ++b)
      for (std::size_t t = 0; t < W; ++t) {
        const std::size_t src = std::min(T - 1, (w0 + b) * W + t);
        std::copy(input.values.begin() + static_cast<long>(src * J * 3),
                  input.values.begin() + static_cast<long>((src + 1) * J * 3),
                  x.ptr() + (b * W + t) * J * 3);
      }
    Tape<float> tape(false);
    ParamBinding<float> binding(tape, params);
    const auto pose = forward(tape.constant(std::move(x)), binding, config).pose.value();
    for (std::size_t b = 0; b < nw; ++b)
      for (std::size_t t = 0; t < W; ++t) {
        const std::size_t dst = (w0 + b) * W + t;
        if (dst >= T) break;
        const float* p = pose.ptr() + (b * W + t) * J * 3;
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t c = 0; c < 3; ++c)
            out[(dst * J + j) * 3 + c] = static_cast<double>(p[j * 3 + c]) - p[c];
      }
  }
  return out;
}

double dataset_mpjpe(const ParamSet<float>& params, const ModelConfig& config,
                     const std::vector<data::ClipPair>& clips) {
  if (clips.empty()) throw std::invalid_argument("dataset_mpjpe over no clips");
  double sum = 0;
  std::size_t poses = 0;
  for (const auto& c : clips) {
    const auto pred = predict_clip(params, config, c.input);
    const auto gt = c.target.tensor();
    sum += metrics::mpjpe(pred, gt) * static_cast<double>(c.input.frames);
    poses += c.input.frames;
  }
  return sum / static_cast<double>(poses);
}

std::string EpochRecord::to_json_line() const {
  json j{{"epoch", epoch}, {"lr", lr},       {"l_p", l_p},
         {"l_delta", l_delta}, {"total", total}};
  j["eval_mpjpe_mm"] = eval_mpjpe_mm ? json(*eval_mpjpe_mm) : json(nullptr);
  j["steps"] = steps;
  return j.dump();
}

Trainer::Trainer(RunConfig config, std::vector<data::ClipPair> train,
                 std::vector<data::ClipPair> eval)
    : config_(std::move(config)), train_(std::move(train)), eval_(std::move(eval)) {
  config_.validate();
  if (train_.empty()) throw std::invalid_argument("training split is empty");
  params_ = init_weights<float>(config_.model, config_.trainer.init_seed);
  opt_ = AdamWState<float>::zeros_like(params_);
}

Trainer::Trainer(const Checkpoint& ckpt, std::vector<data::ClipPair> train,
                 std::vector<data::ClipPair> eval)
    : config_(ckpt.config), train_(std::move(train)), eval_(std::move(eval)),
      params_(ckpt.params), progress_(ckpt.progress) {
  config_.validate();
  if (train_.empty()) throw std::invalid_argument("training split is empty");
  if (!ckpt.optimizer) throw CheckpointError("checkpoint has no optimizer state to resume from");
  opt_ = *ckpt.optimizer;
}

Checkpoint Trainer::checkpoint() const { return {config_, params_, opt_, progress_}; }

bool Trainer::step_limit_reached() const {
  return config_.trainer.max_steps != 0 && progress_.global_step >= config_.trainer.max_steps;
}

bool Trainer::finished() const {
  return progress_.epoch >= config_.trainer.epochs || step_limit_reached();
}

StepStats Trainer::step(const data::Batch& batch) {
  const ModelConfig& m = config_.model;
  const TrainerSettings& s = config_.trainer;
  const std::string at = " at step " + std::to_string(progress_.global_step);
  try {
    Tape<float> tape;
    ParamBinding<float> binding(tape, params_);
    auto out = forward(tape.constant(batch.x2d), binding, m);
    auto terms = loss_total(out.pose, tape.constant(batch.gt3d), m.lambda_velocity, m.reduction);
    StepStats stats;
    stats.loss = values_of(terms);
    if (!std::isfinite(stats.loss.total)) throw DivergenceError("non-finite loss" + at);
    tape.backward(terms.total);
    std::vector<Tensor<float>> grads;
    grads.reserve(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) grads.push_back(tape.grad(binding.at(i)));
    stats.grad_norm = global_norm(grads);
    if (!std::isfinite(stats.grad_norm)) throw DivergenceError("non-finite gradient norm" + at);
    if (s.clip_norm > 0) clip_global_norm(grads, s.clip_norm);
    adamw_step(params_, grads, opt_, lr_at(progress_.epoch, s.lr, s.lr_decay),
               AdamWHyper::from(s));
    return stats;
  } catch (const NumericError& e) {
    // raised before any parameter is touched
    throw DivergenceError(std::string(e.what()) + at);
  }
}

std::vector<EpochRecord> Trainer::run(const Options& options) {
  const TrainerSettings& s = config_.trainer;
  std::optional<TrainProgress> saved;
  auto save = [&] {
    if (options.checkpoint.empty() || saved == progress_) return;
    save_checkpoint(checkpoint(), options.checkpoint);
    saved = progress_;
  };
  std::ofstream log;
  if (!options.log.empty()) {
    log.open(options.log, std::ios::app);
    if (!log) throw std::runtime_error("cannot open log " + options.log.string());
  }
  const std::uint64_t start_step = progress_.global_step;
  auto stop_requested = [&] {
    return step_limit_reached() ||
           (options.stop_after && progress_.global_step - start_step >= *options.stop_after);
  };

  data::BatchIterator it(train_, s.batch_size, config_.model.frames,
                         s.shuffle ? std::optional<std::uint64_t>(s.seed) : std::nullopt);
  std::vector<EpochRecord> records;
  while (!finished() && !stop_requested()) {
    it.start_epoch(progress_.epoch);
    it.skip(progress_.batch);
    data::Batch batch;
    while (!stop_requested() && it.next(batch)) {
      const StepStats st = step(batch);
      progress_.batch += 1;
      progress_.global_step += 1;
      progress_.sum_position += st.loss.position;
      progress_.sum_velocity += st.loss.velocity;
      progress_.sum_total += st.loss.total;
    }
    if (progress_.batch < it.batches_per_epoch()) break;  // stopped mid-epoch

    EpochRecord r;
    r.epoch = progress_.epoch;
    r.lr = lr_at(progress_.epoch, s.lr, s.lr_decay);
    r.steps = progress_.batch;
    const double n = static_cast<double>(progress_.batch);
    r.l_p = progress_.sum_position / n;
    r.l_delta = progress_.sum_velocity / n;
    r.total = progress_.sum_total / n;
    if (s.eval_every != 0 && (progress_.epoch + 1) % s.eval_every == 0)
      r.eval_mpjpe_mm = dataset_mpjpe(params_, config_.model, eval_.empty() ? train_ : eval_);
    progress_ = TrainProgress{progress_.epoch + 1, 0, progress_.global_step, 0, 0, 0};
    if (log) log << r.to_json_line() << "\n" << std::flush;
    if (options.on_epoch) options.on_epoch(r);
    records.push_back(r);
    save();
  }
  save();
  return records;
}

template struct AdamWState<float>;
template struct AdamWState<double>;
template void adamw_step<float>(ParamSet<float>&, const std::vector<Tensor<float>>&,
                                AdamWState<float>&, double, const AdamWHyper&);
template void adamw_step<double>(ParamSet<double>&, const std::vector<Tensor<double>>&,
                                 AdamWState<double>&, double, const AdamWHyper&);
template double global_norm<float>(const std::vector<Tensor<float>>&);
template double global_norm<double>(const std::vector<Tensor<double>>&);
template double clip_global_norm<float>(std::vector<Tensor<float>>&, double);
template double clip_global_norm<double>(std::vector<Tensor<double>>&, double);

}  // namespace ssrstf
