#include "ssrstf/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

namespace ssrstf {

namespace {

using json = nlohmann::ordered_json;

std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid run config:";
  for (const auto& p : problems) msg += "\n  - " + p;
  return msg;
}

// Reads the fields of one JSON object, noting type errors and leftover keys.
class Fields {
 public:
  Fields(const json& obj, std::string path, std::vector<std::string>& problems)
      : obj_(obj), path_(std::move(path)), problems_(problems) {}

  ~Fields() {
    for (const auto& [key, value] : obj_.items())
      if (!seen_.count(key)) problems_.push_back("unknown key " + path_ + key);
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void size(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (v->is_number_unsigned())
        out = v->get<std::size_t>();
      else
        bad(key, "a non-negative integer", *v);
    }
  }

  void u64(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (v->is_number_unsigned())
        out = v->get<std::uint64_t>();
      else
        bad(key, "a non-negative integer", *v);
    }
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (v->is_number())
        out = v->get<double>();
      else
        bad(key, "a number", *v);
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (v->is_boolean())
        out = v->get<bool>();
      else
        bad(key, "true or false", *v);
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (v->is_string())
        out = v->get<std::string>();
      else
        bad(key, "a string", *v);
    }
  }

  void bad(const std::string& key, const std::string& expected, const json& got) {
    problems_.push_back(path_ + key + " must be " + expected + ", got " + got.dump());
  }

 private:
  const json& obj_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

void read_model(const json& obj, ModelConfig& m, std::vector<std::string>& problems) {
  Fields f(obj, "model.", problems);
  f.size("depth", m.depth);
  f.size("channels", m.channels);
  f.size("hidden", m.hidden);
  f.size("frames", m.frames);
  f.size("joints", m.joints);
  f.size("heads", m.heads);
  f.size("mlp_ratio", m.mlp_ratio);
  f.number("lambda_velocity", m.lambda_velocity);
  f.boolean("literal_sigma", m.literal_sigma);
  f.number("output_scale_mm", m.output_scale_mm);
  std::string kernel;
  f.string("kernel", kernel);
  if (!kernel.empty()) {
    try {
      m.kernel = SSRAKernelSpec::parse(kernel);
    } catch (const std::invalid_argument& e) {
      problems.push_back(std::string("model.kernel: ") + e.what());
    }
  }
  std::string reduction;
  f.string("reduction", reduction);
  if (reduction == "mean")
    m.reduction = LossReduction::mean;
  else if (reduction == "sum")
    m.reduction = LossReduction::sum;
  else if (!reduction.empty())
    problems.push_back("model.reduction must be \"mean\" or \"sum\", got \"" + reduction + "\"");
}

void read_trainer(const json& obj, TrainerSettings& t, std::vector<std::string>& problems) {
  Fields f(obj, "trainer.", problems);
  f.size("epochs", t.epochs);
  f.size("batch_size", t.batch_size);
  f.number("lr", t.lr);
  f.number("lr_decay", t.lr_decay);
  f.number("beta1", t.beta1);
  f.number("beta2", t.beta2);
  f.number("eps", t.eps);
  f.number("weight_decay", t.weight_decay);
  f.number("clip_norm", t.clip_norm);
  f.u64("seed", t.seed);
  f.u64("init_seed", t.init_seed);
  f.boolean("shuffle", t.shuffle);
  f.size("max_steps", t.max_steps);
  f.size("eval_every", t.eval_every);
}

}  // namespace

ConfigError::ConfigError(const std::vector<std::string>& problems)
    : std::invalid_argument(join_problems(problems)), problems_(problems) {}

std::vector<std::string> TrainerSettings::problems() const {
  std::vector<std::string> out;
  if (batch_size < 1) out.push_back("trainer.batch_size must be >= 1");
  if (!(lr > 0)) out.push_back("trainer.lr must be positive");
  if (!(lr_decay > 0 && lr_decay <= 1)) out.push_back("trainer.lr_decay must be in (0, 1]");
  if (!(beta1 >= 0 && beta1 < 1)) out.push_back("trainer.beta1 must be in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) out.push_back("trainer.beta2 must be in [0, 1)");
  if (!(eps > 0)) out.push_back("trainer.eps must be positive");
  if (!(weight_decay >= 0)) out.push_back("trainer.weight_decay must be non-negative");
  if (!(clip_norm >= 0)) out.push_back("trainer.clip_norm must be non-negative");
  return out;
}

RunConfig RunConfig::from_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "base")
    c.model = ModelConfig::base();
  else if (name == "small")
    c.model = ModelConfig::small();
  else
    throw ConfigError({"unknown preset \"" + name + "\" (expected base or small)"});
  return c;
}

RunConfig RunConfig::from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("not valid JSON: ") + e.what()});
  }
  if (!root.is_object()) throw ConfigError({"top level must be a JSON object"});

  std::vector<std::string> problems;
  RunConfig c;
  {
    Fields f(root, "", problems);
    f.string("preset", c.preset);
    if (c.preset == "base")
      c.model = ModelConfig::base();
    else if (c.preset == "small")
      c.model = ModelConfig::small();
    else if (c.preset != "custom")
      problems.push_back("preset must be \"base\", \"small\" or \"custom\", got \"" + c.preset +
                         "\"");
    if (const json* m = f.find("model")) {
      if (m->is_object())
        read_model(*m, c.model, problems);
      else
        f.bad("model", "an object", *m);
    }
    if (const json* t = f.find("trainer")) {
      if (t->is_object())
        read_trainer(*t, c.trainer, problems);
      else
        f.bad("trainer", "an object", *t);
    }
    if (const json* d = f.find("data")) {
      if (d->is_object()) {
        Fields df(*d, "data.", problems);
        df.string("dir", c.data_dir);
      } else {
        f.bad("data", "an object", *d);
      }
    }
  }
  for (const auto& p : c.model.problems()) problems.push_back("model: " + p);
  for (const auto& p : c.trainer.problems()) problems.push_back(p);
  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

std::string RunConfig::to_json() const {
  const ModelConfig& m = model;
  const TrainerSettings& t = trainer;
  json j;
  j["preset"] = preset;
  j["model"] = {{"depth", m.depth},
                {"channels", m.channels},
                {"hidden", m.hidden},
                {"frames", m.frames},
                {"joints", m.joints},
                {"kernel", m.kernel.to_string()},
                {"heads", m.heads},
                {"mlp_ratio", m.mlp_ratio},
                {"lambda_velocity", m.lambda_velocity},
                {"literal_sigma", m.literal_sigma},
                {"reduction", m.reduction == LossReduction::mean ? "mean" : "sum"},
                {"output_scale_mm", m.output_scale_mm}};
  j["trainer"] = {{"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"lr", t.lr},
                  {"lr_decay", t.lr_decay},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"eps", t.eps},
                  {"weight_decay", t.weight_decay},
                  {"clip_norm", t.clip_norm},
                  {"seed", t.seed},
                  {"init_seed", t.init_seed},
                  {"shuffle", t.shuffle},
                  {"max_steps", t.max_steps},
                  {"eval_every", t.eval_every}};
  j["data"] = {{"dir", data_dir}};
  return j.dump(2) + "\n";
}

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> out;
  for (const auto& p : model.problems()) out.push_back("model: " + p);
  for (const auto& p : trainer.problems()) out.push_back(p);
  return out;
}

void RunConfig::validate() const {
  const auto p = problems();
  if (!p.empty()) throw ConfigError(p);
}

}  // namespace ssrstf
