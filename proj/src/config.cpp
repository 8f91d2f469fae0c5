#include "dtvnet/config.hpp"

#include <cstdio>
#include <fstream>

#include "dtvnet/errors.hpp"

namespace dtvnet {
using nlohmann::json;

void to_json(json& j, const HW& v) { j = json::array({v.height, v.width}); }
void from_json(const json& j, HW& v) {
  if (!j.is_array() || j.size() != 2) throw FormatError("expected [height, width]");
  v.height = j.at(0).get<int64_t>();
  v.width = j.at(1).get<int64_t>();
}

void to_json(json& j, const OFEConfig& v) {
  j = {{"base_channels", v.base_channels}, {"num_blocks", v.num_blocks}};
}
void from_json(const json& j, OFEConfig& v) {
  v.base_channels = j.at("base_channels").get<int64_t>();
  v.num_blocks = j.at("num_blocks").get<int64_t>();
}

void to_json(json& j, const DVGConfig& v) {
  j = {{"n_adain_layers", v.n_adain_layers}, {"base_channels", v.base_channels}};
}
void from_json(const json& j, DVGConfig& v) {
  v.n_adain_layers = j.at("n_adain_layers").get<int64_t>();
  v.base_channels = j.at("base_channels").get<int64_t>();
}

void to_json(json& j, const CriticConfig& v) {
  j = {{"num_blocks", v.num_blocks}, {"base_channels", v.base_channels}, {"gp_lambda", v.gp_lambda}};
}
void from_json(const json& j, CriticConfig& v) {
  v.num_blocks = j.at("num_blocks").get<int64_t>();
  v.base_channels = j.at("base_channels").get<int64_t>();
  v.gp_lambda = j.at("gp_lambda").get<double>();
}

void to_json(json& j, const ModelConfig& v) {
  j = {{"t_frames", v.t_frames}, {"image_hw", v.image_hw}, {"ofe", v.ofe}, {"dvg", v.dvg}, {"critic", v.critic}};
}
void from_json(const json& j, ModelConfig& v) {
  v.t_frames = j.at("t_frames").get<int64_t>();
  v.image_hw = j.at("image_hw").get<HW>();
  v.ofe = j.at("ofe").get<OFEConfig>();
  v.dvg = j.at("dvg").get<DVGConfig>();
  v.critic = j.at("critic").get<CriticConfig>();
  v = v.resolved();
}

void to_json(json& j, const LossWeights& v) { j = json::array({v.content, v.motion, v.adversarial}); }
void from_json(const json& j, LossWeights& v) {
  if (!j.is_array() || j.size() != 3) throw FormatError("weights: expected [content, motion, adversarial]");
  v = {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

void to_json(json& j, const TrainConfig& v) {
  j = {{"epochs", v.epochs},
       {"batch_size", v.batch_size},
       {"lr0", v.lr0},
       {"lr_decay_every", v.lr_decay_every},
       {"lr_decay_factor", v.lr_decay_factor},
       {"betas", v.betas},
       {"adam_eps", v.adam_eps},
       {"weights", v.weights},
       {"critic_steps", v.critic_steps},
       {"max_steps", v.max_steps},
       {"checkpoint_every", v.checkpoint_every},
       {"seed", v.seed}};
}
void from_json(const json& j, TrainConfig& v) {
  v.epochs = j.at("epochs").get<int64_t>();
  v.batch_size = j.at("batch_size").get<int64_t>();
  v.lr0 = j.at("lr0").get<double>();
  v.lr_decay_every = j.at("lr_decay_every").get<int64_t>();
  v.lr_decay_factor = j.at("lr_decay_factor").get<double>();
  v.betas = j.at("betas").get<std::array<double, 2>>();
  v.adam_eps = j.at("adam_eps").get<double>();
  v.weights = j.at("weights").get<LossWeights>();
  v.critic_steps = j.at("critic_steps").get<int64_t>();
  v.max_steps = j.at("max_steps").get<int64_t>();
  v.checkpoint_every = j.at("checkpoint_every").get<int64_t>();
  v.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(json& j, const RunConfig& v) {
  j = {{"profile", v.profile}, {"seed", v.seed}, {"model", v.model}, {"train", v.train}};
}
void from_json(const json& j, RunConfig& v) {
  v.profile = j.at("profile").get<std::string>();
  v.seed = j.at("seed").get<std::uint64_t>();
  v.model = j.at("model").get<ModelConfig>();
  v.train = j.at("train").get<TrainConfig>();
}

RunConfig profile_defaults(const std::string& profile) {
  RunConfig cfg;
  cfg.profile = profile;
  if (profile == "paper") {
    cfg.model.t_frames = 32;
    cfg.model.image_hw = {128, 128};
    cfg.model.ofe.base_channels = 32;
    cfg.model.dvg.base_channels = 64;
    cfg.model.critic.base_channels = 64;
    cfg.train.epochs = 200;
    cfg.train.batch_size = 12;
    cfg.train.lr_decay_every = 150;
    cfg.train.max_steps = 0;
  } else if (profile == "desk") {
    cfg.model.t_frames = 8;
    cfg.model.image_hw = {32, 32};
    cfg.model.ofe.base_channels = 8;
    cfg.model.dvg.base_channels = 16;
    cfg.model.critic.base_channels = 8;
    cfg.train.epochs = 2000;
    cfg.train.batch_size = 4;
    cfg.train.lr_decay_every = 1500;
    cfg.train.max_steps = 2000;
    cfg.train.checkpoint_every = 100;
  } else {
    throw InvalidArgument("unknown profile \"" + profile + "\" (expected desk or paper)");
  }
  cfg.model = cfg.model.resolved();
  return cfg;
}

RunConfig resolve_run_config(const std::string& profile, const std::optional<std::filesystem::path>& config_file,
                             const json& overrides) {
  json doc = profile_defaults(profile);
  if (config_file) {
    std::ifstream in(*config_file);
    if (!in) throw LoadError("cannot open config file " + config_file->string());
    json file_doc;
    try {
      file_doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
      throw FormatError("config file " + config_file->string() + ": " + e.what());
    }
    // A file may pin its own profile; its defaults then form the base.
    if (file_doc.contains("profile") && file_doc["profile"].get<std::string>() != profile) {
      doc = profile_defaults(file_doc["profile"].get<std::string>());
    }
    doc.merge_patch(file_doc);
  }
  doc.merge_patch(overrides);
  RunConfig cfg;
  try {
    cfg = doc.get<RunConfig>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

void write_run_record(const std::filesystem::path& dir, const RunConfig& cfg, const std::string& command) {
  std::filesystem::create_directories(dir);
  json rec = {{"tool_version", kToolVersion}, {"command", command}, {"config", cfg}};
  std::ofstream out(dir / "run_config.json");
  if (!out) throw Error("cannot write " + (dir / "run_config.json").string());
  out << rec.dump(2) << '\n';
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dtvnet
