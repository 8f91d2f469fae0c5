#include "dtvnet/training.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dtvnet/config.hpp"
#include "dtvnet/errors.hpp"

namespace dtvnet {
namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("train.epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("train.batch_size must be >= 1");
  if (!(lr0 > 0.0)) throw InvalidArgument("train.lr0 must be > 0");
  if (lr_decay_every < 1) throw InvalidArgument("train.lr_decay_every must be >= 1");
  if (!(lr_decay_factor > 1.0)) throw InvalidArgument("train.lr_decay_factor must be > 1");
  for (double b : betas) {
    if (!(b >= 0.0 && b < 1.0)) throw InvalidArgument("train.betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw InvalidArgument("train.adam_eps must be > 0");
  if (critic_steps < 1) throw InvalidArgument("train.critic_steps must be >= 1");
  if (max_steps < 0) throw InvalidArgument("train.max_steps must be >= 0");
  if (checkpoint_every < 1) throw InvalidArgument("train.checkpoint_every must be >= 1");
}

double lr_at(int64_t epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw InvalidArgument("lr_at: epoch must be >= 0");
  const int64_t decays = epoch / cfg.lr_decay_every;
  const double raw = cfg.lr0 / std::pow(cfg.lr_decay_factor, static_cast<double>(decays));
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.15g", raw);
  return std::strtod(buf, nullptr);
}

Adam::Adam(std::vector<torch::Tensor> params, double lr, std::array<double, 2> betas, double eps)
    : params_(std::move(params)), lr_(lr), betas_(betas), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.mutable_grad().reset();
}

void Adam::step() {
  torch::NoGradGuard no_grad;
  ++steps_;
  const double bc1 = 1.0 - std::pow(betas_[0], static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(betas_[1], static_cast<double>(steps_));
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto& g = params_[i].grad();
    if (!g.defined()) continue;
    m_[i].mul_(betas_[0]).add_(g, 1.0 - betas_[0]);
    v_[i].mul_(betas_[1]).addcmul_(g, g, 1.0 - betas_[1]);
    auto denom = (v_[i] / bc2).sqrt_().add_(eps_);
    params_[i].addcdiv_(m_[i], denom, -lr_ / bc1);
  }
}

namespace {

std::vector<torch::Tensor> values_of(const std::vector<std::pair<std::string, torch::Tensor>>& named) {
  std::vector<torch::Tensor> out;
  for (const auto& p : named) out.push_back(p.second);
  return out;
}

constexpr char kCheckpointMagic[4] = {'D', 'T', 'V', 'C'};

void put_le(std::string& buf, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

torch::Tensor state_tensor(const std::vector<std::uint8_t>& bytes) {
  auto t = torch::empty({static_cast<int64_t>(bytes.size())}, torch::kUInt8);
  std::memcpy(t.data_ptr<std::uint8_t>(), bytes.data(), bytes.size());
  return t;
}

}  // namespace

std::string Checkpoint::config_hash() const { return fnv1a_hex(config.at("model").dump()); }

ModelConfig Checkpoint::model_config() const { return config.at("model").get<ModelConfig>(); }

const torch::Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.first == name) return t.second;
  }
  throw FormatError("checkpoint: missing tensor \"" + name + "\"");
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    if (t.scalar_type() != torch::kFloat32) throw InvalidArgument("checkpoint: tensor " + name + " is not binary32");
    const std::uint64_t bytes = static_cast<std::uint64_t>(t.numel()) * 4;
    entries.push_back({{"name", name}, {"shape", t.sizes().vec()}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  json header = {{"version", kCheckpointVersion},
                 {"config", ckpt.config},
                 {"config_hash", ckpt.config_hash()},
                 {"epoch", ckpt.epoch},
                 {"step", ckpt.step},
                 {"optimizer_steps", {{"generator", ckpt.generator_opt_steps}, {"critic", ckpt.critic_opt_steps}}},
                 {"tensors", entries},
                 {"rng", {{"offset", offset}, {"bytes", ckpt.rng_state.size()}}}};
  const std::string header_text = header.dump();

  std::string buf(kCheckpointMagic, 4);
  put_le(buf, kCheckpointVersion, 4);
  put_le(buf, header_text.size(), 8);
  buf += header_text;
  for (const auto& [name, t] : ckpt.tensors) {
    auto c = t.detach().contiguous();
    const float* p = c.data_ptr<float>();
    for (int64_t i = 0; i < c.numel(); ++i) put_le(buf, std::bit_cast<std::uint32_t>(p[i]), 4);
  }
  buf.append(reinterpret_cast<const char*>(ckpt.rng_state.data()), ckpt.rng_state.size());

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("cannot write checkpoint " + path.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string() + ": ";
  if (bytes.size() < 16) throw FormatError(where + "truncated preamble");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw FormatError(where + "bad magic");
  const auto version = static_cast<std::uint32_t>(get_le(&bytes[4], 4));
  if (version != kCheckpointVersion) {
    throw ConfigMismatch(where + "unsupported version " + std::to_string(version) + " (expected " +
                         std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t header_len = get_le(&bytes[8], 8);
  if (header_len > bytes.size() - 16) throw FormatError(where + "truncated header");
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::parse_error& e) {
    throw FormatError(where + "header: " + e.what());
  }
  const std::uint64_t payload_start = 16 + header_len;
  const std::uint64_t payload_len = bytes.size() - payload_start;

  Checkpoint ckpt;
  try {
    ckpt.config = header.at("config");
    ckpt.epoch = header.at("epoch").get<int64_t>();
    ckpt.step = header.at("step").get<int64_t>();
    ckpt.generator_opt_steps = header.at("optimizer_steps").at("generator").get<int64_t>();
    ckpt.critic_opt_steps = header.at("optimizer_steps").at("critic").get<int64_t>();
    std::uint64_t expected_end = 0;
    for (const auto& e : header.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<std::vector<int64_t>>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto nbytes = e.at("bytes").get<std::uint64_t>();
      if (offset + nbytes > payload_len) throw FormatError(where + "truncated payload (tensor " + name + ")");
      auto t = torch::empty(shape, torch::kFloat32);
      if (static_cast<std::uint64_t>(t.numel()) * 4 != nbytes) {
        throw FormatError(where + "tensor " + name + " byte count does not match its shape");
      }
      float* p = t.data_ptr<float>();
      const unsigned char* src = bytes.data() + payload_start + offset;
      for (int64_t i = 0; i < t.numel(); ++i) {
        p[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(src + 4 * i, 4)));
      }
      ckpt.tensors.emplace_back(name, t);
      expected_end = std::max(expected_end, offset + nbytes);
    }
    const auto rng_offset = header.at("rng").at("offset").get<std::uint64_t>();
    const auto rng_bytes = header.at("rng").at("bytes").get<std::uint64_t>();
    if (rng_offset + rng_bytes > payload_len) throw FormatError(where + "truncated payload (rng state)");
    const auto* rng_src = bytes.data() + payload_start + rng_offset;
    ckpt.rng_state.assign(rng_src, rng_src + rng_bytes);
    expected_end = std::max(expected_end, rng_offset + rng_bytes);
    if (expected_end != payload_len) throw FormatError(where + "trailing bytes after payload");
    if (header.at("config_hash").get<std::string>() != ckpt.config_hash()) {
      throw FormatError(where + "config_hash does not match stored config");
    }
  } catch (const json::exception& e) {
    throw FormatError(where + "header: " + e.what());
  }
  return ckpt;
}

void require_compatible(const Checkpoint& ckpt, const ModelConfig& cfg) {
  const json stored = ckpt.config.at("model").flatten();
  const json wanted = json(cfg.resolved()).flatten();
  for (auto it = wanted.begin(); it != wanted.end(); ++it) {
    if (!stored.contains(it.key())) throw ConfigMismatch("checkpoint config lacks field model" + it.key());
    if (stored[it.key()] != it.value()) {
      throw ConfigMismatch("checkpoint config mismatch at model" + it.key() + ": checkpoint has " +
                           stored[it.key()].dump() + ", requested " + it.value().dump());
    }
  }
  for (auto it = stored.begin(); it != stored.end(); ++it) {
    if (!wanted.contains(it.key())) throw ConfigMismatch("checkpoint config has unknown field model" + it.key());
  }
}

void load_parameters(const Checkpoint& ckpt, Model& model) {
  require_compatible(ckpt, model.config());
  torch::NoGradGuard no_grad;
  for (auto& [name, p] : model.named_parameters()) {
    const auto& src = ckpt.tensor("param/" + name);
    if (src.sizes() != p.sizes()) throw FormatError("checkpoint: tensor param/" + name + " has wrong shape");
    p.copy_(src);
  }
}

TrainBatch make_batch(const std::vector<FrameSequence>& clips, const std::vector<FlowSequence>& flows) {
  if (clips.empty() || clips.size() != flows.size()) throw InvalidArgument("make_batch: clips/flows mismatch");
  std::vector<torch::Tensor> f, u;
  for (size_t i = 0; i < clips.size(); ++i) {
    f.push_back(clips[i].tensor());
    u.push_back(flows[i].tensor());
  }
  return {torch::stack(f), torch::stack(u)};
}

Trainer::Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg)
    : model_cfg_(model_cfg.resolved()),
      train_cfg_(train_cfg),
      model_(model_cfg_, train_cfg.seed),
      rng_(at::make_generator<at::CPUGeneratorImpl>(train_cfg.seed ^ 0x9e3779b97f4a7c15ULL)),
      gen_opt_(values_of(model_.generator_parameters()), lr_at(0, train_cfg), train_cfg.betas, train_cfg.adam_eps),
      critic_opt_(values_of(model_.critic_parameters()), lr_at(0, train_cfg), train_cfg.betas, train_cfg.adam_eps) {
  train_cfg_.validate();
}

void Trainer::set_epoch(int64_t epoch) {
  epoch_ = epoch;
  const double lr = lr_at(epoch, train_cfg_);
  gen_opt_.set_lr(lr);
  critic_opt_.set_lr(lr);
}

LossReport Trainer::train_step(const TrainBatch& batch) {
  const auto dtype = model_.dtype();
  const int64_t t = model_cfg_.t_frames;
  const auto& hw = model_cfg_.image_hw;
  expect_shape(batch.frames, {-1, 3, t + 1, hw.height, hw.width}, "train_step frames");
  expect_shape(batch.flows, {batch.frames.size(0), 2, t, hw.height, hw.width}, "train_step flows");
  auto frames = batch.frames.to(dtype);
  auto flows = batch.flows.to(dtype);
  auto start = frames.select(2, 0);
  auto real = frames.slice(2, 1);

  CriticFn critic = [this](const torch::Tensor& v) { return model_.critic->forward(v); };
  auto out = model_.reconstruct(start, flows);

  double critic_value = 0.0, gp_value = 0.0;
  for (int64_t k = 0; k < train_cfg_.critic_steps; ++k) {
    critic_opt_.zero_grad();
    auto parts = critic_loss(real, out.frames.detach(), critic, model_cfg_.critic.gp_lambda, rng_);
    critic_value = parts.loss.item<double>();
    gp_value = parts.gp.item<double>();
    if (!std::isfinite(critic_value)) throw TrainingDivergence("critic loss is not finite at step " + std::to_string(step_));
    parts.loss.backward();
    critic_opt_.step();
  }

  gen_opt_.zero_grad();
  auto lc = content_loss(out.frames, real);
  auto lm = motion_loss(out.flows_lr, downsample_flow_batch(flows, 2));
  auto la = generator_adv_loss(out.frames, critic);
  const auto& w = train_cfg_.weights;
  auto total = w.content * lc + w.motion * lm + w.adversarial * la;
  LossReport report;
  try {
    report = total_loss(lc.item<double>(), lm.item<double>(), la.item<double>(), w, critic_value, gp_value);
  } catch (const TrainingDivergence& e) {
    throw TrainingDivergence(std::string(e.what()) + " at step " + std::to_string(step_));
  }
  total.backward();
  gen_opt_.step();
  critic_opt_.zero_grad();
  ++step_;
  return report;
}

json training_config_json(const ModelConfig& model, const TrainConfig& train) {
  return {{"model", model.resolved()}, {"train", train}};
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.config = training_config_json(model_cfg_, train_cfg_);
  ckpt.epoch = epoch_;
  ckpt.step = step_;
  ckpt.generator_opt_steps = gen_opt_.steps();
  ckpt.critic_opt_steps = critic_opt_.steps();
  auto to_f32 = [](const torch::Tensor& t) { return t.detach().to(torch::kFloat32).clone(); };
  for (const auto& [name, p] : model_.named_parameters()) ckpt.tensors.emplace_back("param/" + name, to_f32(p));
  auto add_moments = [&](const char* group, const auto& named, Adam& opt) {
    for (size_t i = 0; i < named.size(); ++i) {
      ckpt.tensors.emplace_back(std::string("adam/") + group + "/m/" + named[i].first, to_f32(opt.first_moments()[i]));
      ckpt.tensors.emplace_back(std::string("adam/") + group + "/v/" + named[i].first, to_f32(opt.second_moments()[i]));
    }
  };
  add_moments("generator", model_.generator_parameters(), const_cast<Adam&>(gen_opt_));
  add_moments("critic", model_.critic_parameters(), const_cast<Adam&>(critic_opt_));
  auto state = const_cast<at::Generator&>(rng_).get_state();
  ckpt.rng_state.assign(state.data_ptr<std::uint8_t>(), state.data_ptr<std::uint8_t>() + state.numel());
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  require_compatible(ckpt, model_cfg_);
  torch::NoGradGuard no_grad;
  load_parameters(ckpt, model_);
  auto load_moments = [&](const char* group, const auto& named, Adam& opt) {
    for (size_t i = 0; i < named.size(); ++i) {
      opt.first_moments()[i].copy_(ckpt.tensor(std::string("adam/") + group + "/m/" + named[i].first));
      opt.second_moments()[i].copy_(ckpt.tensor(std::string("adam/") + group + "/v/" + named[i].first));
    }
  };
  load_moments("generator", model_.generator_parameters(), gen_opt_);
  load_moments("critic", model_.critic_parameters(), critic_opt_);
  gen_opt_.set_steps(ckpt.generator_opt_steps);
  critic_opt_.set_steps(ckpt.critic_opt_steps);
  rng_.set_state(state_tensor(ckpt.rng_state));
  step_ = ckpt.step;
  set_epoch(ckpt.epoch);
}

bool is_paper_scale(const ModelConfig& model, const TrainConfig& train) {
  return model.t_frames >= 32 || model.image_hw.height >= 128 || model.image_hw.width >= 128 ||
         (train.max_steps == 0 && train.epochs >= 200);
}

TrainingClip load_training_clip(const ClipManifest& clip, const ModelConfig& cfg, const FlowEstimator* provider) {
  FrameSequence frames = load_clip(clip, cfg.image_hw, cfg.t_frames);
  FlowSequence flows;
  if (clip.flow_cache_path && fs::exists(*clip.flow_cache_path)) {
    flows = read_flow_file(*clip.flow_cache_path);
    if (flows.steps() < cfg.t_frames || flows.height() != cfg.image_hw.height ||
        flows.width() != cfg.image_hw.width) {
      throw ShapeError("flow cache " + clip.flow_cache_path->string() + " has shape " + shape_string(flows.tensor()) +
                       ", need [2," + std::to_string(cfg.t_frames) + "," + std::to_string(cfg.image_hw.height) + "," +
                       std::to_string(cfg.image_hw.width) + "]");
    }
    flows = FlowSequence(flows.tensor().slice(1, 0, cfg.t_frames));
  } else if (provider) {
    flows = estimate_flows(frames, *provider);
  } else {
    throw ProviderError("no flow provider: clip " + clip.clip_id + " has no cached flows");
  }
  return {clip.clip_id, std::move(frames), std::move(flows)};
}

namespace {

// Drops log records past `last_step` (left over from an interrupted run).
void truncate_log(const fs::path& log_path, int64_t last_step) {
  if (!fs::exists(log_path)) return;
  std::ifstream in(log_path);
  std::vector<std::string> keep;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto rec = json::parse(line, nullptr, false);
    if (!rec.is_discarded() && rec.contains("step") && rec["step"].get<int64_t>() <= last_step) keep.push_back(line);
  }
  in.close();
  std::ofstream out(log_path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

std::string epoch_checkpoint_name(int64_t epoch) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "checkpoint_epoch_%04lld.ckpt", static_cast<long long>(epoch));
  return buf;
}

}  // namespace

Checkpoint fit(const std::vector<ClipManifest>& dataset, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
               const FitOptions& options) {
  std::ostream& log = options.progress ? *options.progress : std::cerr;
  std::vector<const ClipManifest*> train_clips;
  for (const auto& c : dataset) {
    if (c.split == Split::kTrain) train_clips.push_back(&c);
  }
  if (train_clips.empty()) throw InvalidArgument("fit: the train split is empty");
  if (is_paper_scale(model_cfg, train_cfg)) {
    log << "warning: configuration is not desk-scale (paper-scale run; expect long runtimes)\n";
  }

  const std::uint64_t provider_digest = options.provider ? options.provider->state_digest() : 0;
  std::vector<TrainingClip> clips;
  for (const auto* c : train_clips) clips.push_back(load_training_clip(*c, model_cfg, options.provider));

  Trainer trainer(model_cfg, train_cfg);
  fs::create_directories(options.out_dir);
  const fs::path log_path = options.out_dir / "train_log.jsonl";
  if (options.resume_from) {
    const Checkpoint ckpt = load_checkpoint(*options.resume_from);
    trainer.restore(ckpt);
    truncate_log(log_path, ckpt.step);
    log << "resuming from " << options.resume_from->string() << " at epoch " << ckpt.epoch << ", step " << ckpt.step
        << '\n';
  } else {
    std::ofstream(log_path, std::ios::trunc);
  }
  std::ofstream log_file(log_path, std::ios::app);

  const auto n = static_cast<int64_t>(clips.size());
  const int64_t batch = std::min(train_cfg.batch_size, n);
  int64_t epochs_run = 0;
  bool done = train_cfg.max_steps > 0 && trainer.step() >= train_cfg.max_steps;
  while (!done && trainer.epoch() < train_cfg.epochs) {
    const int64_t epoch = trainer.epoch();
    trainer.set_epoch(epoch);
    auto order = torch::randperm(n, trainer.rng(), torch::kLong);
    const auto* idx = order.data_ptr<int64_t>();
    for (int64_t begin = 0; begin < n && !done; begin += batch) {
      std::vector<FrameSequence> f;
      std::vector<FlowSequence> u;
      for (int64_t k = begin; k < std::min(begin + batch, n); ++k) {
        f.push_back(clips[static_cast<size_t>(idx[k])].frames);
        u.push_back(clips[static_cast<size_t>(idx[k])].flows);
      }
      const LossReport report = trainer.train_step(make_batch(f, u));
      log_file << loss_report_json(trainer.step(), report).dump() << '\n';
      log_file.flush();
      if (trainer.step() % 10 == 0 || trainer.step() == 1) {
        log << "epoch " << epoch << " step " << trainer.step() << " total " << report.total << " content "
            << report.content << " motion " << report.motion << '\n';
      }
      done = train_cfg.max_steps > 0 && trainer.step() >= train_cfg.max_steps;
    }
    trainer.set_epoch(epoch + 1);
    ++epochs_run;
    const bool budget_hit = options.epoch_budget >= 0 && epochs_run >= options.epoch_budget;
    const bool last = done || trainer.epoch() >= train_cfg.epochs || budget_hit;
    if (last || trainer.epoch() % train_cfg.checkpoint_every == 0) {
      const Checkpoint ckpt = trainer.checkpoint();
      save_checkpoint(ckpt, options.out_dir / epoch_checkpoint_name(trainer.epoch()));
      save_checkpoint(ckpt, options.out_dir / "last.ckpt");
    }
    if (budget_hit) break;
  }

  if (options.provider && options.provider->state_digest() != provider_digest) {
    throw ProviderError("flow provider state changed during training");
  }
  return trainer.checkpoint();
}

}  // namespace dtvnet
