#include "dtvnet/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include "dtvnet/config.hpp"
#include "dtvnet/errors.hpp"
#include "dtvnet/flow.hpp"
#include "dtvnet/image_io.hpp"
#include "dtvnet/metrics.hpp"
#include "dtvnet/training.hpp"

namespace dtvnet {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string numbered(const char* prefix, int64_t i, const char* suffix = "") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%04lld%s", prefix, static_cast<long long>(i), suffix);
  return buf;
}

void write_frames(const fs::path& dir, const torch::Tensor& frames, int64_t first_index) {
  fs::create_directories(dir);
  for (int64_t t = 0; t < frames.size(1); ++t) {
    write_png(dir / numbered("frame_", first_index + t, ".png"), tensor_to_image(frames.select(1, t)));
  }
}

bool flow_cache_valid(const ClipManifest& clip, int64_t t_frames, HW hw) {
  if (!clip.flow_cache_path || !fs::exists(*clip.flow_cache_path)) return false;
  try {
    const auto f = read_flow_file(*clip.flow_cache_path);
    return f.steps() >= t_frames && f.height() == hw.height && f.width() == hw.width;
  } catch (const Error&) {
    return false;
  }
}

// Marks an output directory complete or incomplete for downstream consumers.
void write_status(const fs::path& dir, const std::string& status) {
  fs::create_directories(dir);
  std::ofstream(dir / "STATUS") << status << '\n';
}

struct Globals {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  fs::path out = "dtvnet_out";
  std::string profile = "desk";
};

RunConfig resolve(const Globals& g, json overrides) {
  if (g.seed) {
    overrides["seed"] = *g.seed;
    overrides["train"]["seed"] = *g.seed;
  }
  return resolve_run_config(g.profile, g.config, overrides);
}

std::string joined_command(int argc, const char* const* argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

std::vector<ClipManifest> clips_in_split(const std::vector<ClipManifest>& all, Split split) {
  std::vector<ClipManifest> out;
  for (const auto& c : all) {
    if (c.split == split) out.push_back(c);
  }
  return out;
}

const ClipManifest& find_clip(const std::vector<ClipManifest>& all, const std::string& id) {
  for (const auto& c : all) {
    if (c.clip_id == id) return c;
  }
  throw InvalidArgument("clip \"" + id + "\" is not in the manifest");
}

}  // namespace

std::array<double, 2> synthetic_velocity(std::uint64_t seed, int64_t index, int64_t t_frames, HW hw) {
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
  const double limit = std::min(1.5, 0.5 * static_cast<double>(std::min(hw.height, hw.width)) / t_frames);
  std::uniform_real_distribution<double> u(-limit, limit);
  std::array<double, 2> v{u(rng), u(rng)};
  // Keep every clip visibly moving.
  if (std::hypot(v[0], v[1]) < 0.25 * limit) v[0] = v[0] < 0 ? -0.5 * limit : 0.5 * limit;
  return v;
}

fs::path write_synthetic_dataset(const fs::path& dir, int64_t count, int64_t t_frames, HW hw, std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("--synthetic needs at least one clip");
  std::vector<ClipManifest> clips;
  for (int64_t i = 0; i < count; ++i) {
    const std::string id = numbered("synth_", i);
    const auto clip = synth_clip(mix_seed(seed, 1000 + i), t_frames, hw, synthetic_velocity(seed, i, t_frames, hw));
    const fs::path frame_dir = dir / "clips" / id;
    write_frames(frame_dir, clip.frames.tensor(), 0);
    ClipManifest m;
    m.clip_id = id;
    for (int64_t t = 0; t <= t_frames; ++t) m.frame_paths.push_back(fs::absolute(frame_dir / numbered("frame_", t, ".png")));
    m.flow_cache_path = fs::absolute(dir / "flows" / (id + ".flow"));
    write_flow_file(clip.flows, *m.flow_cache_path);
    m.split = Split::kTrain;
    m.native_hw = hw;
    clips.push_back(std::move(m));
  }
  const fs::path manifest = dir / "manifest.json";
  write_manifest(manifest, clips);
  return manifest;
}

namespace {

int cmd_prepare(const Globals& g, int64_t synthetic, std::optional<int64_t> t_opt, std::optional<int64_t> hw_opt,
                const std::optional<fs::path>& manifest_path, bool keep_going, const std::string& command,
                std::ostream& out, std::ostream& err) {
  json overrides = json::object();
  if (t_opt) overrides["model"]["t_frames"] = *t_opt;
  if (hw_opt) overrides["model"]["image_hw"] = {*hw_opt, *hw_opt};
  const RunConfig cfg = resolve(g, overrides);
  const int64_t t = cfg.model.t_frames;
  const HW hw = cfg.model.image_hw;
  write_run_record(g.out, cfg, command);

  if (synthetic > 0) {
    const fs::path manifest = g.out / "manifest.json";
    if (fs::exists(manifest)) {
      const auto existing = read_manifest(manifest);
      bool fresh = static_cast<int64_t>(existing.size()) == synthetic;
      for (const auto& c : existing) {
        fresh = fresh && flow_cache_valid(c, t, hw) && static_cast<int64_t>(c.frame_paths.size()) == t + 1;
        for (const auto& p : c.frame_paths) fresh = fresh && fs::exists(p);
      }
      if (fresh) {
        out << "prepare: " << manifest.string() << " is up to date (" << existing.size() << " clips)\n";
        return kExitOk;
      }
    }
    write_synthetic_dataset(g.out, synthetic, t, hw, cfg.seed);
    out << "prepare: wrote " << synthetic << " synthetic clips to " << manifest.string() << '\n';
    return kExitOk;
  }

  if (!manifest_path) {
    err << "prepare: pass --synthetic N or --manifest PATH\n";
    return kExitUsage;
  }
  auto clips = read_manifest(*manifest_path);
  std::unique_ptr<FlowEstimator> provider;
  int failures = 0;
  for (auto& clip : clips) {
    if (flow_cache_valid(clip, t, hw)) continue;
    if (!provider) provider = flow_provider_from_env();
    if (!provider) {
      err << "prepare: no flow provider: clip " << clip.clip_id << " needs flows; set " << kFlowCommandEnv
          << " to an estimator command\n";
      return kExitUsage;
    }
    try {
      const auto frames = load_clip(clip, hw, t);
      const auto flows = estimate_flows(frames, *provider);
      clip.flow_cache_path = fs::absolute(g.out / "flows" / (clip.clip_id + ".flow"));
      write_flow_file(flows, *clip.flow_cache_path);
      out << "prepare: cached flows for " << clip.clip_id << '\n';
    } catch (const std::exception& e) {
      ++failures;
      err << "prepare: clip " << clip.clip_id << " failed: " << e.what() << '\n';
      if (!keep_going) {
        write_manifest(*manifest_path, clips);
        return kExitFailure;
      }
    }
  }
  write_manifest(*manifest_path, clips);
  return failures == 0 ? kExitOk : kExitFailure;
}

int cmd_train(const Globals& g, const fs::path& data, const std::optional<fs::path>& resume,
              std::optional<int64_t> max_steps, std::optional<int64_t> epochs, const std::string& command,
              std::ostream& out, std::ostream& err) {
  json overrides = json::object();
  if (max_steps) overrides["train"]["max_steps"] = *max_steps;
  if (epochs) overrides["train"]["epochs"] = *epochs;
  const RunConfig cfg = resolve(g, overrides);
  write_run_record(g.out, cfg, command);
  write_status(g.out, "incomplete");
  const auto clips = read_manifest(data);
  const auto provider = flow_provider_from_env();
  FitOptions opts;
  opts.out_dir = g.out;
  opts.resume_from = resume;
  opts.provider = provider.get();
  opts.progress = &err;
  const Checkpoint last = fit(clips, cfg.model, cfg.train, opts);
  write_status(g.out, "complete");
  out << "train: finished at epoch " << last.epoch << ", step " << last.step << "; checkpoints in " << g.out.string()
      << '\n';
  return kExitOk;
}

struct GenerateArgs {
  fs::path checkpoint;
  std::optional<fs::path> image;
  std::optional<fs::path> data;
  std::optional<std::string> clip;
  std::optional<std::string> encode_from;
  int64_t sample = 0;
};

int cmd_generate(const Globals& g, const GenerateArgs& a, const std::string& command, std::ostream& out,
                 std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  RunConfig cfg = resolve(g, json::object());
  cfg.model = ckpt.model_config();
  write_run_record(g.out, cfg, command);
  write_status(g.out, "incomplete");
  Model model(cfg.model, 0);
  load_parameters(ckpt, model);
  const HW hw = cfg.model.image_hw;

  std::vector<ClipManifest> clips;
  if (a.data) clips = read_manifest(*a.data);
  if ((a.clip || a.encode_from) && !a.data) throw InvalidArgument("--clip and --encode-from need --data MANIFEST");

  torch::Tensor i0;
  if (a.image) {
    i0 = resize_bilinear(image_to_tensor(read_png(*a.image)), hw);
  } else if (a.clip || a.encode_from) {
    const auto& clip = find_clip(clips, a.clip ? *a.clip : *a.encode_from);
    i0 = resize_bilinear(image_to_tensor(read_png(clip.frame_paths.at(0))), hw);
  } else {
    throw InvalidArgument("generate needs a start frame: --image PNG or --clip ID");
  }

  std::vector<std::pair<std::string, MotionVector>> codes;
  for (int64_t k = 0; k < a.sample; ++k) {
    codes.emplace_back(numbered("sample_", k), sample_motion_vector(mix_seed(cfg.seed, static_cast<std::uint64_t>(k))));
  }
  if (a.encode_from) {
    const auto provider = flow_provider_from_env();
    const auto data = load_training_clip(find_clip(clips, *a.encode_from), cfg.model, provider.get());
    codes.emplace_back("reconstruction", encode_flows(data.flows, model.ofe));
  }
  if (codes.empty()) throw InvalidArgument("nothing to generate: pass --sample K and/or --encode-from CLIP");

  std::vector<std::vector<torch::Tensor>> sheet;
  for (const auto& [name, f] : codes) {
    const auto [frames, flows] = generate_video(i0, f, model.generator);
    write_frames(g.out / name, frames.tensor(), 1);
    std::vector<torch::Tensor> row{i0};
    for (int64_t t = 0; t < frames.frames(); ++t) row.push_back(frames.frame(t));
    sheet.push_back(std::move(row));
    out << "generate: wrote " << frames.frames() << " frames to " << (g.out / name).string() << '\n';
  }
  write_png(g.out / "contact_sheet.png", contact_sheet(sheet));
  write_status(g.out, "complete");
  (void)err;
  return kExitOk;
}

int cmd_evaluate(const Globals& g, const fs::path& checkpoint, const fs::path& data, const std::string& split,
                 bool oracle_flow, const std::string& command, std::ostream& out, std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  RunConfig cfg = resolve(g, json::object());
  cfg.model = ckpt.model_config();
  write_run_record(g.out, cfg, command);
  std::unique_ptr<FlowEstimator> provider;
  if (oracle_flow) {
    provider = std::make_unique<TranslationOracle>();
  } else {
    provider = flow_provider_from_env();
  }
  if (!provider) {
    err << "evaluate: no flow provider: set " << kFlowCommandEnv << " or pass --oracle-flow\n";
    return kExitUsage;
  }
  const auto clips = clips_in_split(read_manifest(data), parse_split(split));
  if (clips.empty()) throw InvalidArgument("evaluate: split \"" + split + "\" has no clips");
  const EvalReport report = evaluate(ckpt, clips, *provider);
  json doc = report;
  doc["split"] = split;
  doc["flow_provider"] = provider->name();
  doc["complete"] = report.failures.empty();
  std::ofstream(g.out / "eval_report.json") << doc.dump(2) << '\n';
  out << "evaluate: " << report.per_clip.size() << " clips, PSNR " << report.psnr << " dB, SSIM " << report.ssim
      << ", Flow-MSE " << report.flow_mse << '\n';
  for (const auto& f : report.failures) err << "evaluate: clip " << f.clip_id << " failed: " << f.error << '\n';
  return report.failures.empty() ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Flow-conditioned time-lapse video generation", "dtvnet"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  Globals g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config, "JSON config file (overrides profile defaults)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed for every random draw");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--profile", g.profile, "Default configuration")->check(CLI::IsMember({"desk", "paper"}));

  auto* prepare = app.add_subcommand("prepare", "Cache optical flows (or write a synthetic dataset)");
  int64_t synthetic = 0;
  std::optional<int64_t> t_opt, hw_opt;
  std::optional<fs::path> manifest;
  bool keep_going = false;
  prepare->add_option("--synthetic", synthetic, "Write N synthetic clips with exact flows")->check(CLI::PositiveNumber);
  prepare->add_option("--t", t_opt, "Frames per clip after the start frame");
  prepare->add_option("--hw", hw_opt, "Square frame size");
  prepare->add_option("--manifest", manifest, "Manifest of real clips to prepare in place")->check(CLI::ExistingFile);
  prepare->add_flag("--keep-going", keep_going, "Continue past failing clips");

  auto* train = app.add_subcommand("train", "Train on the train split of a manifest");
  fs::path train_data;
  std::optional<fs::path> resume;
  std::optional<int64_t> max_steps, epochs;
  train->add_option("--data", train_data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--resume", resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  train->add_option("--max-steps", max_steps, "Stop after this many steps (0 = no limit)");
  train->add_option("--epochs", epochs, "Number of epochs");

  GenerateArgs gen_args;
  auto add_generate_options = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", gen_args.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
    sub->add_option("--image", gen_args.image, "Start frame (PNG)")->check(CLI::ExistingFile);
    sub->add_option("--data", gen_args.data, "Dataset manifest")->check(CLI::ExistingFile);
    sub->add_option("--clip", gen_args.clip, "Use this clip's first frame as the start frame");
    sub->add_option("--encode-from", gen_args.encode_from, "Reconstruct with the motion code of this clip");
  };
  auto* generate = app.add_subcommand("generate", "Generate videos from one start frame");
  add_generate_options(generate);
  generate->add_option("--sample", gen_args.sample, "Number of sampled motion vectors")->check(CLI::NonNegativeNumber);
  auto* diverse = app.add_subcommand("sample-diverse", "Same as generate with --sample (default 2)");
  add_generate_options(diverse);
  int64_t diverse_k = 2;
  diverse->add_option("--sample", diverse_k, "Number of sampled motion vectors")->check(CLI::PositiveNumber);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score reconstructions with PSNR, SSIM and Flow-MSE");
  fs::path eval_ckpt, eval_data;
  std::string split = "test";
  bool oracle_flow = false;
  evaluate_cmd->add_option("--checkpoint", eval_ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--data", eval_data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  evaluate_cmd->add_flag("--oracle-flow", oracle_flow, "Use the global-translation oracle as flow provider");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;
  const std::string command = joined_command(argc, argv);

  try {
    if (prepare->parsed()) return cmd_prepare(g, synthetic, t_opt, hw_opt, manifest, keep_going, command, out, err);
    if (train->parsed()) return cmd_train(g, train_data, resume, max_steps, epochs, command, out, err);
    if (generate->parsed()) return cmd_generate(g, gen_args, command, out, err);
    if (diverse->parsed()) {
      gen_args.sample = diverse_k;
      return cmd_generate(g, gen_args, command, out, err);
    }
    if (evaluate_cmd->parsed()) return cmd_evaluate(g, eval_ckpt, eval_data, split, oracle_flow, command, out, err);
  } catch (const TrainingDivergence& e) {
    err << "error: training diverged: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const ProviderError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace dtvnet
