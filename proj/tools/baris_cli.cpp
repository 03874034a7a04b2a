#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "baris/backbone.hpp"
#include "baris/config.hpp"
#include "baris/grad_suite.hpp"
#include "baris/synthetic.hpp"
#include "baris/train.hpp"

namespace {

int env_thread_cap() {
  const char* v = std::getenv("BARIS_THREADS");
  if (!v) return 0;
  const int n = std::atoi(v);
  return n > 0 ? n : 0;
}

baris::RunConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  baris::RunConfig cfg;
  if (!path.empty()) cfg = baris::parse_config_file(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw baris::ConfigError("--set expects section.key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1), "--set " + kv);
  }
  return cfg;
}

int cmd_gen_data(const std::string& out, int count, uint64_t seed, const std::string& config,
                 const std::vector<std::string>& sets, int threads) {
  baris::RunConfig cfg = load_config(config, sets);
  cfg.validate();
  const int cap = env_thread_cap();
  if (cap && threads > cap) threads = cap;
  if (threads < 1) threads = 1;
  baris::generate_dataset(out, count, seed, cfg.scene, threads);
  cfg.write_resolved(out);
  std::printf("wrote %d scenes to %s\n", count, out.c_str());
  return 0;
}

int cmd_train(const std::string& data, const std::string& out, const std::string& config,
              const std::vector<std::string>& sets) {
  baris::RunConfig cfg = load_config(config, sets);
  cfg.validate();
  cfg.write_resolved(out);
  try {
    auto records = baris::train(cfg, data, out);
    for (const auto& r : records)
      std::printf("epoch %d  loss %.6f  iou %.4f  bf %.4f  (%.1fs)\n", r.epoch, r.train_loss,
                  r.mask_iou, r.boundary_f, r.wall_seconds);
  } catch (const baris::DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 2;
  }
  return 0;
}

int cmd_grad_check(const std::string& module, uint64_t seed) {
  auto cases = baris::gradsuite::run_suite(module, seed);
  bool all_ok = true;
  for (const auto& c : cases) {
    std::printf("%-7s %-28s %.3e  (tol %.0e)  %s\n", c.module.c_str(), c.name.c_str(), c.err,
                c.threshold, c.ok() ? "ok" : "FAIL");
    all_ok = all_ok && c.ok();
  }
  std::printf("%zu checks, %s\n", cases.size(), all_ok ? "all passed" : "FAILURES");
  return all_ok ? 0 : 1;
}

int cmd_param_audit(const std::string& backbone, const std::string& scheme_str, int gamma,
                    int num_envs, int channels) {
  using namespace baris;
  std::printf("%-12s %-10s %15s %15s %10s\n", "backbone", "scheme", "trainable", "total",
              "fraction");
  auto row = [](const char* bb, const char* sc, double trainable, double total) {
    std::printf("%-12s %-10s %15.0f %15.0f %9.2f%%\n", bb, sc, trainable, total,
                100.0 * trainable / total);
  };
  if (scheme_str != "all") parse_scheme(scheme_str);
  if (backbone == "swin-b-ref") {
    // published reference totals for the full backbone and its adapters
    const double full = 86.75e6, adapters = 4.25e6;
    row("swin-b-ref", "full", full, full);
    row("swin-b-ref", "era", adapters, full + adapters);
    return 0;
  }
  if (backbone != "toy") throw std::invalid_argument("unknown backbone: " + backbone);
  EraConfig era;
  era.channels = channels;
  era.gamma = gamma;
  era.num_envs = num_envs;
  const auto bb = toy_backbone_param_descs(channels);
  const auto ad = toy_era_param_descs(era);
  for (const char* sc : {"full", "era", "bitfit", "norm_only"}) {
    if (scheme_str != "all" && scheme_str != sc) continue;
    ParamBudget b = count_params(parse_scheme(sc), bb, ad);
    row("toy", sc, static_cast<double>(b.trainable), static_cast<double>(b.total));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef _OPENMP
  if (const int cap = env_thread_cap()) omp_set_num_threads(cap);
#endif
  CLI::App app{"underwater instance-segmentation desk-scale pipeline"};
  app.require_subcommand(1);

  std::string out, data, config, module = "all", backbone = "toy", scheme = "all";
  std::string loss, freeze, optimizer;
  std::vector<std::string> sets;
  int count = 100, gamma = 2, num_envs = 16, channels = 16, threads = 1;
  int epochs = -1, batch_size = -1, bace_scale = -1;
  double lr = -1.0, bace_lambda = -1.0;
  uint64_t seed = 1;
  bool era_flag = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--out", out, "output dataset directory")->required();
  gen->add_option("--count", count, "number of scenes");
  gen->add_option("--seed", seed, "base seed; scenes use seed..seed+count-1");
  gen->add_option("--config", config, "config file");
  gen->add_option("--set", sets, "override, section.key=value");
  gen->add_option("--threads", threads, "worker threads (capped by BARIS_THREADS)");

  auto* tr = app.add_subcommand("train", "train on a generated dataset");
  tr->add_option("--data", data, "dataset directory")->required();
  tr->add_option("--out", out, "run directory")->required();
  tr->add_option("--config", config, "config file");
  tr->add_option("--set", sets, "override, section.key=value");
  tr->add_option("--seed", seed, "training seed");
  tr->add_option("--epochs", epochs, "override train.epochs");
  tr->add_option("--lr", lr, "override train.learning_rate");
  tr->add_option("--batch-size", batch_size, "override train.batch_size");
  tr->add_option("--loss", loss, "ce_only | ce_plus_bace");
  tr->add_option("--optimizer", optimizer, "sgd | adamw");
  tr->add_option("--bace-scale", bace_scale, "BACE downsampling scale");
  tr->add_option("--bace-lambda", bace_lambda, "BACE loss weight");
  tr->add_option("--freeze", freeze, "none | era");
  tr->add_flag("--era", era_flag, "insert ERA adapters into the backbone");

  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient audit");
  gc->add_option("--module", module, "all | tensor | decoder | era | bace");
  gc->add_option("--seed", seed, "suite seed");

  auto* pa = app.add_subcommand("param-audit", "trainable-parameter accounting");
  pa->add_option("--backbone", backbone, "toy | swin-b-ref");
  pa->add_option("--scheme", scheme, "all | full | era | bitfit | norm_only");
  pa->add_option("--gamma", gamma, "ERA projection ratio");
  pa->add_option("--num-envs", num_envs, "environmental embedding rows");
  pa->add_option("--channels", channels, "toy backbone channel width");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(out, count, seed, config, sets, threads);
    if (tr->parsed()) {
      if (tr->count("--seed")) sets.push_back("train.seed=" + std::to_string(seed));
      if (epochs >= 0) sets.push_back("train.epochs=" + std::to_string(epochs));
      if (lr >= 0.0) sets.push_back("train.learning_rate=" + std::to_string(lr));
      if (batch_size > 0) sets.push_back("train.batch_size=" + std::to_string(batch_size));
      if (!loss.empty()) sets.push_back("train.loss=" + loss);
      if (!optimizer.empty()) sets.push_back("train.optimizer=" + optimizer);
      if (bace_scale > 0) sets.push_back("bace.scale=" + std::to_string(bace_scale));
      if (bace_lambda >= 0.0) sets.push_back("bace.lambda=" + std::to_string(bace_lambda));
      if (!freeze.empty()) sets.push_back("train.freeze=" + freeze);
      if (era_flag) sets.push_back("era.enabled=true");
      return cmd_train(data, out, config, sets);
    }
    if (gc->parsed()) return cmd_grad_check(module, seed);
    if (pa->parsed()) return cmd_param_audit(backbone, scheme, gamma, num_envs, channels);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
