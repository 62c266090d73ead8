// Command-line front end: synth, train, attack, transfer, defend, visualize.

#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "advkit/errors.hpp"
#include "advkit/experiments.hpp"

using namespace advkit;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_commas(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::size_t start = 0;
    while (start <= item.size()) {
      const std::size_t end = std::min(item.find(',', start), item.size());
      if (end > start) out.push_back(item.substr(start, end - start));
      start = end + 1;
    }
  }
  return out;
}

// Flag values plus the overrides to apply after any --config file.
struct Flags {
  std::string config;
  std::string dataset, format, model, out, finefool_step;
  std::vector<std::string> weights, substitutes, attacks, defenses;
  double eps = 0, alpha = 0, mu = 0, kappa = 0, c2 = 0, sigma = 0, scale = 0, lr = 0;
  int iters = 0, target = 0, kernel = 0, levels = 0, epochs = 0, cw_steps = 0;
  std::size_t samples = 0, workers = 0, artifacts = 0, batch = 0;
  std::uint64_t seed = 0;
  bool attention = false;
  std::vector<std::function<void(ExperimentSpec&)>> overrides;
};

template <typename T>
void flag(CLI::App& cmd, Flags& f, const std::string& name, T& slot, const std::string& help,
          std::function<void(ExperimentSpec&)> apply) {
  CLI::Option* opt = cmd.add_option(name, slot, help);
  f.overrides.push_back([opt, apply](ExperimentSpec& s) {
    if (opt->count() > 0) apply(s);
  });
}

void add_common(CLI::App& cmd, Flags& f) {
  cmd.add_option("--config", f.config, "INI file with [data] [model] [train] [attack] [defense] [run] sections")
      ->check(CLI::ExistingFile);
  flag(cmd, f, "--dataset", f.dataset, "IDX images file or CIFAR-10 batch", [&f](auto& s) { s.dataset = f.dataset; });
  flag(cmd, f, "--format", f.format, "idx | cifar", [&f](auto& s) { s.format = f.format; });
  flag(cmd, f, "--samples", f.samples, "correctly classified samples to attack (default 100)",
       [&f](auto& s) { s.samples = f.samples; });
  flag(cmd, f, "--seed", f.seed, "seed for initialisation, shuffling and random starts",
       [&f](auto& s) { s.seed = f.seed; });
  flag(cmd, f, "--out", f.out, "output directory", [&f](auto& s) { s.out = f.out; });
  flag(cmd, f, "--workers", f.workers, "worker threads (results do not depend on it)",
       [&f](auto& s) { s.workers = f.workers; });
}

void add_model(CLI::App& cmd, Flags& f) {
  flag(cmd, f, "--weights", f.weights, "weights file(s); comma separated or repeated",
       [&f](auto& s) {
         s.weights.clear();
         for (const auto& w : split_commas(f.weights)) s.weights.emplace_back(w);
       });
}

void add_attack(CLI::App& cmd, Flags& f) {
  flag(cmd, f, "--attacks", f.attacks, "fgsm,bim,pgd,mi-fgsm,deepfool,cw,finefool (default all)",
       [&f](auto& s) {
         s.attacks.clear();
         for (const auto& a : split_commas(f.attacks)) s.attacks.push_back(parse_attack(a));
       });
  flag(cmd, f, "--eps", f.eps, "L-inf budget in [0,1] pixel units", [&f](auto& s) { s.attack.epsilon = Real(f.eps); });
  flag(cmd, f, "--alpha", f.alpha, "step length (default eps/iters)", [&f](auto& s) { s.attack.alpha = Real(f.alpha); });
  flag(cmd, f, "--iters", f.iters, "iterations T", [&f](auto& s) { s.attack.iterations = f.iters; });
  flag(cmd, f, "--mu", f.mu, "momentum decay", [&f](auto& s) { s.attack.mu = Real(f.mu); });
  flag(cmd, f, "--kappa", f.kappa, "confidence margin", [&f](auto& s) { s.attack.kappa = Real(f.kappa); });
  flag(cmd, f, "--c2", f.c2, "weight of the L2 term in the margin loss", [&f](auto& s) { s.attack.c2 = Real(f.c2); });
  flag(cmd, f, "--target", f.target, "target label for targeted attacks", [&f](auto& s) { s.attack.target = f.target; });
  flag(cmd, f, "--finefool-step", f.finefool_step, "raw | linf | l2",
       [&f](auto& s) { s.attack.finefool_step = parse_step_norm(f.finefool_step); });
  flag(cmd, f, "--cw-steps", f.cw_steps, "Adam steps for C&W", [&f](auto& s) { s.attack.cw_steps = f.cw_steps; });
}

void add_defense(CLI::App& cmd, Flags& f) {
  auto each = [&f](ExperimentSpec& s, auto set) {
    if (s.defenses.empty()) s.defenses.push_back({DefenseKind::kGaussianBlur});
    for (auto& d : s.defenses) set(d);
  };
  flag(cmd, f, "--defense", f.defenses, "blur,transform", [&f](auto& s) {
    s.defenses.clear();
    for (const auto& n : split_commas(f.defenses)) {
      DefenseConfig d;
      d.kind = parse_defense(n);
      if (d.kind != DefenseKind::kNone) s.defenses.push_back(d);
    }
  });
  flag(cmd, f, "--sigma", f.sigma, "Gaussian sigma", [&f, each](auto& s) { each(s, [&](auto& d) { d.sigma = f.sigma; }); });
  flag(cmd, f, "--kernel", f.kernel, "odd Gaussian kernel size",
       [&f, each](auto& s) { each(s, [&](auto& d) { d.kernel_size = f.kernel; }); });
  flag(cmd, f, "--scale", f.scale, "input transform downsample factor",
       [&f, each](auto& s) { each(s, [&](auto& d) { d.transform_scale = f.scale; }); });
  flag(cmd, f, "--levels", f.levels, "input transform quantisation levels",
       [&f, each](auto& s) { each(s, [&](auto& d) { d.quantization_levels = f.levels; }); });
}

ExperimentSpec build_spec(const Flags& f) {
  ExperimentSpec spec;
  if (!f.config.empty()) apply_config_file(spec, f.config);
  for (const auto& o : f.overrides) o(spec);
  spec.attack.seed = spec.seed;
  return spec;
}

void print_reports(const std::vector<ExperimentReport>& reports) { std::cout << table_markdown(reports); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial robustness toolkit: attacks, defenses and benchmark reports"};
  app.require_subcommand(1);

  Flags f;
  std::size_t synth_count = 10000;
  std::string synth_out;

  auto* synth = app.add_subcommand("synth", "write a synthetic 28x28 digit dataset as an IDX pair");
  synth->add_option("--count", synth_count, "number of images")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "images file; labels go next to it (images -> labels)")->required();
  synth->add_option("--seed", f.seed, "generator seed");

  auto* train_cmd = app.add_subcommand("train", "train a model and save its weights");
  add_common(*train_cmd, f);
  flag(*train_cmd, f, "--model", f.model, "small-a | small-b | small-c", [&f](auto& s) { s.model = f.model; });
  flag(*train_cmd, f, "--weights", f.weights, "output weights file (default <out>/<model>.advw)",
       [&f](auto& s) { s.weights = {fs::path(f.weights.front())}; });
  flag(*train_cmd, f, "--epochs", f.epochs, "training epochs", [&f](auto& s) { s.train.epochs = f.epochs; });
  flag(*train_cmd, f, "--lr", f.lr, "Adam learning rate", [&f](auto& s) { s.train.learning_rate = Real(f.lr); });
  flag(*train_cmd, f, "--batch", f.batch, "minibatch size", [&f](auto& s) { s.train.batch_size = f.batch; });

  auto* attack_cmd = app.add_subcommand("attack", "white-box attacks with perturbation metrics");
  add_common(*attack_cmd, f);
  add_model(*attack_cmd, f);
  add_attack(*attack_cmd, f);
  flag(*attack_cmd, f, "--artifacts", f.artifacts, "samples per attack that get curves and images",
       [&f](auto& s) { s.artifacts = f.artifacts; });

  auto* transfer_cmd = app.add_subcommand("transfer", "craft on substitutes, evaluate on targets");
  add_common(*transfer_cmd, f);
  add_model(*transfer_cmd, f);
  add_attack(*transfer_cmd, f);
  flag(*transfer_cmd, f, "--substitutes", f.substitutes, "substitute weights; comma separated or repeated",
       [&f](auto& s) {
         s.substitutes.clear();
         for (const auto& w : split_commas(f.substitutes)) s.substitutes.emplace_back(w);
       });

  auto* defend_cmd = app.add_subcommand("defend", "evaluate adversarials through input filters");
  add_common(*defend_cmd, f);
  add_model(*defend_cmd, f);
  add_attack(*defend_cmd, f);
  add_defense(*defend_cmd, f);

  auto* vis_cmd = app.add_subcommand("visualize", "image grids of clean, adversarial and perturbation");
  add_common(*vis_cmd, f);
  add_model(*vis_cmd, f);
  add_attack(*vis_cmd, f);
  vis_cmd->add_flag("--attention", f.attention, "put the attention map under the clean image");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const Dataset ds = synthesize_digits(synth_count, f.seed);
      const fs::path images = synth_out;
      if (images.has_parent_path()) fs::create_directories(images.parent_path());
      save_idx(ds, images, idx_labels_path_for(images));
      std::cout << "wrote " << images.string() << " and " << idx_labels_path_for(images).string() << "\n";
      return 0;
    }
    ExperimentSpec spec = build_spec(f);
    if (train_cmd->parsed()) {
      const TrainLog log = run_train(spec);
      for (const auto& e : log.epochs) {
        std::cout << fmt::format("epoch {} loss {:.4f} accuracy {:.4f}\n", e.epoch, e.mean_loss, e.accuracy);
      }
    } else if (attack_cmd->parsed()) {
      print_reports(run_attack(spec));
    } else if (transfer_cmd->parsed()) {
      for (const auto& c : run_transfer(spec)) {
        std::cout << fmt::format("{} -> {}{} {}: ASR {:.2f}% over {}\n", c.substitute, c.target,
                                 c.white_box ? " *" : "", c.attack, c.asr, c.samples);
      }
    } else if (defend_cmd->parsed()) {
      for (const auto& c : run_defend(spec)) {
        std::cout << fmt::format("{} / {}: ASR {:.2f}% accuracy {:.2f}%\n", c.attack, c.defense, c.asr, c.accuracy);
      }
    } else if (vis_cmd->parsed()) {
      if (f.attention) spec.attention_overlay = true;
      for (const auto& p : run_visualize(spec)) std::cout << p.string() << "\n";
    }
  } catch (const advkit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
