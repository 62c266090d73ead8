#include "advkit/experiments.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "advkit/attention.hpp"
#include "advkit/errors.hpp"
#include "advkit/fileio.hpp"
#include "advkit/weights.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

namespace fs = std::filesystem;

namespace {

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw InvalidArgument(what + " path is required");
  if (!fs::exists(p)) throw IoError(what + " not found: " + p.string());
}

Model load_model(const fs::path& p) {
  require_file(p, "weights file");
  return load_weights(p);
}

const fs::path& primary_weights(const ExperimentSpec& spec) {
  if (spec.weights.empty()) throw InvalidArgument("--weights is required");
  return spec.weights.front();
}

std::string model_id(const fs::path& weights) { return weights.stem().string(); }

// Loads the dataset and picks the first `samples` images `model` gets right.
Dataset fixture_for(const ExperimentSpec& spec, const Model& model) {
  const Dataset data = load_dataset(spec.dataset, spec.format);
  const auto idx = correctly_classified(model, data, spec.samples);
  if (idx.empty()) throw InvalidArgument("the model classifies no sample of " + spec.dataset.string() + " correctly");
  return data.select(idx);
}

std::string report_header(const ExperimentSpec& spec, const std::string& title) {
  std::string out = "# " + title + "\n\n";
  out += "Scales: mean rho on [0,1]; L2 and Linf on 0-255; L0 is % of pixels with any channel changed by > 1/255.\n";
  out += "ASR and accuracy are percentages over samples the clean model classifies correctly.\n\n";
  out += "```ini\n" + spec_to_ini(spec) + "```\n\n";
  return out;
}

bool hits(int predicted, int label, std::optional<int> target) {
  return target ? predicted == *target : predicted != label;
}

// Grey or colour canvas helpers for the visualisation grid.
void blit(Image8& canvas, const Image8& tile, std::size_t x0, std::size_t y0) {
  for (std::size_t y = 0; y < tile.height; ++y) {
    for (std::size_t x = 0; x < tile.width; ++x) {
      for (std::size_t c = 0; c < canvas.channels; ++c) {
        canvas.at(x0 + x, y0 + y, c) = tile.at(x, y, tile.channels == 1 ? 0 : c);
      }
    }
  }
}

Image8 attention_tile(const AttentionMap& map) {
  const std::size_t h = map.weights.size(1), w = map.weights.size(2);
  const auto d = map.weights.data();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  Image8 img(w, h, 1);
  const double span = static_cast<double>(*hi - *lo);
  for (std::size_t i = 0; i < h * w; ++i) {
    img.pixels[i] = span > 0 ? static_cast<std::uint8_t>(std::lround(255.0 * (d[i] - *lo) / span)) : 0;
  }
  return img;
}

}  // namespace

Dataset load_dataset(const fs::path& path, const std::string& format) {
  require_file(path, "dataset");
  if (format == "idx") {
    const fs::path labels = idx_labels_path_for(path);
    require_file(labels, "IDX labels file");
    return load_idx(path, labels);
  }
  if (format == "cifar") return load_cifar10({path});
  throw InvalidArgument("unknown dataset format \"" + format + "\"");
}

std::vector<std::size_t> correctly_classified(const Model& model, const Dataset& data, std::size_t count) {
  std::vector<std::size_t> out;
  constexpr std::size_t kBatch = 256;
  for (std::size_t first = 0; first < data.size() && out.size() < count; first += kBatch) {
    const std::size_t n = std::min(kBatch, data.size() - first);
    const auto pred = model.predict(data.subset(first, n).images);
    for (std::size_t i = 0; i < n && out.size() < count; ++i) {
      if (pred[i] == data.labels[first + i]) out.push_back(first + i);
    }
  }
  return out;
}

std::vector<AttackRun> evaluate_attacks(const Model& model, const std::string& id, const Dataset& fixture,
                                        const std::vector<AttackKind>& attacks, const AttackConfig& cfg,
                                        std::size_t workers) {
  std::vector<AttackRun> runs;
  for (AttackKind kind : attacks) {
    AttackRun run{kind, attack_dataset(kind, model, fixture, cfg, workers), {}};
    run.report = summarize(id, attack_name(kind), run.results);
    runs.push_back(std::move(run));
  }
  return runs;
}

DefenseCell evaluate_defense(const Model& model, const DefenseConfig& defense, const std::string& attack,
                             std::span<const AttackResult> results, std::optional<int> target) {
  std::size_t n = 0, fooled = 0, kept = 0;
  for (const auto& r : results) {
    if (!clean_correct(r)) continue;
    ++n;
    const int p = defended_predict(model, defense, r.x_star).front();
    if (hits(p, r.label, target)) ++fooled;
    if (p == r.label) ++kept;
  }
  const auto pct = [n](std::size_t k) { return n ? 100.0 * static_cast<double>(k) / static_cast<double>(n) : 0.0; };
  return {attack, defense_name(defense.kind), pct(fooled), pct(kept)};
}

std::string defense_csv(std::span<const DefenseCell> cells) {
  std::string out = csv_line({"attack", "defense", "asr", "accuracy"});
  for (const auto& c : cells) {
    out += csv_line({c.attack, c.defense, fmt::format("{:.2f}", c.asr), fmt::format("{:.2f}", c.accuracy)});
  }
  return out;
}

std::string transfer_csv(std::span<const TransferCell> cells) {
  std::string out = csv_line({"substitute", "target", "attack", "asr", "samples", "white_box"});
  for (const auto& c : cells) {
    out += csv_line({c.substitute, c.target, c.attack, fmt::format("{:.2f}", c.asr), std::to_string(c.samples),
                     c.white_box ? "*" : ""});
  }
  return out;
}

TrainLog run_train(const ExperimentSpec& spec) {
  spec.validate();
  const Dataset data = load_dataset(spec.dataset, spec.format);
  Model model(make_architecture(spec.model, data.image_shape(), data.num_classes));
  model.initialize(spec.seed);
  TrainOptions opt = spec.train;
  opt.seed = spec.seed;
  const TrainLog log = train(model, data, opt);
  fs::create_directories(spec.out);
  const fs::path weights = spec.weights.empty() ? spec.out / (spec.model + ".advw") : spec.weights.front();
  if (weights.has_parent_path()) fs::create_directories(weights.parent_path());
  save_weights(model, weights);
  std::string csv = csv_line({"epoch", "mean_loss", "accuracy"});
  for (const auto& e : log.epochs) {
    csv += csv_line({std::to_string(e.epoch), fmt::format("{:.6f}", e.mean_loss), fmt::format("{:.6f}", e.accuracy)});
  }
  csv += csv_line({"final", "", fmt::format("{:.6f}", accuracy(model, data))});
  write_file_atomic(spec.out / "train_log.csv", csv);
  return log;
}

std::vector<ExperimentReport> run_attack(const ExperimentSpec& spec) {
  spec.validate();
  const fs::path& wpath = primary_weights(spec);
  const Model model = load_model(wpath);
  const Dataset fixture = fixture_for(spec, model);
  AttackConfig cfg = spec.attack;
  cfg.seed = spec.seed;
  const auto runs = evaluate_attacks(model, model_id(wpath), fixture, spec.attacks, cfg, spec.workers);

  fs::create_directories(spec.out / "curves");
  fs::create_directories(spec.out / "images");
  std::vector<ExperimentReport> reports;
  for (const auto& run : runs) {
    reports.push_back(run.report);
    const std::string name = attack_name(run.kind);
    const std::size_t shown = std::min(spec.artifacts, run.results.size());
    for (std::size_t i = 0; i < shown; ++i) {
      const auto& r = run.results[i];
      write_file_atomic(spec.out / "curves" / fmt::format("{}_{:03}.csv", name, i),
                        logits_curve_csv(r.logits_trace, r.label, cfg.target));
      write_netpbm(perturbation_image(r.perturbation), spec.out / "images" / fmt::format("{}_{:03}_rho.pgm", name, i));
      write_netpbm(to_image8(r.x_star), spec.out / "images" / fmt::format("{}_{:03}_adv.pgm", name, i));
    }
  }
  write_file_atomic(spec.out / "results.csv", table_csv(reports));
  write_file_atomic(spec.out / "results.md",
                    report_header(spec, "White-box attack results") + table_markdown(reports));
  return reports;
}

std::vector<TransferCell> run_transfer(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.substitutes.empty()) throw InvalidArgument("transfer needs at least one --substitute");
  if (spec.weights.empty()) throw InvalidArgument("transfer needs at least one target --weights");
  std::vector<Model> targets;
  for (const auto& w : spec.weights) targets.push_back(load_model(w));
  const Dataset data = load_dataset(spec.dataset, spec.format);
  AttackConfig cfg = spec.attack;
  cfg.seed = spec.seed;

  std::vector<TransferCell> cells;
  for (const auto& sub_path : spec.substitutes) {
    const Model sub = load_model(sub_path);
    const auto idx = correctly_classified(sub, data, spec.samples);
    if (idx.empty()) throw InvalidArgument("substitute " + sub_path.string() + " classifies no sample correctly");
    const Dataset fixture = data.select(idx);
    for (AttackKind kind : spec.attacks) {
      const auto results = attack_dataset(kind, sub, fixture, cfg, spec.workers);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        TransferCell cell;
        cell.substitute = model_id(sub_path);
        cell.target = model_id(spec.weights[t]);
        cell.attack = attack_name(kind);
        cell.white_box = fs::weakly_canonical(sub_path) == fs::weakly_canonical(spec.weights[t]);
        std::size_t fooled = 0;
        for (std::size_t i = 0; i < results.size(); ++i) {
          // only images the target itself gets right count
          if (targets[t].predict(fixture.image(i)).front() != fixture.labels[i]) continue;
          ++cell.samples;
          if (hits(targets[t].predict(results[i].x_star).front(), fixture.labels[i], cfg.target)) ++fooled;
        }
        cell.asr = cell.samples ? 100.0 * static_cast<double>(fooled) / static_cast<double>(cell.samples) : 0.0;
        cells.push_back(cell);
      }
    }
  }

  fs::create_directories(spec.out);
  write_file_atomic(spec.out / "transfer.csv", transfer_csv(cells));
  std::string md = report_header(spec, "Transfer attack results (* = white-box)");
  md += "| substitute | target | attack | ASR (%) | samples |\n|---|---|---|---:|---:|\n";
  for (const auto& c : cells) {
    md += fmt::format("| {} | {}{} | {} | {:.2f} | {} |\n", c.substitute, c.target, c.white_box ? " *" : "", c.attack,
                      c.asr, c.samples);
  }
  write_file_atomic(spec.out / "transfer.md", md);
  return cells;
}

std::vector<DefenseCell> run_defend(const ExperimentSpec& spec) {
  spec.validate();
  const fs::path& wpath = primary_weights(spec);
  const Model model = load_model(wpath);
  const Dataset fixture = fixture_for(spec, model);
  AttackConfig cfg = spec.attack;
  cfg.seed = spec.seed;

  std::vector<DefenseConfig> columns{DefenseConfig{}};
  for (const auto& d : spec.defenses) {
    if (d.kind != DefenseKind::kNone) columns.push_back(d);
  }
  std::vector<DefenseCell> cells;
  for (const auto& d : columns) {
    const auto pred = defended_predict(model, d, fixture.images);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) kept += pred[i] == fixture.labels[i];
    const double acc = 100.0 * static_cast<double>(kept) / static_cast<double>(pred.size());
    cells.push_back({"clean", defense_name(d.kind), 100.0 - acc, acc});
  }
  for (AttackKind kind : spec.attacks) {
    const auto results = attack_dataset(kind, model, fixture, cfg, spec.workers);
    for (const auto& d : columns) cells.push_back(evaluate_defense(model, d, attack_name(kind), results, cfg.target));
  }

  fs::create_directories(spec.out);
  write_file_atomic(spec.out / "defense.csv", defense_csv(cells));
  std::string md = report_header(spec, "Attacks under input-filter defenses");
  md += "Adversarials are crafted on the undefended model and classified through each filter.\n"
        "The `clean` rows give the defended accuracy on unperturbed inputs.\n\n";
  md += "| attack | defense | ASR (%) | accuracy (%) |\n|---|---|---:|---:|\n";
  for (const auto& c : cells) md += fmt::format("| {} | {} | {:.2f} | {:.2f} |\n", c.attack, c.defense, c.asr, c.accuracy);
  write_file_atomic(spec.out / "defense.md", md);
  return cells;
}

std::vector<fs::path> run_visualize(const ExperimentSpec& spec) {
  spec.validate();
  const Model model = load_model(primary_weights(spec));
  const Dataset fixture = fixture_for(spec, model);
  AttackConfig cfg = spec.attack;
  cfg.seed = spec.seed;
  const ImageShape s = fixture.image_shape();
  const std::size_t cols = spec.attacks.size() + 1;
  fs::create_directories(spec.out);

  std::vector<std::vector<AttackResult>> per_attack;
  for (AttackKind kind : spec.attacks) per_attack.push_back(attack_dataset(kind, model, fixture, cfg, spec.workers));

  std::vector<fs::path> written;
  for (std::size_t i = 0; i < fixture.size(); ++i) {
    Image8 grid(cols * s.width, 2 * s.height, s.channels == 1 ? 1 : 3);
    const Tensor x = fixture.image(i);
    blit(grid, to_image8(x), 0, 0);
    if (spec.attention_overlay && model.feature_tap()) {
      const Tensor fm = model.forward(x).feature_map;
      const Shape img_shape{s.channels, s.height, s.width};
      const AttentionMap map = compute_attention(x.reshaped_copy(img_shape),
                                                 fm.reshaped_copy(Shape{fm.size(1), fm.size(2), fm.size(3)}));
      blit(grid, attention_tile(map), 0, s.height);
      const fs::path att = spec.out / fmt::format("attention_{:03}.pgm", i);
      save_attention_pgm(map, att);
      written.push_back(att);
    }
    for (std::size_t a = 0; a < per_attack.size(); ++a) {
      const auto& r = per_attack[a][i];
      blit(grid, to_image8(r.x_star), (a + 1) * s.width, 0);
      blit(grid, perturbation_image(r.perturbation), (a + 1) * s.width, s.height);
    }
    const fs::path p = spec.out / fmt::format("grid_{:03}.{}", i, grid.channels == 1 ? "pgm" : "ppm");
    write_netpbm(grid, p);
    written.push_back(p);
  }
  return written;
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
