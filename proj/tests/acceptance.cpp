// Acceptance run: one PASS/FAIL line per criterion, nonzero exit when a hard
// criterion fails. Criterion 8 is a soft gate and never fails the run.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "advkit/attacks.hpp"
#include "advkit/attention.hpp"
#include "advkit/defenses.hpp"
#include "advkit/experiments.hpp"
#include "advkit/fileio.hpp"
#include "advkit/ops.hpp"
#include "advkit/train.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace advkit;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int hard_failures = 0;

void verdict(const std::string& id, const std::string& title, bool pass, const std::string& detail, bool soft = false) {
  const char* word = pass ? "PASS" : (soft ? "FAIL (soft gate, logged only)" : "FAIL");
  fmt::print("{} {}: {} | {}\n", id, title, word, detail);
  std::fflush(stdout);
  if (!pass && !soft) ++hard_failures;
}

oracle::Vec as_double(std::span<const Real> v) { return oracle::Vec(v.begin(), v.end()); }

double l2_255(const Tensor& rho) {
  double s = 0;
  for (Real v : rho.data()) s += static_cast<double>(v) * v;
  return 255.0 * std::sqrt(s);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// --- 1 ----------------------------------------------------------------------

void gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::size_t checked = 0, skipped = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const gradcheck::Report r = gradcheck::cnn(seed, 1e-3);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    skipped += r.skipped;
  }
  const double t = seconds_since(t0);
  verdict("C1", "gradient correctness", worst < 1e-3 && t < 60 && checked > 0,
          fmt::format("20 seeds, {} coordinates checked ({} kinks skipped), max rel err {:.3e}, {:.2f} s", checked,
                      skipped, worst, t));
}

// --- 2 ----------------------------------------------------------------------

void attention_oracle() {
  std::mt19937_64 rng(2024);
  double worst = 0;
  std::size_t cases = 0;
  for (std::size_t C = 1; C <= 3; ++C) {
    for (std::size_t c = 1; c <= 2; ++c) {
      for (std::size_t H = 1; H <= 4; ++H) {
        for (std::size_t W = 1; W <= 4; ++W) {
          for (std::size_t h = 1; h <= H; ++h) {
            for (std::size_t w = 1; w <= W; ++w) {
              const Tensor image = Tensor::uniform(Shape{C, H, W}, 0, 1, rng);
              const Tensor fm = Tensor::uniform(Shape{c, h, w}, 0, 2, rng);
              oracle::Vec up;
              for (std::size_t ch = 0; ch < c; ++ch) {
                const auto plane = oracle::bilinear(as_double(fm.data().subspan(ch * h * w, h * w)), h, w, H, W);
                up.insert(up.end(), plane.begin(), plane.end());
              }
              const auto want = oracle::attention(as_double(image.data()), C, up, c, H * W);
              const Tensor fm_up = bilinear_upsample(fm, H, W);
              const ChannelAttention wc = channel_attention(image, fm_up);
              const AttentionMap composed = attention_map(pixel_attention(wc, fm_up, image), H, W);
              const AttentionMap direct = compute_attention(image, fm);
              for (std::size_t i = 0; i < want.wc.size(); ++i) {
                worst = std::max(worst, std::abs(wc.weights.data()[i] - want.wc[i]));
              }
              for (std::size_t i = 0; i < want.wp.size(); ++i) {
                worst = std::max(worst, std::abs(composed.weights.data()[i] - want.wp[i]));
                worst = std::max(worst, std::abs(direct.weights.data()[i] - want.wp[i]));
              }
              ++cases;
            }
          }
        }
      }
    }
  }
  verdict("C2", "attention oracle equivalence", worst < 1e-5,
          fmt::format("{} shapes (C<=3, c<=2, H,W<=4, every fm size <= image), max abs err {:.3e}", cases, worst));
}

// --- 3 ----------------------------------------------------------------------

void normalization_invariants() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> small(1, 3), chans(1, 8), side(1, 16);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t C = small(rng), c = chans(rng), H = side(rng), W = side(rng);
    const Tensor image = Tensor::uniform(Shape{C, H, W}, 0, 1, rng);
    const Tensor fm = Tensor::uniform(Shape{c, H, W}, 0, 4, rng);
    const ChannelAttention wc = channel_attention(image, fm);
    const PixelAttention wp = pixel_attention(wc, fm, image);
    for (std::size_t i = 0; i < C; ++i) {
      double row = 0;
      for (std::size_t j = 0; j < c; ++j) row += wc.weights.data()[i * c + j];
      worst = std::max(worst, std::abs(row - 1));
    }
    double total = 0;
    for (Real v : wp.weights.data()) total += v;
    worst = std::max(worst, std::abs(total - 1));
  }
  verdict("C3", "normalization invariants", worst <= 1e-6,
          fmt::format("1000 random inputs, max |sum - 1| {:.3e}", worst));
}

// --- 4 ----------------------------------------------------------------------

void budget_property(const Model& model, const Dataset& fixture) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  const auto kinds = all_attacks();
  std::size_t violations = 0, pixels = 0;
  for (int run = 0; run < 200; ++run) {
    const AttackKind kind = kinds[static_cast<std::size_t>(run) % kinds.size()];
    AttackConfig cfg;
    cfg.epsilon = static_cast<Real>(0.3 * u(rng));
    cfg.iterations = 1 + static_cast<int>(rng() % 12);
    if (u(rng) < 0.5) cfg.alpha = static_cast<Real>(0.01 + 0.2 * u(rng));
    cfg.mu = static_cast<Real>(1.5 * u(rng));
    cfg.kappa = static_cast<Real>(2 * u(rng));
    cfg.c2 = static_cast<Real>(0.1 * u(rng));
    cfg.seed = rng();
    cfg.finefool_step = std::array{StepNorm::kRaw, StepNorm::kLinf, StepNorm::kL2}[rng() % 3];
    cfg.cw_steps = 5 + static_cast<int>(rng() % 20);
    cfg.deepfool_overshoot = static_cast<Real>(0.1 * u(rng));
    const std::size_t i = rng() % fixture.size();
    const int label = fixture.labels[i];
    if (u(rng) < 0.3) cfg.target = (label + 1 + static_cast<int>(rng() % 9)) % 10;
    Tensor x = fixture.image(i);
    if (u(rng) < 0.2) {
      std::mt19937_64 noise(rng());
      x = Tensor::uniform(x.shape(), 0, 1, noise);
    }
    const AttackResult r = run_attack(kind, model, x, label, cfg);
    for (std::size_t k = 0; k < x.numel(); ++k) {
      const Real v = r.x_star.data()[k];
      const bool bad = std::abs(v - x.data()[k]) > cfg.epsilon + Real(1e-6) || v < 0 || v > 1 || !std::isfinite(v);
      violations += bad;
      ++pixels;
    }
  }
  verdict("C4", "epsilon-ball and range property", violations == 0,
          fmt::format("200 randomized runs over all 7 attacks, {} pixels, {} violations", pixels, violations));
}

// --- 5 ----------------------------------------------------------------------

void deepfool_linear() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  int done = 0;
  while (done < 50) {
    const std::size_t H = 2 + rng() % 5, W = 2 + rng() % 5, n = H * W;
    Model m(make_linear_architecture({1, H, W}, 2));
    oracle::Vec w(n), x(n);
    for (auto& v : w) v = static_cast<Real>(nd(rng));
    for (auto& v : x) v = static_cast<Real>(0.3 + 0.4 * u(rng));
    // bias puts x at signed margin delta from the boundary w.x + b = 0
    const double delta = (u(rng) < 0.5 ? -1 : 1) * (0.05 + 0.45 * u(rng));
    double wx = 0, ww = 0;
    for (std::size_t k = 0; k < n; ++k) {
      wx += w[k] * x[k];
      ww += w[k] * w[k];
    }
    const double b = static_cast<double>(static_cast<Real>(delta - wx));
    // the closed-form step must stay inside the box so it is not projected
    if (std::abs(delta) / std::sqrt(ww) * (1 + 1e-3) >= 0.3) continue;
    auto weight = m.parameters()[0].value.mutable_data();
    for (std::size_t k = 0; k < n; ++k) weight[n + k] = static_cast<Real>(w[k]);
    m.parameters()[1].value.mutable_data()[1] = static_cast<Real>(b);

    const Tensor xt(Shape{1, 1, H, W}, std::vector<Real>(x.begin(), x.end()));
    AttackConfig cfg;
    cfg.epsilon = 1;
    cfg.deepfool_overshoot = 0;
    cfg.deepfool_max_iterations = 1;
    const AttackResult r = deepfool(m, xt, m.predict(xt).front(), cfg);
    if (r.step_distances.empty()) {
      worst = INFINITY;
      break;
    }
    const double expected = oracle::hyperplane_distance(w, b, x);
    worst = std::max(worst, std::abs(l2_255(r.perturbation) / 255.0 - expected));
    worst = std::max(worst, std::abs(r.step_distances.front() - expected));
    ++done;
  }
  verdict("C5", "DeepFool linear oracle", worst <= 1e-5,
          fmt::format("50 binary linear classifiers, max |first step - distance| {:.3e}", worst));
}

// --- 6 ----------------------------------------------------------------------

void momentum_replay(const Model& model, const Dataset& fixture) {
  double worst_abs = 0, worst_rel = 0;
  std::size_t steps = 0;
  for (AttackKind kind : {AttackKind::kFineFool, AttackKind::kMiFgsm}) {
    for (std::size_t i = 0; i < 10; ++i) {
      AttackConfig cfg;
      cfg.record_trace = true;
      // a small budget keeps the attack running for all T iterations
      cfg.epsilon = Real(0.02);
      const AttackResult r = run_attack(kind, model, fixture.image(i), fixture.labels[i], cfg);
      oracle::Vec g(r.x_star.numel(), 0.0);
      for (const auto& rec : r.records) {
        oracle::momentum_step(g, cfg.mu, as_double(rec.gradient.data()), as_double(rec.weight.data()));
        ++steps;
      }
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double err = std::abs(r.momentum.data()[k] - g[k]);
        worst_abs = std::max(worst_abs, err);
        worst_rel = std::max(worst_rel, err / std::max(std::abs(g[k]), 1e-12));
      }
    }
  }
  verdict("C6", "momentum recurrence replay", worst_abs <= 1e-5 && steps > 0,
          fmt::format("FineFool and MI-FGSM, 10 images each, {} replayed steps, max abs err {:.3e} (max rel {:.3e})",
                      steps, worst_abs, worst_rel));
}

// --- 7, 8, 9 ----------------------------------------------------------------

struct Efficacy {
  std::map<AttackKind, std::vector<AttackResult>> results;
};

Efficacy efficacy(const Model& model, const Dataset& fixture, double clean_accuracy, double train_seconds) {
  const auto t0 = Clock::now();
  Efficacy e;
  const AttackConfig cfg;  // eps 0.1, T 10
  std::string detail = fmt::format("clean acc {:.1f}%", 100 * clean_accuracy);
  bool pass = clean_accuracy >= 0.98 && fixture.size() == 100;
  for (AttackKind k : {AttackKind::kFgsm, AttackKind::kBim, AttackKind::kPgd, AttackKind::kMiFgsm,
                       AttackKind::kFineFool}) {
    e.results[k] = attack_dataset(k, model, fixture, cfg);
    const double a = asr(e.results[k]);
    pass &= a >= (k == AttackKind::kFgsm ? 50.0 : 90.0);
    detail += fmt::format(", {} {:.0f}%", attack_name(k), a);
  }
  const double t = seconds_since(t0) + train_seconds;
  pass &= t < 300;
  verdict("C7", "desk-scale efficacy", pass,
          fmt::format("{} on {} images; train+attack {:.1f} s", detail, fixture.size(), t));
  for (AttackKind k : {AttackKind::kDeepFool, AttackKind::kCw}) e.results[k] = attack_dataset(k, model, fixture, cfg);
  return e;
}

void perturbation_trend(const Efficacy& e) {
  auto stats = [&](AttackKind k) {
    std::vector<double> l2;
    for (const auto& r : e.results.at(k)) {
      if (r.success) l2.push_back(l2_255(r.perturbation));
    }
    return std::pair{asr(e.results.at(k)), median(l2)};
  };
  const auto [ff_asr, ff_l2] = stats(AttackKind::kFineFool);
  const auto [mi_asr, mi_l2] = stats(AttackKind::kMiFgsm);
  const bool matched = ff_asr >= 95 && mi_asr >= 95;
  verdict("C8", "perturbation trend (FineFool vs MI-FGSM)", matched && ff_l2 <= mi_l2,
          fmt::format("ASR {:.0f}% vs {:.0f}%, median L2 of successes {:.1f} vs {:.1f}", ff_asr, mi_asr, ff_l2, mi_l2),
          true);
}

void blur_trend(const Model& model, const Efficacy& e) {
  DefenseConfig blur;
  blur.kind = DefenseKind::kGaussianBlur;
  blur.sigma = 1.0;
  blur.kernel_size = 3;
  const std::vector<AttackKind> table{AttackKind::kMiFgsm, AttackKind::kCw, AttackKind::kFineFool};
  bool pass = true, all_pass = true;
  double worst_sum = 0;
  std::string detail, all_detail;
  for (const auto& [kind, results] : e.results) {
    const double before = asr(results);
    worst_sum = std::max(worst_sum, std::abs(before + accuracy_under_attack(results) - 100));
    const DefenseCell cell = evaluate_defense(model, blur, attack_name(kind), results);
    const double drop = before - cell.asr;
    const std::string item = fmt::format("{} {:.0f}->{:.0f}%", attack_name(kind), before, cell.asr);
    all_pass &= drop >= 20;
    all_detail += (all_detail.empty() ? "" : ", ") + item;
    if (std::find(table.begin(), table.end(), kind) != table.end()) {
      pass &= drop >= 20;
      detail += (detail.empty() ? "" : ", ") + item;
    }
  }
  pass &= worst_sum <= 0.01;
  verdict("C9", "blur trend on MI-FGSM, C&W, FineFool", pass,
          fmt::format("{}; undefended max |ASR + acc - 100| {:.3e}", detail, worst_sum));
  fmt::print("C9 (info) blur drop >= 20 pp for all seven attacks: {} | {}\n", all_pass ? "yes" : "no", all_detail);
}

// --- 10 ---------------------------------------------------------------------

std::map<std::string, std::string> pipeline_run(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path images = dir / "digits-images.idx";
  save_idx(synthesize_digits(800, 11), images, idx_labels_path_for(images));
  ExperimentSpec spec;
  spec.dataset = images;
  spec.out = dir / "out";
  spec.seed = 5;
  spec.samples = 10;
  spec.train.epochs = 1;
  spec.train.seed = 5;
  spec.attack.seed = 5;
  spec.attack.cw_steps = 20;
  spec.attacks = {AttackKind::kFgsm, AttackKind::kPgd, AttackKind::kDeepFool, AttackKind::kCw, AttackKind::kFineFool};
  spec.defenses = {DefenseConfig{DefenseKind::kGaussianBlur}, DefenseConfig{DefenseKind::kInputTransform}};
  run_train(spec);
  spec.weights = {spec.out / "small-a.advw"};
  run_attack(spec);
  run_defend(spec);
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(spec.out)) {
    if (entry.path().extension() == ".csv") files[fs::relative(entry.path(), spec.out).string()] = read_file(entry.path());
  }
  return files;
}

void determinism() {
  const fs::path root = fs::temp_directory_path() / "advkit_acceptance";
  const auto a = pipeline_run(root / "run1");
  const auto b = pipeline_run(root / "run2");
  std::size_t differing = 0;
  for (const auto& [name, text] : a) {
    const auto it = b.find(name);
    differing += it == b.end() || it->second != text;
  }
  const bool pass = a.size() == b.size() && differing == 0 && a.count("results.csv") && a.count("defense.csv");
  verdict("C10", "determinism", pass,
          fmt::format("synth -> train -> attack -> defend twice, {} CSV files compared, {} differ", a.size(),
                      differing + (a.size() != b.size())));
}

}  // namespace

int main() {
  const auto start = Clock::now();
  gradient_correctness();
  attention_oracle();
  normalization_invariants();

  // reference fixture: small-a on synthetic digits
  const auto t0 = Clock::now();
  const Dataset train_set = synthesize_digits(6000, 1);
  const Dataset test_set = synthesize_digits(1000, 2);
  Model model(make_architecture("small-a", train_set.image_shape(), train_set.num_classes));
  model.initialize(7);
  train(model, train_set, TrainOptions{});
  const double train_seconds = seconds_since(t0);
  const double clean = accuracy(model, test_set);
  const Dataset fixture = test_set.select(correctly_classified(model, test_set, 100));

  budget_property(model, fixture);
  deepfool_linear();
  momentum_replay(model, fixture);
  const Efficacy e = efficacy(model, fixture, clean, train_seconds);
  perturbation_trend(e);
  blur_trend(model, e);
  determinism();

  fmt::print("acceptance: {} hard failure(s), {:.1f} s total\n", hard_failures, seconds_since(start));
  return hard_failures == 0 ? 0 : 1;
}
