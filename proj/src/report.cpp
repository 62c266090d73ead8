#include "advkit/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "advkit/errors.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

namespace {

constexpr double kChangeThreshold = 1.0 / 255.0;

// (channels, height, width) of a single image tensor.
struct Planes {
  std::size_t c, h, w;
};

Planes image_planes(const Tensor& t, const char* what) {
  if (t.rank() == 3) return {t.size(0), t.size(1), t.size(2)};
  if (t.rank() == 4 && t.size(0) == 1) return {t.size(1), t.size(2), t.size(3)};
  throw InvalidShape(std::string(what) + " expects [C,H,W] or [1,C,H,W], got " + shape_str(t.shape()));
}

double percent(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

double parse_number(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("not a number in table: \"" + s + "\"");
  }
}

}  // namespace

PerturbationMetrics perturbation_metrics(const Tensor& rho) {
  const Planes p = image_planes(rho, "perturbation_metrics");
  const auto d = rho.data();
  PerturbationMetrics m;
  if (d.empty()) return m;
  double abs_sum = 0, sq = 0, mx = 0;
  for (Real v : d) {
    const double a = std::abs(static_cast<double>(v));
    abs_sum += a;
    sq += a * a;
    mx = std::max(mx, a);
  }
  std::size_t changed = 0;
  const std::size_t plane = p.h * p.w;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < p.c; ++c) {
      if (std::abs(static_cast<double>(d[c * plane + i])) > kChangeThreshold) {
        ++changed;
        break;
      }
    }
  }
  m.mean_rho = abs_sum / static_cast<double>(d.size());
  m.l0_percent = percent(changed, plane);
  m.l2 = 255.0 * std::sqrt(sq);
  m.linf = 255.0 * mx;
  return m;
}

PerturbationMetrics compute_metrics(const Tensor& x, const Tensor& x_star) {
  if (x.shape() != x_star.shape()) {
    throw InvalidShape("compute_metrics: " + shape_str(x.shape()) + " vs " + shape_str(x_star.shape()));
  }
  Tensor rho(x.shape());
  auto r = rho.mutable_data();
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = x_star.data()[i] - x.data()[i];
  return perturbation_metrics(rho);
}

PerturbationMetrics mean_metrics(std::span<const PerturbationMetrics> all) {
  PerturbationMetrics m;
  if (all.empty()) return m;
  for (const auto& a : all) {
    m.mean_rho += a.mean_rho;
    m.l0_percent += a.l0_percent;
    m.l2 += a.l2;
    m.linf += a.linf;
  }
  const double n = static_cast<double>(all.size());
  m.mean_rho /= n;
  m.l0_percent /= n;
  m.l2 /= n;
  m.linf /= n;
  return m;
}

bool clean_correct(const AttackResult& r) {
  return !r.clean_logits.empty() && argmax(r.clean_logits) == r.label;
}

double asr(std::span<const AttackResult> results) {
  std::size_t n = 0, hits = 0;
  for (const auto& r : results) {
    if (!clean_correct(r)) continue;
    ++n;
    if (r.success) ++hits;
  }
  return percent(hits, n);
}

double accuracy_under_attack(std::span<const AttackResult> results) {
  std::size_t n = 0, kept = 0;
  for (const auto& r : results) {
    if (!clean_correct(r)) continue;
    ++n;
    if (r.predicted == r.label) ++kept;
  }
  return percent(kept, n);
}

ExperimentReport summarize(const std::string& model, const std::string& attack,
                           std::span<const AttackResult> results) {
  ExperimentReport rep;
  rep.model = model;
  rep.attack = attack;
  std::vector<PerturbationMetrics> per;
  for (const auto& r : results) {
    if (clean_correct(r)) per.push_back(perturbation_metrics(r.perturbation));
  }
  rep.metrics = mean_metrics(per);
  rep.asr = asr(results);
  rep.accuracy = accuracy_under_attack(results);
  rep.samples = per.size();
  return rep;
}

std::string csv_field(std::string_view value) {
  if (value.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(value);
  std::string out = "\"";
  for (char ch : value) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  out += "\r\n";
  return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (!field.empty()) throw CorruptFile("csv: quote inside unquoted field");
        quoted = any = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        row.push_back(std::move(field));
        field.clear();
        rows.push_back(std::move(row));
        row.clear();
        any = false;
        break;
      default:
        field += ch;
        any = true;
    }
  }
  if (quoted) throw CorruptFile("csv: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

const std::vector<std::string> kTableHeader = {"model", "attack", "mean_rho", "l0_percent", "l2", "linf", "asr"};

std::vector<std::string> table_cells(const ExperimentReport& r) {
  return {r.model,
          r.attack,
          fmt::format("{:.6f}", r.metrics.mean_rho),
          fmt::format("{:.2f}", r.metrics.l0_percent),
          fmt::format("{:.2f}", r.metrics.l2),
          fmt::format("{:.2f}", r.metrics.linf),
          fmt::format("{:.2f}", r.asr)};
}

}  // namespace

std::string table_csv(std::span<const ExperimentReport> reports) {
  std::string out = csv_line(kTableHeader);
  for (const auto& r : reports) out += csv_line(table_cells(r));
  return out;
}

std::string table_markdown(std::span<const ExperimentReport> reports) {
  std::string out = "| model | attack | mean rho | L0 (%) | L2 | Linf | ASR (%) |\n";
  out += "|---|---|---:|---:|---:|---:|---:|\n";
  for (const auto& r : reports) {
    const auto c = table_cells(r);
    out += fmt::format("| {} | {} | {} | {} | {} | {} | {} |\n", c[0], c[1], c[2], c[3], c[4], c[5], c[6]);
  }
  return out;
}

std::vector<TableRow> parse_table_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows.front() != kTableHeader) throw CorruptFile("results table: unexpected header");
  std::vector<TableRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != kTableHeader.size()) {
      throw CorruptFile("results table: row " + std::to_string(i) + " has " + std::to_string(f.size()) + " fields");
    }
    out.push_back({f[0], f[1], parse_number(f[2]), parse_number(f[3]), parse_number(f[4]), parse_number(f[5]),
                   parse_number(f[6])});
  }
  return out;
}

std::string logits_curve_csv(const std::vector<std::vector<Real>>& trace, int label, std::optional<int> target) {
  std::string out = csv_line({"iteration", "logit_true", "logit_adv"});
  for (std::size_t it = 0; it < trace.size(); ++it) {
    const auto& z = trace[it];
    if (label < 0 || static_cast<std::size_t>(label) >= z.size()) throw InvalidArgument("label out of range");
    double adv;
    if (target) {
      adv = static_cast<double>(z.at(static_cast<std::size_t>(*target)));
    } else {
      adv = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < z.size(); ++j) {
        if (static_cast<int>(j) != label) adv = std::max(adv, static_cast<double>(z[j]));
      }
    }
    out += fmt::format("{},{:.6f},{:.6f}\r\n", it, static_cast<double>(z[static_cast<std::size_t>(label)]), adv);
  }
  return out;
}

namespace {

Image8 render(const Tensor& t, double scale, bool magnitude, const char* what) {
  const Planes p = image_planes(t, what);
  if (p.c != 1 && p.c != 3) throw InvalidShape(std::string(what) + ": need 1 or 3 channels");
  Image8 img(p.w, p.h, p.c);
  const auto d = t.data();
  for (std::size_t c = 0; c < p.c; ++c) {
    for (std::size_t y = 0; y < p.h; ++y) {
      for (std::size_t x = 0; x < p.w; ++x) {
        double v = static_cast<double>(d[(c * p.h + y) * p.w + x]);
        if (magnitude) v = std::abs(v);
        img.at(x, y, c) = to_byte(scale * v);
      }
    }
  }
  return img;
}

}  // namespace

Image8 to_image8(const Tensor& image) { return render(image, 255.0, false, "to_image8"); }

Image8 perturbation_image(const Tensor& rho) { return render(rho, 255.0 * 255.0, true, "perturbation_image"); }

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
