#include <set>
#include <sstream>

#include <fmt/format.h>

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "advkit/errors.hpp"
#include "advkit/experiments.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

namespace pt = boost::property_tree;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  boost::split(parts, s, boost::is_any_of(","));
  std::vector<std::string> out;
  for (auto& p : parts) {
    boost::trim(p);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

template <typename T>
T get(const pt::ptree& section, const std::string& where, const std::string& key) {
  const std::string raw = section.get<std::string>(key);
  try {
    return boost::lexical_cast<T>(boost::trim_copy(raw));
  } catch (const boost::bad_lexical_cast&) {
    throw InvalidArgument("config [" + where + "] " + key + ": bad value \"" + raw + "\"");
  }
}

bool get_bool(const pt::ptree& section, const std::string& where, const std::string& key) {
  const std::string v = boost::to_lower_copy(boost::trim_copy(section.get<std::string>(key)));
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw InvalidArgument("config [" + where + "] " + key + ": expected a boolean");
}

void check_keys(const pt::ptree& section, const std::string& where, const std::set<std::string>& allowed) {
  for (const auto& [key, _] : section) {
    if (!allowed.count(key)) throw InvalidArgument("config [" + where + "]: unknown key \"" + key + "\"");
  }
}

std::vector<std::filesystem::path> to_paths(const std::string& s) {
  std::vector<std::filesystem::path> out;
  for (const auto& p : split_list(s)) out.emplace_back(p);
  return out;
}

std::string join_paths(const std::vector<std::filesystem::path>& ps) {
  std::vector<std::string> s;
  for (const auto& p : ps) s.push_back(p.string());
  return boost::join(s, ",");
}

}  // namespace

void ExperimentSpec::validate() const {
  if (samples == 0) throw InvalidArgument("sample count must be at least 1");
  if (format != "idx" && format != "cifar") throw InvalidArgument("unknown dataset format \"" + format + "\"");
  if (workers == 0) throw InvalidArgument("worker count must be at least 1");
  attack.validate();
  for (const auto& d : defenses) d.validate();
}

void apply_config_file(ExperimentSpec& spec, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file not found: " + path.string());
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [name, section] : tree) {
    if (name == "data") {
      check_keys(section, name, {"path", "format"});
      if (section.count("path")) spec.dataset = section.get<std::string>("path");
      if (section.count("format")) spec.format = section.get<std::string>("format");
    } else if (name == "model") {
      check_keys(section, name, {"arch", "weights", "substitutes"});
      if (section.count("arch")) spec.model = section.get<std::string>("arch");
      if (section.count("weights")) spec.weights = to_paths(section.get<std::string>("weights"));
      if (section.count("substitutes")) spec.substitutes = to_paths(section.get<std::string>("substitutes"));
    } else if (name == "train") {
      check_keys(section, name, {"epochs", "learning_rate", "batch_size", "seed"});
      if (section.count("epochs")) spec.train.epochs = get<int>(section, name, "epochs");
      if (section.count("learning_rate")) spec.train.learning_rate = get<Real>(section, name, "learning_rate");
      if (section.count("batch_size")) spec.train.batch_size = get<std::size_t>(section, name, "batch_size");
      if (section.count("seed")) spec.train.seed = get<std::uint64_t>(section, name, "seed");
    } else if (name == "attack") {
      check_keys(section, name,
                 {"names", "epsilon", "alpha", "iterations", "mu", "kappa", "c2", "target", "finefool_step",
                  "cw_steps", "cw_learning_rate", "deepfool_overshoot", "deepfool_max_iterations"});
      auto& a = spec.attack;
      if (section.count("names")) {
        spec.attacks.clear();
        for (const auto& n : split_list(section.get<std::string>("names"))) spec.attacks.push_back(parse_attack(n));
      }
      if (section.count("epsilon")) a.epsilon = get<Real>(section, name, "epsilon");
      if (section.count("alpha")) a.alpha = get<Real>(section, name, "alpha");
      if (section.count("iterations")) a.iterations = get<int>(section, name, "iterations");
      if (section.count("mu")) a.mu = get<Real>(section, name, "mu");
      if (section.count("kappa")) a.kappa = get<Real>(section, name, "kappa");
      if (section.count("c2")) a.c2 = get<Real>(section, name, "c2");
      if (section.count("target")) a.target = get<int>(section, name, "target");
      if (section.count("finefool_step")) a.finefool_step = parse_step_norm(section.get<std::string>("finefool_step"));
      if (section.count("cw_steps")) a.cw_steps = get<int>(section, name, "cw_steps");
      if (section.count("cw_learning_rate")) a.cw_learning_rate = get<Real>(section, name, "cw_learning_rate");
      if (section.count("deepfool_overshoot")) a.deepfool_overshoot = get<Real>(section, name, "deepfool_overshoot");
      if (section.count("deepfool_max_iterations")) {
        a.deepfool_max_iterations = get<int>(section, name, "deepfool_max_iterations");
      }
    } else if (name == "defense") {
      check_keys(section, name, {"names", "sigma", "kernel_size", "transform_scale", "quantization_levels"});
      if (section.count("names")) {
        spec.defenses.clear();
        for (const auto& n : split_list(section.get<std::string>("names"))) {
          DefenseConfig d;
          d.kind = parse_defense(n);
          if (d.kind != DefenseKind::kNone) spec.defenses.push_back(d);
        }
      }
      for (auto& d : spec.defenses) {
        if (section.count("sigma")) d.sigma = get<double>(section, name, "sigma");
        if (section.count("kernel_size")) d.kernel_size = get<int>(section, name, "kernel_size");
        if (section.count("transform_scale")) d.transform_scale = get<double>(section, name, "transform_scale");
        if (section.count("quantization_levels")) {
          d.quantization_levels = get<int>(section, name, "quantization_levels");
        }
      }
    } else if (name == "run") {
      check_keys(section, name, {"samples", "seed", "out", "workers", "artifacts", "attention_overlay"});
      if (section.count("samples")) spec.samples = get<std::size_t>(section, name, "samples");
      if (section.count("seed")) spec.seed = get<std::uint64_t>(section, name, "seed");
      if (section.count("out")) spec.out = section.get<std::string>("out");
      if (section.count("workers")) spec.workers = get<std::size_t>(section, name, "workers");
      if (section.count("artifacts")) spec.artifacts = get<std::size_t>(section, name, "artifacts");
      if (section.count("attention_overlay")) spec.attention_overlay = get_bool(section, name, "attention_overlay");
    } else {
      throw InvalidArgument("config: unknown section [" + name + "]");
    }
  }
  spec.attack.seed = spec.seed;
}

namespace {

// Shortest text that reads back to the same value, so 0.1f prints as 0.1.
template <typename T>
std::string shortest(T v) {
  return fmt::format("{}", v);
}

}  // namespace

std::string spec_to_ini(const ExperimentSpec& spec) {
  pt::ptree t;
  t.put("data.path", spec.dataset.string());
  t.put("data.format", spec.format);
  t.put("model.arch", spec.model);
  t.put("model.weights", join_paths(spec.weights));
  t.put("model.substitutes", join_paths(spec.substitutes));
  t.put("train.epochs", spec.train.epochs);
  t.put("train.learning_rate", shortest(spec.train.learning_rate));
  t.put("train.batch_size", spec.train.batch_size);
  t.put("train.seed", spec.train.seed);
  std::vector<std::string> names;
  for (auto k : spec.attacks) names.push_back(attack_name(k));
  const auto& a = spec.attack;
  t.put("attack.names", boost::join(names, ","));
  t.put("attack.epsilon", shortest(a.epsilon));
  t.put("attack.alpha", shortest(a.step_size()));
  t.put("attack.iterations", a.iterations);
  t.put("attack.mu", shortest(a.mu));
  t.put("attack.kappa", shortest(a.kappa));
  t.put("attack.c2", shortest(a.c2));
  if (a.target) t.put("attack.target", *a.target);
  t.put("attack.finefool_step", step_norm_name(a.finefool_step));
  t.put("attack.cw_steps", a.cw_steps);
  t.put("attack.cw_learning_rate", shortest(a.cw_learning_rate));
  t.put("attack.deepfool_overshoot", shortest(a.deepfool_overshoot));
  t.put("attack.deepfool_max_iterations", a.deepfool_max_iterations);
  std::vector<std::string> dnames;
  for (const auto& d : spec.defenses) dnames.push_back(defense_name(d.kind));
  t.put("defense.names", boost::join(dnames, ","));
  if (!spec.defenses.empty()) {
    const auto& d = spec.defenses.front();
    t.put("defense.sigma", shortest(d.sigma));
    t.put("defense.kernel_size", d.kernel_size);
    t.put("defense.transform_scale", shortest(d.transform_scale));
    t.put("defense.quantization_levels", d.quantization_levels);
  }
  t.put("run.samples", spec.samples);
  t.put("run.seed", spec.seed);
  t.put("run.out", spec.out.string());
  t.put("run.artifacts", spec.artifacts);
  t.put("run.attention_overlay", spec.attention_overlay);
  std::ostringstream os;
  pt::write_ini(os, t);
  return os.str();
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
