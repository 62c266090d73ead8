#include "advkit/model.hpp"

#include <cmath>
#include <random>

#include "advkit/ops.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

ConvLayer conv(std::size_t in, std::size_t out) { return ConvLayer{in, out, 3, 1, 1}; }

std::size_t flat_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 1; i < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

std::string layer_name(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const ConvLayer& c) {
                          return "conv" + std::to_string(c.kernel) + "x" + std::to_string(c.kernel) + "(" +
                                 std::to_string(c.in_channels) + "->" + std::to_string(c.out_channels) + ")";
                        },
                        [](const ReluLayer&) { return std::string("relu"); },
                        [](const MaxPoolLayer& p) { return "maxpool" + std::to_string(p.window); },
                        [](const FlattenLayer&) { return std::string("flatten"); },
                        [](const DenseLayer& d) {
                          return "dense(" + std::to_string(d.in_features) + "->" +
                                 std::to_string(d.out_features) + ")";
                        },
                    },
                    layer);
}

std::vector<std::string> architecture_names() { return {"small-a", "small-b", "small-c"}; }

Architecture make_architecture(const std::string& name, ImageShape input, std::size_t num_classes) {
  Architecture a;
  a.name = name;
  a.input = input;
  a.num_classes = num_classes;
  const std::size_t c = input.channels;
  auto& L = a.layers;
  std::size_t h = input.height, w = input.width;
  auto pool = [&] {
    L.push_back(MaxPoolLayer{});
    h /= 2;
    w /= 2;
  };
  if (name == "small-a") {
    L = {conv(c, 8), ReluLayer{}};
    pool();
    L.push_back(conv(8, 16));
    L.push_back(ReluLayer{});
    pool();
    L.push_back(FlattenLayer{});
    L.push_back(DenseLayer{16 * h * w, num_classes});
  } else if (name == "small-b") {
    L = {conv(c, 16), ReluLayer{}};
    pool();
    L.push_back(conv(16, 32));
    L.push_back(ReluLayer{});
    pool();
    L.push_back(conv(32, 32));
    L.push_back(ReluLayer{});
    pool();
    L.push_back(FlattenLayer{});
    L.push_back(DenseLayer{32 * h * w, num_classes});
  } else if (name == "small-c") {
    L = {conv(c, 16), ReluLayer{}, conv(16, 16), ReluLayer{}};
    pool();
    L.push_back(conv(16, 32));
    L.push_back(ReluLayer{});
    L.push_back(conv(32, 32));
    L.push_back(ReluLayer{});
    pool();
    L.push_back(FlattenLayer{});
    L.push_back(DenseLayer{32 * h * w, 64});
    L.push_back(ReluLayer{});
    L.push_back(DenseLayer{64, num_classes});
  } else {
    throw InvalidArgument("unknown architecture \"" + name + "\"");
  }
  if (h == 0 || w == 0) throw InvalidShape("input " + std::to_string(input.height) + "x" +
                                           std::to_string(input.width) + " too small for " + name);
  a.feature_tap = 1;
  return a;
}

Architecture make_linear_architecture(ImageShape input, std::size_t num_classes) {
  Architecture a;
  a.name = "linear";
  a.input = input;
  a.num_classes = num_classes;
  a.layers = {FlattenLayer{}, DenseLayer{input.numel(), num_classes}};
  return a;
}

Model::Model(Architecture arch) : arch_(std::move(arch)) {
  if (arch_.layers.empty()) throw InvalidArgument("model needs at least one layer");
  if (arch_.num_classes < 2) throw InvalidArgument("model needs at least two classes");
  Shape s = arch_.input.batch(1);
  param_index_.assign(arch_.layers.size(), -1);
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i);
    std::visit(Overloaded{
                   [&](const ConvLayer& c) {
                     if (s.size() != 4 || s[1] != c.in_channels) {
                       throw InvalidShape(prefix + ": conv expects " + std::to_string(c.in_channels) +
                                          " input channels, got " + shape_str(s));
                     }
                     if (s[2] + 2 * c.padding < c.kernel || s[3] + 2 * c.padding < c.kernel) {
                       throw InvalidShape(prefix + ": conv kernel larger than input");
                     }
                     param_index_[i] = static_cast<long>(params_.size());
                     params_.push_back({prefix + ".weight", Tensor(Shape{c.out_channels, c.in_channels, c.kernel, c.kernel})});
                     params_.push_back({prefix + ".bias", Tensor(Shape{c.out_channels})});
                     s = {1, c.out_channels, (s[2] + 2 * c.padding - c.kernel) / c.stride + 1,
                          (s[3] + 2 * c.padding - c.kernel) / c.stride + 1};
                   },
                   [&](const ReluLayer&) {},
                   [&](const MaxPoolLayer& p) {
                     if (s.size() != 4 || s[2] < p.window || s[3] < p.window) {
                       throw InvalidShape(prefix + ": maxpool on " + shape_str(s));
                     }
                     s = {1, s[1], (s[2] - p.window) / p.stride + 1, (s[3] - p.window) / p.stride + 1};
                   },
                   [&](const FlattenLayer&) { s = {1, flat_size(s)}; },
                   [&](const DenseLayer& d) {
                     if (s.size() != 2 || s[1] != d.in_features) {
                       throw InvalidShape(prefix + ": dense expects " + std::to_string(d.in_features) +
                                          " features, got " + shape_str(s));
                     }
                     param_index_[i] = static_cast<long>(params_.size());
                     params_.push_back({prefix + ".weight", Tensor(Shape{d.out_features, d.in_features})});
                     params_.push_back({prefix + ".bias", Tensor(Shape{d.out_features})});
                     s = {1, d.out_features};
                   },
               },
               arch_.layers[i]);
    output_shapes_.push_back(s);
  }
  if (s != Shape{1, arch_.num_classes}) {
    throw InvalidShape("final layer produces " + shape_str(s) + ", expected " +
                       std::to_string(arch_.num_classes) + " logits");
  }
  if (arch_.feature_tap) {
    if (*arch_.feature_tap >= arch_.layers.size() || output_shapes_[*arch_.feature_tap].size() != 4) {
      throw InvalidArgument("feature tap must address a layer with spatial (c,h,w) output");
    }
  }
}

void Model::check_input(const Tensor& x) const {
  if (x.rank() != 4 || x.size(1) != arch_.input.channels || x.size(2) != arch_.input.height ||
      x.size(3) != arch_.input.width) {
    throw InvalidShape("model " + arch_.name + " expects [N," + std::to_string(arch_.input.channels) + "," +
                       std::to_string(arch_.input.height) + "," + std::to_string(arch_.input.width) +
                       "], got " + shape_str(x.shape()));
  }
}

Tensor Model::run_layer(std::size_t index, const Tensor& x) const {
  const long p = param_index_[index];
  return std::visit(Overloaded{
                        [&](const ConvLayer& c) {
                          return add_channel_bias(conv2d(x, params_[p].value, c.stride, c.padding),
                                                  params_[p + 1].value);
                        },
                        [&](const ReluLayer&) { return relu(x); },
                        [&](const MaxPoolLayer& m) { return max_pool2d(x, m.window, m.stride); },
                        [&](const FlattenLayer&) { return reshape(x, Shape{x.size(0), flat_size(x.shape())}); },
                        [&](const DenseLayer&) { return linear(x, params_[p].value, params_[p + 1].value); },
                    },
                    arch_.layers[index]);
}

std::vector<Tensor> Model::forward_all(const Tensor& x) const {
  check_input(x);
  std::vector<Tensor> outs;
  outs.reserve(arch_.layers.size());
  Tensor h = x;
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    h = run_layer(i, h);
    outs.push_back(h);
  }
  return outs;
}

ForwardResult Model::forward(const Tensor& x) const {
  check_input(x);
  ForwardResult r;
  Tensor h = x;
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    h = run_layer(i, h);
    if (arch_.feature_tap && *arch_.feature_tap == i) r.feature_map = h;
  }
  r.logits = h;
  return r;
}

Tensor Model::forward_until(const Tensor& x, std::size_t last_layer) const {
  check_input(x);
  if (last_layer >= arch_.layers.size()) throw InvalidArgument("forward_until: layer out of range");
  Tensor h = x;
  for (std::size_t i = 0; i <= last_layer; ++i) h = run_layer(i, h);
  return h;
}

int argmax(std::span<const Real> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return static_cast<int>(best);
}

std::vector<int> Model::predict(const Tensor& x) const {
  const Tensor z = forward(x).logits;
  const std::size_t n = z.size(0), k = z.size(1);
  std::vector<int> out(n);
  for (std::size_t b = 0; b < n; ++b) out[b] = argmax(z.data().subspan(b * k, k));
  return out;
}

std::vector<Tensor> Model::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

const Tensor& Model::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw InvalidArgument("no parameter named " + name);
}

void Model::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : params_) {
    auto data = p.value.mutable_data();
    if (p.value.rank() == 1) {
      std::fill(data.begin(), data.end(), Real(0));
      continue;
    }
    const std::size_t fan_in = p.value.numel() / p.value.size(0);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : data) v = static_cast<Real>(dist(rng));
  }
}

void Model::set_requires_grad(bool on) {
  for (auto& p : params_) p.value.set_requires_grad(on);
}

Model Model::clone() const {
  Model m(arch_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m.params_[i].value = params_[i].value.clone();
    m.params_[i].value.set_requires_grad(params_[i].value.requires_grad());
  }
  return m;
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
