#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "advkit/tensor.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
};
struct ReluLayer {};
struct MaxPoolLayer {
  std::size_t window = 2;
  std::size_t stride = 2;
};
struct FlattenLayer {};
struct DenseLayer {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
};

using Layer = std::variant<ConvLayer, ReluLayer, MaxPoolLayer, FlattenLayer, DenseLayer>;

std::string layer_name(const Layer& layer);

/// (channels, height, width) of one input image.
struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 28;
  std::size_t width = 28;

  std::size_t numel() const { return channels * height * width; }
  Shape batch(std::size_t n) const { return {n, channels, height, width}; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

struct Architecture {
  std::string name;
  ImageShape input;
  std::size_t num_classes = 10;
  std::vector<Layer> layers;
  /// Layer whose output is the shallow feature map; absent for models
  /// without spatial layers.
  std::optional<std::size_t> feature_tap;
};

/// Reference configurations: "small-a" (2 conv blocks), "small-b" (3 conv
/// blocks), "small-c" (4 conv layers plus a hidden dense layer). Each accepts
/// any input whose spatial size survives its pooling; the tap defaults to the
/// first conv+relu block.
Architecture make_architecture(const std::string& name, ImageShape input, std::size_t num_classes = 10);

/// Flatten followed by one dense layer; no feature tap.
Architecture make_linear_architecture(ImageShape input, std::size_t num_classes);

std::vector<std::string> architecture_names();

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct ForwardResult {
  Tensor logits;       // [N,K]
  Tensor feature_map;  // [N,c,h,w]; empty when the model has no tap
};

class Model {
 public:
  /// Validates the layer chain and allocates zero-valued parameters.
  explicit Model(Architecture arch);

  const Architecture& architecture() const { return arch_; }
  std::size_t num_classes() const { return arch_.num_classes; }
  const ImageShape& input_shape() const { return arch_.input; }
  std::optional<std::size_t> feature_tap() const { return arch_.feature_tap; }

  /// Per-layer output shape for a batch of one.
  const std::vector<Shape>& layer_output_shapes() const { return output_shapes_; }

  ForwardResult forward(const Tensor& x) const;
  /// Outputs of every layer, in order; the last entry equals the logits.
  std::vector<Tensor> forward_all(const Tensor& x) const;
  /// Output of layer `last_layer` computed by running only layers [0, last_layer].
  Tensor forward_until(const Tensor& x, std::size_t last_layer) const;

  /// Argmax class per batch row.
  std::vector<int> predict(const Tensor& x) const;

  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  const Tensor& parameter(const std::string& name) const;

  /// He-uniform weights and zero biases from a seeded generator.
  void initialize(std::uint64_t seed);
  void set_requires_grad(bool on);
  Model clone() const;

 private:
  Tensor run_layer(std::size_t index, const Tensor& x) const;
  void check_input(const Tensor& x) const;

  Architecture arch_;
  std::vector<NamedTensor> params_;
  // index into params_ of the weight of each parametric layer (-1 otherwise)
  std::vector<long> param_index_;
  std::vector<Shape> output_shapes_;
};

/// Argmax over a logits row.
int argmax(std::span<const Real> row);

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
