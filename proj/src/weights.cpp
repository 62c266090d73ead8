#include "advkit/weights.hpp"

#include <fstream>

#include "advkit/binary_io.hpp"
#include "advkit/tensor_io.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

namespace {

void put_string(std::ostream& out, const std::string& s) {
  binio::put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const std::uint32_t n = binio::get_u32(in);
  if (n > 4096) throw CorruptFile("weights: implausible string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw CorruptFile("weights: unexpected end of file");
  return s;
}

struct StoredWeights {
  Architecture arch;
  std::vector<NamedTensor> tensors;
};

StoredWeights read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  binio::expect_magic(in, "ADVW", "weights");
  const std::uint32_t version = binio::get_u32(in);
  if (version != kWeightFormatVersion) {
    throw CorruptFile("weights: unsupported format version " + std::to_string(version));
  }
  StoredWeights w;
  const std::string arch_name = get_string(in);
  ImageShape input;
  input.channels = binio::get_u32(in);
  input.height = binio::get_u32(in);
  input.width = binio::get_u32(in);
  const std::uint32_t classes = binio::get_u32(in);
  const auto tap = static_cast<std::int32_t>(binio::get_u32(in));
  w.arch = arch_name == "linear" ? make_linear_architecture(input, classes)
                                 : make_architecture(arch_name, input, classes);
  if (tap < 0) {
    w.arch.feature_tap.reset();
  } else {
    w.arch.feature_tap = static_cast<std::size_t>(tap);
  }
  const std::uint32_t count = binio::get_u32(in);
  if (count > 1024) throw CorruptFile("weights: implausible tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in);
    Tensor t = read_tensor(in);
    w.tensors.push_back({std::move(name), std::move(t)});
  }
  return w;
}

void assign(Model& model, const std::vector<NamedTensor>& stored) {
  auto& params = model.parameters();
  if (stored.size() != params.size()) {
    throw InvalidShape("weights hold " + std::to_string(stored.size()) + " tensors, model has " +
                       std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (stored[i].name != params[i].name || stored[i].value.shape() != params[i].value.shape()) {
      throw InvalidShape("weights tensor " + stored[i].name + " " + shape_str(stored[i].value.shape()) +
                         " does not fit parameter " + params[i].name + " " + shape_str(params[i].value.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = stored[i].value.clone();
}

}  // namespace

void save_weights(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const Architecture& a = model.architecture();
  out.write("ADVW", 4);
  binio::put_u32(out, kWeightFormatVersion);
  put_string(out, a.name);
  binio::put_u32(out, static_cast<std::uint32_t>(a.input.channels));
  binio::put_u32(out, static_cast<std::uint32_t>(a.input.height));
  binio::put_u32(out, static_cast<std::uint32_t>(a.input.width));
  binio::put_u32(out, static_cast<std::uint32_t>(a.num_classes));
  binio::put_u32(out, a.feature_tap ? static_cast<std::uint32_t>(*a.feature_tap) : 0xFFFFFFFFu);
  binio::put_u32(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    put_string(out, p.name);
    write_tensor(out, p.value);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Model load_weights(const std::filesystem::path& path) {
  StoredWeights w = read_file(path);
  Model m(w.arch);
  assign(m, w.tensors);
  return m;
}

void load_weights_into(Model& model, const std::filesystem::path& path) {
  StoredWeights w = read_file(path);
  assign(model, w.tensors);
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
