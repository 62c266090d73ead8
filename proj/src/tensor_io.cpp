#include "advkit/tensor_io.hpp"

#include <fstream>

#include "advkit/binary_io.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

namespace {
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;
}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write("TNSR", 4);
  binio::put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) binio::put_u32(out, static_cast<std::uint32_t>(d));
  for (Real v : t.data()) binio::put_f32(out, static_cast<float>(v));
  if (!out) throw IoError("failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
  binio::expect_magic(in, "TNSR", "tensor");
  const std::uint32_t rank = binio::get_u32(in);
  if (rank == 0 || rank > kMaxRank) throw CorruptFile("tensor: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t total = 1;
  for (auto& d : shape) {
    d = binio::get_u32(in);
    total *= d;
    if (total > kMaxElements) throw CorruptFile("tensor: implausible element count");
  }
  std::vector<Real> values(total);
  for (auto& v : values) v = static_cast<Real>(binio::get_f32(in));
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
