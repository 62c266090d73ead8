#include "advkit/netpbm.hpp"

#include <sstream>
#include <string>

#include "advkit/errors.hpp"
#include "advkit/fileio.hpp"

namespace advkit {

void write_netpbm(const Image8& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3) throw InvalidArgument("netpbm supports 1 or 3 channels");
  if (img.pixels.size() != img.width * img.height * img.channels) throw InvalidShape("image buffer size mismatch");
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  write_file_atomic(path, out);
}

Image8 read_netpbm(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::istringstream in(bytes);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || (magic != "P5" && magic != "P6") || maxval != 255) throw CorruptFile(path.string() + ": not an 8-bit P5/P6 file");
  in.get();
  Image8 img(w, h, magic == "P5" ? 1 : 3);
  const auto offset = static_cast<std::size_t>(in.tellg());
  if (bytes.size() - offset != img.pixels.size()) throw CorruptFile(path.string() + ": truncated pixel data");
  std::copy(bytes.begin() + static_cast<long>(offset), bytes.end(), img.pixels.begin());
  return img;
}

}  // namespace advkit
