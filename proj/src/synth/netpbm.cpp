#include "devialab/synth/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "devialab/error.hpp"

namespace devialab::synth {
namespace {

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_netpbm(const std::filesystem::path& path, const char* magic, const diff::Tensor& t,
                  std::size_t channels) {
  if (t.rank() != 3 || t.dim(0) != channels) {
    throw ShapeError(std::string(magic) + " writer expects " + std::to_string(channels) +
                     " x H x W, got " + diff::shape_str(t.shape()));
  }
  const std::size_t h = t.dim(1), w = t.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << magic << '\n' << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> bytes(channels * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c) bytes[(y * w + x) * channels + c] = to_byte(t.at(c, y, x));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// Reads one header token, skipping whitespace and '#' comments.
std::string next_token(const std::vector<unsigned char>& buf, std::size_t& pos, const std::string& name) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < buf.size() && !std::isspace(buf[pos]) && buf[pos] != '#') tok.push_back(static_cast<char>(buf[pos++]));
  if (tok.empty()) throw IoError(name + ": truncated header");
  return tok;
}

diff::Tensor read_netpbm(const std::filesystem::path& path, const char* magic, std::size_t channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  std::size_t pos = 0;
  if (next_token(buf, pos, name) != magic) throw IoError(name + ": expected " + magic + " header");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token(buf, pos, name));
    h = std::stoul(next_token(buf, pos, name));
    maxval = std::stoul(next_token(buf, pos, name));
  } catch (const std::logic_error&) {
    throw IoError(name + ": malformed header");
  }
  if (maxval != 255) throw IoError(name + ": only maxval 255 is supported");
  ++pos;  // single whitespace byte before the raster
  const std::size_t n = channels * h * w;
  if (w == 0 || h == 0 || buf.size() < pos + n) throw IoError(name + ": truncated raster");
  diff::Tensor t(diff::Shape{channels, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        t.at(c, y, x) = static_cast<double>(buf[pos + (y * w + x) * channels + c]) / 255.0;
  return t;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const diff::Tensor& image) {
  write_netpbm(path, "P6", image, 3);
}
diff::Tensor read_ppm(const std::filesystem::path& path) { return read_netpbm(path, "P6", 3); }

void write_pgm(const std::filesystem::path& path, const diff::Tensor& map) {
  write_netpbm(path, "P5", map, 1);
}
diff::Tensor read_pgm(const std::filesystem::path& path) { return read_netpbm(path, "P5", 1); }

diff::Tensor quantize8(const diff::Tensor& t) {
  diff::Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<double>(to_byte(t[i])) / 255.0;
  return out;
}

}  // namespace devialab::synth
