#include "devialab/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "devialab/error.hpp"

namespace devialab::model {
namespace {

using nlohmann::json;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  return {{"in_channels", c.in_channels},
          {"widths", c.widths},
          {"head_hidden", c.head_hidden},
          {"init_seed", c.init_seed},
          {"uncertainty_pool", pool_name(c.uncertainty_pool)},
          {"input_center", c.input_center},
          {"input_scale", c.input_scale}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.widths = j.at("widths").get<std::vector<std::size_t>>();
  c.head_hidden = j.at("head_hidden").get<std::size_t>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
  c.uncertainty_pool = parse_pool(j.value("uncertainty_pool", "global_average"));
  c.input_center = j.value("input_center", 0.0);
  c.input_scale = j.value("input_scale", 1.0);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state, const json& extra) {
  json header;
  header["architecture"] = model_config_to_json(state.config());
  json params = json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < state.params().size(); ++i) {
    const auto& t = state.params()[i];
    params.push_back({{"name", state.names()[i]}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
    offset += 8 * t.size();
  }
  header["parameters"] = std::move(params);
  header["extra"] = extra;
  const std::string text = header.dump();

  std::string blob(kCheckpointMagic, 8);
  put_u64(blob, text.size());
  blob += text;
  for (const auto& t : state.params()) {
    for (double v : t.data()) put_u64(blob, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (buf.size() < 16 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0) {
    throw IoError(name + ": not a checkpoint (bad magic)");
  }
  const std::uint64_t hlen = get_u64(buf.data() + 8);
  if (buf.size() < 16 + hlen) throw IoError(name + ": truncated header");
  json header;
  try {
    header = json::parse(buf.begin() + 16, buf.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const json::exception& e) {
    throw IoError(name + ": bad header: " + e.what());
  }
  const unsigned char* data = buf.data() + 16 + hlen;
  const std::size_t data_len = buf.size() - 16 - hlen;

  try {
    ModelConfig cfg = model_config_from_json(header.at("architecture"));
    std::vector<std::string> names;
    std::vector<diff::Tensor> params;
    for (const json& p : header.at("parameters")) {
      const auto shape = p.at("shape").get<diff::Shape>();
      const auto offset = p.at("offset").get<std::uint64_t>();
      const auto count = p.at("count").get<std::uint64_t>();
      if (count != diff::shape_size(shape) || offset + 8 * count > data_len) {
        throw IoError(name + ": parameter block out of range");
      }
      diff::Tensor t(shape);
      for (std::size_t i = 0; i < count; ++i) t[i] = std::bit_cast<double>(get_u64(data + offset + 8 * i));
      names.push_back(p.at("name").get<std::string>());
      params.push_back(std::move(t));
    }
    return {ModelState::from_parts(cfg, std::move(names), std::move(params)),
            header.value("extra", json::object())};
  } catch (const json::exception& e) {
    throw IoError(name + ": bad header: " + e.what());
  }
}

}  // namespace devialab::model
