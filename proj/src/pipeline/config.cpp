#include "devialab/pipeline/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>

#include "devialab/error.hpp"

namespace devialab::pipeline {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!ok.count(key)) throw ConfigError("unknown key " + where + "." + key);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

// Rejects negative numbers before they wrap into unsigned fields.
void read_count(const json& obj, const char* key, std::size_t& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  }
  out = v.get<std::size_t>();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void set_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.dataset.seed = seed;
  c.model.init_seed = seed;
}

RunConfig config_from_json(const json& j) {
  reject_unknown(j, "config", {"seed", "dataset", "model", "training", "fusion", "localization"});
  RunConfig c;
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("config.seed: expected a non-negative integer");
    set_seed(c, j["seed"].get<std::uint64_t>());
  }

  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    const std::string w = "dataset";
    reject_unknown(d, w, {"seed", "resolution", "nominal", "pseudo", "fewshot", "epsilon", "texture_family",
                          "test_normal", "test_anomalous"});
    read(d, "seed", c.dataset.seed, w);
    read_count(d, "resolution", c.dataset.resolution, w);
    read_count(d, "nominal", c.dataset.nominal, w);
    read_count(d, "pseudo", c.dataset.pseudo, w);
    read_count(d, "fewshot", c.dataset.fewshot, w);
    read(d, "epsilon", c.dataset.epsilon, w);
    read_count(d, "test_normal", c.dataset.test_normal, w);
    read_count(d, "test_anomalous", c.dataset.test_anomalous, w);
    if (d.contains("texture_family")) {
      std::string fam;
      read(d, "texture_family", fam, w);
      c.dataset.family = synth::parse_family(fam);
    }
  }

  if (j.contains("model")) {
    const json& m = j["model"];
    const std::string w = "model";
    reject_unknown(m, w, {"in_channels", "widths", "head_hidden", "init_seed", "uncertainty_pool", "input_center",
                          "input_scale"});
    read_count(m, "in_channels", c.model.in_channels, w);
    read(m, "widths", c.model.widths, w);
    read_count(m, "head_hidden", c.model.head_hidden, w);
    read(m, "init_seed", c.model.init_seed, w);
    read(m, "input_center", c.model.input_center, w);
    read(m, "input_scale", c.model.input_scale, w);
    if (m.contains("uncertainty_pool")) {
      std::string pool;
      read(m, "uncertainty_pool", pool, w);
      c.model.uncertainty_pool = model::parse_pool(pool);
    }
  }

  if (j.contains("training")) {
    const json& t = j["training"];
    const std::string w = "training";
    reject_unknown(t, w, {"epochs", "batch_size", "lr", "gamma", "rho", "alpha", "lambda", "burn_in",
                          "reference_count"});
    read_count(t, "epochs", c.training.epochs, w);
    read_count(t, "batch_size", c.training.batch_size, w);
    read(t, "lr", c.training.lr, w);
    read(t, "gamma", c.training.gamma, w);
    read(t, "rho", c.training.rho, w);
    read(t, "alpha", c.training.alpha, w);
    read(t, "lambda", c.training.lambda, w);
    read_count(t, "burn_in", c.training.burn_in, w);
    read_count(t, "reference_count", c.training.reference_count, w);
  }

  if (j.contains("fusion")) {
    const json& f = j["fusion"];
    const std::string w = "fusion";
    reject_unknown(f, w, {"w_dev", "w_ent", "w_seg", "epsilon"});
    read(f, "w_dev", c.fusion.weights.dev, w);
    read(f, "w_ent", c.fusion.weights.ent, w);
    read(f, "w_seg", c.fusion.weights.seg, w);
    read(f, "epsilon", c.fusion.epsilon, w);
  }

  if (j.contains("localization")) {
    const json& l = j["localization"];
    const std::string w = "localization";
    reject_unknown(l, w, {"sigma_blur", "mask_quantile"});
    read(l, "sigma_blur", c.localization.sigma_blur, w);
    read(l, "mask_quantile", c.localization.mask_quantile, w);
  }

  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  const auto& d = c.dataset;
  require(d.resolution >= 16 && d.resolution % 8 == 0, "dataset.resolution must be a multiple of 8 and >= 16");
  require(d.epsilon >= 0.0 && d.epsilon <= 0.25, "dataset.epsilon must lie in [0, 0.25]");
  require(d.nominal + d.pseudo + d.fewshot > 0, "dataset: training split is empty");
  require(d.test_normal > 0 && d.test_anomalous > 0, "dataset: test split needs both classes");

  const auto& m = c.model;
  require(m.in_channels == 3, "model.in_channels must be 3");
  require(!m.widths.empty(), "model.widths must not be empty");
  for (std::size_t w : m.widths) require(w > 0, "model.widths entries must be positive");
  require(m.head_hidden > 0, "model.head_hidden must be positive");
  require(m.input_scale > 0.0 && std::isfinite(m.input_scale), "model.input_scale must be positive");
  require(std::isfinite(m.input_center), "model.input_center must be finite");

  const auto& t = c.training;
  require(t.epochs > 0, "training.epochs must be positive");
  require(t.batch_size > 0, "training.batch_size must be positive");
  require(t.lr > 0.0 && t.lr < 1.0, "training.lr must lie in (0, 1)");
  require(t.gamma > 0.0, "training.gamma must be positive");
  require(t.rho > 0.0 && t.rho <= 1.0, "training.rho must lie in (0, 1]");
  require(t.alpha > 0.0 && t.alpha <= 1.0, "training.alpha must lie in (0, 1]");
  require(t.lambda > 0.0, "training.lambda must be positive");
  require(t.reference_count >= 2, "training.reference_count must be >= 2");

  try {
    fusion::validate(c.fusion.weights);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("fusion: ") + e.what());
  }
  require(c.fusion.epsilon > 0.0 && c.fusion.epsilon < 1.0, "fusion.epsilon must lie in (0, 1)");
  require(c.localization.sigma_blur >= 0.0, "localization.sigma_blur must be >= 0");
  require(c.localization.mask_quantile > 0.0 && c.localization.mask_quantile <= 1.0,
          "localization.mask_quantile must lie in (0, 1]");
}

json config_to_json(const RunConfig& c) {
  const auto& d = c.dataset;
  const auto& t = c.training;
  return {
      {"seed", c.seed},
      {"dataset",
       {{"seed", d.seed},
        {"resolution", d.resolution},
        {"nominal", d.nominal},
        {"pseudo", d.pseudo},
        {"fewshot", d.fewshot},
        {"epsilon", d.epsilon},
        {"texture_family", synth::family_name(d.family)},
        {"test_normal", d.test_normal},
        {"test_anomalous", d.test_anomalous}}},
      {"model",
       {{"in_channels", c.model.in_channels},
        {"widths", c.model.widths},
        {"head_hidden", c.model.head_hidden},
        {"init_seed", c.model.init_seed},
        {"uncertainty_pool", model::pool_name(c.model.uncertainty_pool)},
        {"input_center", c.model.input_center},
        {"input_scale", c.model.input_scale}}},
      {"training",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"lr", t.lr},
        {"gamma", t.gamma},
        {"rho", t.rho},
        {"alpha", t.alpha},
        {"lambda", t.lambda},
        {"burn_in", t.burn_in},
        {"reference_count", t.reference_count}}},
      {"fusion",
       {{"w_dev", c.fusion.weights.dev},
        {"w_ent", c.fusion.weights.ent},
        {"w_seg", c.fusion.weights.seg},
        {"epsilon", c.fusion.epsilon}}},
      {"localization",
       {{"sigma_blur", c.localization.sigma_blur}, {"mask_quantile", c.localization.mask_quantile}}},
  };
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const RunConfig& c) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << config_to_json(c).dump(2) << '\n';
}

std::string config_digest(const RunConfig& c) {
  const std::string text = config_to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::optional<std::uint64_t> apply_seed_override(RunConfig& c, std::ostream* log) {
  const char* env = std::getenv("DEVIALAB_SEED");
  if (!env || !*env) return std::nullopt;
  std::uint64_t seed = 0;
  const std::string_view text(env);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("DEVIALAB_SEED must be a non-negative integer, got '" + std::string(text) + "'");
  }
  set_seed(c, seed);
  if (log) *log << "seed override from DEVIALAB_SEED: " << seed << '\n';
  return seed;
}

}  // namespace devialab::pipeline
