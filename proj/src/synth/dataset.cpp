#include "devialab/synth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "devialab/error.hpp"
#include "devialab/rng.hpp"
#include "devialab/synth/netpbm.hpp"
#include "devialab/synth/perlin.hpp"

namespace devialab::synth {
namespace {

using diff::Shape;
using diff::Tensor;
using nlohmann::json;

// Independent seed streams per record role.
enum Stream : std::uint64_t {
  kStreamNominal = 1,
  kStreamContaminant = 2,
  kStreamPseudo = 3,
  kStreamFewshot = 4,
  kStreamTestNormal = 5,
  kStreamTestAnomalous = 6,
  kStreamSelection = 7,
};

std::string record_id(const char* prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05zu", prefix, index);
  return buf;
}

}  // namespace

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kNominal: return "nominal";
    case Provenance::kPseudo: return "pseudo";
    case Provenance::kFewshot: return "fewshot";
    case Provenance::kContaminant: return "contaminant";
    case Provenance::kTestNormal: return "test_normal";
    case Provenance::kTestAnomalous: return "test_anomalous";
  }
  return "unknown";
}

Provenance parse_provenance(std::string_view name) {
  for (auto p : {Provenance::kNominal, Provenance::kPseudo, Provenance::kFewshot,
                 Provenance::kContaminant, Provenance::kTestNormal, Provenance::kTestAnomalous}) {
    if (provenance_name(p) == name) return p;
  }
  throw IoError("manifest: unknown provenance '" + std::string(name) + "'");
}

std::vector<const RecordEntry*> DatasetManifest::split(Split s) const {
  std::vector<const RecordEntry*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

std::size_t contaminant_count(std::size_t nominal, double epsilon, bool* warn) {
  if (warn) *warn = false;
  const double expected = epsilon * static_cast<double>(nominal);
  if (epsilon > 0.0 && expected < 1.0) {
    if (warn) *warn = true;
    return 0;
  }
  return static_cast<std::size_t>(std::llround(expected));
}

DatasetManifest build_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir) {
  if (!(config.epsilon >= 0.0 && config.epsilon <= 0.25)) {
    throw ConfigError("dataset: epsilon " + std::to_string(config.epsilon) + " outside [0, 0.25]");
  }
  if (config.resolution < 16) throw ConfigError("dataset: resolution must be >= 16");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");

  const std::size_t res = config.resolution;
  DatasetManifest man;
  man.seed = config.seed;
  man.resolution = res;
  man.epsilon = config.epsilon;
  man.family = config.family;

  bool warn = false;
  const std::size_t n_contam = contaminant_count(config.nominal, config.epsilon, &warn);
  if (warn) {
    man.warnings.push_back("epsilon * N < 1: no contaminants generated");
  }

  // Which nominal slots hold contaminants: first n_contam of a seeded shuffle.
  std::vector<std::size_t> slots(config.nominal);
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
  Rng pick(derive_seed(config.seed, kStreamSelection, 0));
  for (std::size_t i = slots.size(); i > 1; --i) std::swap(slots[i - 1], slots[pick.index(i)]);
  std::vector<bool> is_contaminant(config.nominal, false);
  for (std::size_t i = 0; i < n_contam; ++i) is_contaminant[slots[i]] = true;

  const Tensor empty_mask(Shape{1, res, res}, 0.0);
  auto emit = [&](const std::string& id, const Tensor& image, const Tensor& mask, int label, int truth,
                  Provenance prov, Split split) {
    RecordEntry e{id, "images/" + id + ".ppm", "masks/" + id + ".pgm", label, truth, prov, split};
    write_ppm(out_dir / e.path, image);
    write_pgm(out_dir / e.mask_path, mask);
    man.records.push_back(std::move(e));
  };

  for (std::size_t i = 0; i < config.nominal; ++i) {
    const std::string id = record_id("nominal", i);
    if (is_contaminant[i]) {
      const std::uint64_t s = derive_seed(config.seed, kStreamContaminant, i);
      const Tensor base = generate_normal_texture(config.family, mix_seed(s ^ 1), res, res);
      const Defect d = apply_defect(base, config.family, mix_seed(s ^ 2));
      const Tensor noisy = add_gaussian_noise(d.image, kContaminantNoiseStd, mix_seed(s ^ 3));
      emit(id, noisy, d.mask, 0, 1, Provenance::kContaminant, Split::kTrain);
      ++man.counts.contaminant;
    } else {
      const Tensor img = generate_normal_texture(config.family, derive_seed(config.seed, kStreamNominal, i), res, res);
      emit(id, img, empty_mask, 0, 0, Provenance::kNominal, Split::kTrain);
    }
    ++man.counts.nominal;
  }

  for (std::size_t i = 0; i < config.pseudo; ++i) {
    const std::uint64_t s = derive_seed(config.seed, kStreamPseudo, i);
    Rng rng(s);
    const Tensor normal = generate_normal_texture(config.family, rng.next(), res, res);
    const Tensor source = anomaly_source_texture(config.family, rng.next(), res, res);
    const Tensor mask = perlin_anomaly_mask(rng.next(), res, res);
    const double beta = rng.uniform(0.1, 1.0);
    emit(record_id("pseudo", i), composite_pseudo_anomaly(normal, source, mask, beta), mask, 1, 1,
         Provenance::kPseudo, Split::kTrain);
    ++man.counts.pseudo;
  }

  for (std::size_t i = 0; i < config.fewshot; ++i) {
    const std::uint64_t s = derive_seed(config.seed, kStreamFewshot, i);
    const Tensor base = generate_normal_texture(config.family, mix_seed(s ^ 1), res, res);
    const Defect d = apply_defect(base, config.family, mix_seed(s ^ 2));
    emit(record_id("fewshot", i), d.image, d.mask, 1, 1, Provenance::kFewshot, Split::kTrain);
    ++man.counts.fewshot;
  }

  for (std::size_t i = 0; i < config.test_normal; ++i) {
    const Tensor img =
        generate_normal_texture(config.family, derive_seed(config.seed, kStreamTestNormal, i), res, res);
    emit(record_id("test_normal", i), img, empty_mask, 0, 0, Provenance::kTestNormal, Split::kTest);
    ++man.counts.test_normal;
  }

  for (std::size_t i = 0; i < config.test_anomalous; ++i) {
    const std::uint64_t s = derive_seed(config.seed, kStreamTestAnomalous, i);
    const Tensor base = generate_normal_texture(config.family, mix_seed(s ^ 1), res, res);
    const Defect d = apply_defect(base, config.family, mix_seed(s ^ 2));
    emit(record_id("test_anomalous", i), d.image, d.mask, 1, 1, Provenance::kTestAnomalous, Split::kTest);
    ++man.counts.test_anomalous;
  }

  write_manifest(man, out_dir / "manifest.json");
  return man;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  json j;
  j["seed"] = m.seed;
  j["resolution"] = m.resolution;
  j["epsilon"] = m.epsilon;
  j["texture_family"] = family_name(m.family);
  j["counts"] = {{"nominal", m.counts.nominal},         {"pseudo", m.counts.pseudo},
                 {"fewshot", m.counts.fewshot},         {"contaminant", m.counts.contaminant},
                 {"test_normal", m.counts.test_normal}, {"test_anomalous", m.counts.test_anomalous}};
  j["warnings"] = m.warnings;
  json recs = json::array();
  for (const auto& r : m.records) {
    recs.push_back({{"id", r.id},
                    {"path", r.path},
                    {"mask_path", r.mask_path},
                    {"label", r.label},
                    {"truth", r.truth},
                    {"provenance", provenance_name(r.provenance)},
                    {"split", r.split == Split::kTrain ? "train" : "test"}});
  }
  j["records"] = std::move(recs);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest m;
  try {
    const json j = json::parse(in);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.resolution = j.at("resolution").get<std::size_t>();
    m.epsilon = j.at("epsilon").get<double>();
    m.family = parse_family(j.at("texture_family").get<std::string>());
    const json& c = j.at("counts");
    m.counts = {c.at("nominal").get<std::size_t>(),     c.at("pseudo").get<std::size_t>(),
                c.at("fewshot").get<std::size_t>(),     c.at("contaminant").get<std::size_t>(),
                c.at("test_normal").get<std::size_t>(), c.at("test_anomalous").get<std::size_t>()};
    m.warnings = j.value("warnings", std::vector<std::string>{});
    for (const json& r : j.at("records")) {
      const std::string split = r.at("split").get<std::string>();
      if (split != "train" && split != "test") throw IoError("manifest: bad split '" + split + "'");
      m.records.push_back({r.at("id").get<std::string>(), r.at("path").get<std::string>(),
                           r.at("mask_path").get<std::string>(), r.at("label").get<int>(),
                           r.at("truth").get<int>(),
                           parse_provenance(r.at("provenance").get<std::string>()),
                           split == "train" ? Split::kTrain : Split::kTest});
    }
  } catch (const json::exception& e) {
    throw IoError("manifest " + path.string() + ": " + e.what());
  }
  return m;
}

SampleRecord load_sample(const std::filesystem::path& data_dir, const RecordEntry& entry) {
  SampleRecord s{read_ppm(data_dir / entry.path), read_pgm(data_dir / entry.mask_path), entry.label,
                 entry.truth, entry.provenance};
  if (s.image.dim(1) != s.mask.dim(1) || s.image.dim(2) != s.mask.dim(2)) {
    throw ShapeError("record " + entry.id + ": image and mask sizes differ");
  }
  return s;
}

}  // namespace devialab::synth
