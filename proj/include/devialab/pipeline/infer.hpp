#pragma once

#include <optional>

#include "devialab/fusion/cues.hpp"
#include "devialab/localize/attribution.hpp"
#include "devialab/model/network.hpp"
#include "devialab/pipeline/config.hpp"

namespace devialab::pipeline {

// Raw cues from a single recording-free forward pass.
fusion::RawCues raw_cues(const model::ModelState& state, const diff::Tensor& image, double rho);

struct Inference {
  fusion::CueScores scores;
  std::optional<localize::Localization> localization;
};

// Scores one image and, on request, builds its localization map. Throws
// ShapeError when the image size differs from `expected_resolution`.
Inference infer(const model::ModelState& state, const fusion::CueCalibration& calibration, const RunConfig& config,
                const diff::Tensor& image, std::size_t expected_resolution, bool with_localization);

}  // namespace devialab::pipeline
