#include "devialab/pipeline/infer.hpp"

#include <string>

#include "devialab/error.hpp"

namespace devialab::pipeline {

fusion::RawCues raw_cues(const model::ModelState& state, const diff::Tensor& image, double rho) {
  diff::Tape tape(false);
  auto params = model::bind_params(tape, state, false);
  auto out = model::forward(tape.constant(image), params, rho);
  return {out.s_dev.value().item(), fusion::entropy_score(out.p.value().item()),
          fusion::seg_topk_score(out.seg_map.value(), rho)};
}

Inference infer(const model::ModelState& state, const fusion::CueCalibration& calibration, const RunConfig& config,
                const diff::Tensor& image, std::size_t expected_resolution, bool with_localization) {
  if (image.rank() != 3 || image.dim(1) != expected_resolution || image.dim(2) != expected_resolution) {
    throw ShapeError("infer: image " + diff::shape_str(image.shape()) + " does not match the trained resolution " +
                     std::to_string(expected_resolution));
  }
  const double rho = config.training.rho;
  Inference r{fusion::score_cues(raw_cues(state, image, rho), calibration, config.fusion.weights), std::nullopt};
  if (with_localization) r.localization = localize::localize(image, state, rho, config.localization.sigma_blur);
  return r;
}

}  // namespace devialab::pipeline
