#include "hopelab/vaf_training.hpp"

#include "hopelab/error.hpp"

namespace hope {

VafSeries vaf_over_training(std::span<const Checkpoint> checkpoints, const ProbeBatch& batch,
                            std::optional<int> component_index, VafMode mode) {
  if (checkpoints.empty()) throw InvalidArgument("vaf_over_training needs at least one checkpoint");
  const ModelConfig& first = checkpoints.front().model;
  VafSeries out;
  for (const auto& ckpt : checkpoints) {
    if (!first.same_shape(ckpt.model) || first.position_scale != ckpt.model.position_scale) {
      throw ShapeMismatch("checkpoint at step " + std::to_string(ckpt.step) +
                          " uses a different model configuration");
    }
    const auto model = restore_model<double>(ckpt);
    const auto pattern = component_pattern(model, batch);
    const int comps = static_cast<int>(pattern.components.size());
    if (component_index && (*component_index < 0 || *component_index >= comps)) {
      throw InvalidArgument("component index out of range");
    }
    VafPoint p;
    p.step = ckpt.step;
    for (int i = 0; i < comps; ++i) {
      if (component_index && i != *component_index) continue;
      p.components.push_back(i);
      p.vaf.push_back(vaf(pattern.total.values, pattern.components[i].values, mode));
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace hope
