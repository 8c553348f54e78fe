#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hopelab/decomp.hpp"
#include "hopelab/probe.hpp"
#include "hopelab/train.hpp"

namespace hope {

struct VafPoint {
  std::int64_t step = 0;
  std::vector<int> components;    // component indices reported
  std::vector<double> vaf;        // parallel to `components`
};

using VafSeries = std::vector<VafPoint>;

/// For every checkpoint (in the given order): mean logit curve and component
/// curves on `batch`, then VAF of each component curve against the total.
/// Throws ShapeMismatch if checkpoints disagree on the model configuration
/// and DegenerateInput if a total curve is identically zero.
VafSeries vaf_over_training(std::span<const Checkpoint> checkpoints, const ProbeBatch& batch,
                            std::optional<int> component_index = std::nullopt,
                            VafMode mode = VafMode::Squared);

}  // namespace hope
