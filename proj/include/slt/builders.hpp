#pragma once

#include <memory>

#include "slt/config.hpp"
#include "slt/data.hpp"
#include "slt/models.hpp"

namespace slt {

// Input channel count implied by the dataset kind.
int64_t data_channels(const ExperimentConfig& c);

// Constructs the configured architecture; parameter init is drawn from the
// stream in declaration order.
std::unique_ptr<Model> build_model(const ExperimentConfig& c, RngStream& init);

// Generates or loads the requested split; synthetic splits use seeds derived
// from (run.seed, "data.<split>") so train and test are disjoint.
Dataset build_dataset(const ExperimentConfig& c, const std::string& split);

}  // namespace slt
