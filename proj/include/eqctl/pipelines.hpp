#pragma once

#include <string>

#include "eqctl/config.hpp"
#include "eqctl/merton.hpp"

namespace eqctl {

// Registry parameters of c.spec overridden by any market/utility/discount/recursive keys.
merton::Setup setup_from_config(const ExperimentConfig& c);

// Runs c.pipeline, writing report.txt and CSVs under out_dir.
// Returns 0 when every verdict passes, 1 otherwise.
int run_pipeline(const ExperimentConfig& c, const std::string& out_dir);

}  // namespace eqctl
