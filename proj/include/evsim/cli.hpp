#pragma once

#include <string>
#include <vector>

#include "evsim/orchestrator.hpp"

namespace evsim {

/// Exit codes: 0 ok, 1 usage, 2 configuration, 3 runtime.
int run_cli(int argc, char** argv);

/// Values swept by `calibrate` for learning_rate, discount_factor or exploration_rate.
const std::vector<double>& calibration_grid(const std::string& param);

/// Copy of `base` with one hyperparameter replaced.
CampaignConfig with_parameter(CampaignConfig base, const std::string& param, double value);

/// Per-episode training reward averaged over groups.
std::vector<double> reward_curve(const std::vector<EpisodeResult>& results);

/// Population variance of consecutive differences of a curve.
double delta_variance(const std::vector<double>& curve);

}  // namespace evsim
