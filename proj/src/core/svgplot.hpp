#pragma once

#include "core/dataset.hpp"
#include "core/pipeline.hpp"

#include <string>

namespace octcast::plot {

/// Vector rendering of one forecast: last-observation hand/object boxes, the
/// K sampled trajectories (left green, right red) and the affordance heatmap
/// overlay. Deterministic text output.
std::string render_forecast_svg(const dataset::TrainingSample& sample,
                                const pipe::ForecastResult& forecast);

}  // namespace octcast::plot
