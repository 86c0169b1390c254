#include "core/svgplot.hpp"

#include <cstdio>
#include <sstream>

namespace octcast::plot {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 360.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

void rect(std::ostringstream& out, double x, double y, double w, double h,
          const std::string& style) {
  out << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
      << "\" height=\"" << num(h) << "\" " << style << "/>\n";
}

}  // namespace

std::string render_forecast_svg(const dataset::TrainingSample& sample,
                                const pipe::ForecastResult& forecast) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << static_cast<int>(kWidth)
      << "\" height=\"" << static_cast<int>(kHeight) << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  rect(out, 0, 0, kWidth, kHeight, "fill=\"#101418\"");

  // affordance heatmap underlay
  const auto& grid = forecast.heatmap.grid;
  if (grid.size() > 0) {
    const double peak = grid.maxCoeff();
    const double cw = kWidth / grid.cols();
    const double ch = kHeight / grid.rows();
    for (Eigen::Index r = 0; r < grid.rows(); ++r) {
      for (Eigen::Index c = 0; c < grid.cols(); ++c) {
        const double a = peak > 0 ? grid(r, c) / peak : 0.0;
        if (a < 0.02) continue;
        rect(out, c * cw, r * ch, cw, ch,
             "fill=\"#ff9a3c\" fill-opacity=\"" + num(0.65 * a) + "\"");
      }
    }
  }

  // last-observation detections
  const int t_last = sample.T - 1;
  for (int side = 0; side < 2; ++side) {
    if (!sample.valid_hand[side][static_cast<size_t>(t_last)]) continue;
    const Eigen::Vector4d& b = sample.box_hand[side][static_cast<size_t>(t_last)];
    rect(out, b(0) * kWidth, b(1) * kHeight, (b(2) - b(0)) * kWidth, (b(3) - b(1)) * kHeight,
         std::string("fill=\"none\" stroke=\"") + (side == 0 ? "#58e07f" : "#ff5a5a") +
             "\" stroke-width=\"1.5\"");
  }
  for (int slot = 0; slot < 2; ++slot) {
    if (!sample.valid_object[slot][static_cast<size_t>(t_last)]) continue;
    const Eigen::Vector4d& b = sample.box_object[slot][static_cast<size_t>(t_last)];
    rect(out, b(0) * kWidth, b(1) * kHeight, (b(2) - b(0)) * kWidth, (b(3) - b(1)) * kHeight,
         "fill=\"none\" stroke=\"#67b7ff\" stroke-width=\"1.5\" stroke-dasharray=\"4 2\"");
  }

  // sampled trajectories, left hand green and right hand red
  for (const auto& traj : forecast.trajectories) {
    for (int side = 0; side < 2; ++side) {
      const auto& pts = side == 0 ? traj.left : traj.right;
      out << "<polyline fill=\"none\" stroke=\"" << (side == 0 ? "#58e07f" : "#ff5a5a")
          << "\" stroke-width=\"1\" stroke-opacity=\"0.7\" points=\"";
      for (const auto& p : pts) out << num(p.x() * kWidth) << "," << num(p.y() * kHeight) << " ";
      out << "\"/>\n";
    }
  }

  out << "</svg>\n";
  return out.str();
}

}  // namespace octcast::plot
