#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rdist {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool scatter = false;
  bool log_x = false;
};

/// Static SVG plus a `<stem>.csv` sidecar with columns series,x,y. `svg_path` should end in .svg.
void write_plot(const std::filesystem::path& svg_path, const PlotSpec& spec, const std::vector<Series>& series);

}  // namespace rdist
