//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_PLOTS_H_
#define FLEXIFLOW_PLOTS_H_

#include <filesystem>
#include <string>
#include <vector>

namespace flexiflow {

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct Bar {
  std::string label;
  double value = 0.0;
};

/// Static SVG line chart with axes, ticks and a legend.
std::string line_plot_svg(const std::string &title, const std::string &x_label,
                          const std::string &y_label, const std::vector<Series> &series);

/// Static SVG bar chart.
std::string bar_plot_svg(const std::string &title, const std::string &y_label,
                         const std::vector<Bar> &bars);

void write_text_file(const std::filesystem::path &path, const std::string &text);

}  // namespace flexiflow

#endif  // FLEXIFLOW_PLOTS_H_
