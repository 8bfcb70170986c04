//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/plots.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace flexiflow {

namespace {
  constexpr double kWidth = 640, kHeight = 400;
  constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;
  constexpr const char *kPalette[] = { "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                       "#9467bd", "#8c564b" };

  std::string escape(const std::string &s) {
    std::string out;
    for (char c: s) {
      switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
      }
    }
    return out;
  }

  std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(4) << v;
    return os.str();
  }

  struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const {
      return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight);
    }
    double py(double y) const {
      return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
    }
  };

  void open_svg(std::ostringstream &os, const std::string &title) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
       << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
       << escape(title) << "</text>\n";
  }

  void axes(std::ostringstream &os, const Frame &f, const std::string &x_label,
            const std::string &y_label, bool x_ticks) {
    const double l = f.px(f.x0), r = f.px(f.x1), b = f.py(f.y0), t = f.py(f.y1);
    os << "<path d=\"M" << l << ' ' << t << " L" << l << ' ' << b << " L" << r << ' ' << b
       << "\" stroke=\"black\" fill=\"none\"/>\n";
    for (int k = 0; k <= 5; ++k) {
      const double yv = f.y0 + (f.y1 - f.y0) * k / 5.0;
      os << "<text x=\"" << l - 6 << "\" y=\"" << f.py(yv) + 4
         << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
      if (x_ticks) {
        const double xv = f.x0 + (f.x1 - f.x0) * k / 5.0;
        os << "<text x=\"" << f.px(xv) << "\" y=\"" << b + 16
           << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
      }
    }
    os << "<text x=\"" << (l + r) / 2 << "\" y=\"" << kHeight - 10
       << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n"
       << "<text transform=\"translate(16 " << (t + b) / 2
       << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
  }
}  // namespace

std::string line_plot_svg(const std::string &title, const std::string &x_label,
                          const std::string &y_label, const std::vector<Series> &series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = 0.0, y1 = -x0;
  for (const auto &s: series) {
    if (s.x.size() != s.y.size())
      throw std::invalid_argument("line_plot_svg: x and y lengths differ");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) {
    x0 = 0.0;
    x1 = 1.0;
  }
  if (x1 <= x0)
    x1 = x0 + 1.0;
  if (!std::isfinite(y1) || y1 <= y0)
    y1 = y0 + 1.0;
  const Frame f{ x0, x1, y0, y1 };

  std::ostringstream os;
  open_svg(os, title);
  axes(os, f, x_label, y_label, true);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto &s = series[k];
    const char *color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << f.px(s.x[i]) << ',' << f.py(s.y[i]) << ' ';
    os << "\"/>\n";
    const double ly = kTop + 18.0 * static_cast<double>(k);
    os << "<line x1=\"" << kWidth - kRight + 12 << "\" y1=\"" << ly << "\" x2=\""
       << kWidth - kRight + 32 << "\" y2=\"" << ly << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << kWidth - kRight + 38 << "\" y=\"" << ly + 4 << "\">"
       << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string bar_plot_svg(const std::string &title, const std::string &y_label,
                         const std::vector<Bar> &bars) {
  double y1 = 0.0;
  for (const auto &b: bars)
    y1 = std::max(y1, b.value);
  if (y1 <= 0.0)
    y1 = 1.0;
  const double n = std::max<double>(1.0, static_cast<double>(bars.size()));
  const Frame f{ 0.0, n, 0.0, y1 * 1.1 };

  std::ostringstream os;
  open_svg(os, title);
  axes(os, f, "", y_label, false);
  for (std::size_t k = 0; k < bars.size(); ++k) {
    const double left = f.px(static_cast<double>(k) + 0.15);
    const double right = f.px(static_cast<double>(k) + 0.85);
    const double top = f.py(bars[k].value), base = f.py(0.0);
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << right - left
       << "\" height=\"" << base - top << "\" fill=\"" << kPalette[k % std::size(kPalette)]
       << "\"/>\n"
       << "<text x=\"" << (left + right) / 2 << "\" y=\"" << base + 16
       << "\" text-anchor=\"middle\">" << escape(bars[k].label) << "</text>\n"
       << "<text x=\"" << (left + right) / 2 << "\" y=\"" << top - 4
       << "\" text-anchor=\"middle\">" << num(bars[k].value) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_text_file(const std::filesystem::path &path, const std::string &text) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out)
    throw std::runtime_error("write failed for " + path.string());
}

}  // namespace flexiflow
