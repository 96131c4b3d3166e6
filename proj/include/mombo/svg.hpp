#pragma once

#include <string>
#include <vector>

namespace mombo {

/// Minimal native SVG line plot: axes with ticks, labelled polyline series,
/// a legend. Output is well-formed XML with LF line endings.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string x_label, std::string y_label);

  void add_series(const std::string& label, const std::vector<double>& xs,
                  const std::vector<double>& ys);
  void write(const std::string& path) const;

 private:
  std::string title_, x_label_, y_label_;
  struct Series {
    std::string label;
    std::vector<double> xs, ys;
  };
  std::vector<Series> series_;
};

}  // namespace mombo
