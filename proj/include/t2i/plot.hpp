#pragma once

#include <string>
#include <vector>

#include "t2i/image_io.hpp"

namespace t2i {

struct Series {
  std::string label;
  std::vector<real> values;  // indexed by step order
};

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<real>> rows;
};

// Parses a loss CSV (header + numeric rows); malformed rows report their
// line number.
CsvTable parse_loss_csv(const std::string& path);

// Line chart of the series on a shared axis; colors cycle through a fixed
// palette in series order (the caller prints the legend).
ImageU8 render_series_plot(const std::vector<Series>& series, int width = 640, int height = 400);

// RGB of the palette entry used for series index i.
std::array<std::uint8_t, 3> plot_color(std::size_t i);

}  // namespace t2i
