#include "t2i/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace t2i {

CsvTable parse_loss_csv(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "cannot open csv: " + path);
  CsvTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line_no == 1) {
      table.columns = cells;
      require(!table.columns.empty(), "csv has an empty header: " + path);
      continue;
    }
    require(cells.size() == table.columns.size(),
            "csv row at line " + std::to_string(line_no) + " has " +
                std::to_string(cells.size()) + " cells, expected " +
                std::to_string(table.columns.size()) + ": " + path);
    std::vector<real> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        require(used == c.size(), "");
      } catch (...) {
        fail("csv row at line " + std::to_string(line_no) + " has a non-numeric cell \"" + c +
             "\": " + path);
      }
    }
    table.rows.push_back(std::move(row));
  }
  require(!table.columns.empty(), "csv is empty: " + path);
  require(!table.rows.empty(), "csv has a header but no rows: " + path);
  return table;
}

std::array<std::uint8_t, 3> plot_color(std::size_t i) {
  static const std::array<std::array<std::uint8_t, 3>, 8> palette = {{{220, 60, 60},
                                                                      {60, 120, 220},
                                                                      {50, 170, 80},
                                                                      {230, 160, 40},
                                                                      {150, 70, 200},
                                                                      {40, 180, 180},
                                                                      {220, 110, 180},
                                                                      {120, 120, 120}}};
  return palette[i % palette.size()];
}

namespace {

void put_pixel(ImageU8& img, int x, int y, const std::array<std::uint8_t, 3>& rgb) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  std::uint8_t* p = img.rgb.data() + (static_cast<std::size_t>(y) * img.width + x) * 3;
  p[0] = rgb[0];
  p[1] = rgb[1];
  p[2] = rgb[2];
}

void draw_line(ImageU8& img, int x0, int y0, int x1, int y1,
               const std::array<std::uint8_t, 3>& rgb) {
  int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put_pixel(img, x0, y0, rgb);
    if (x0 == x1 && y0 == y1) break;
    int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

ImageU8 render_series_plot(const std::vector<Series>& series, int width, int height) {
  require(!series.empty(), "plot needs at least one series");
  ImageU8 img;
  img.width = width;
  img.height = height;
  img.rgb.assign(static_cast<std::size_t>(width) * height * 3, 250);

  const int margin = 24;
  int x0 = margin, x1 = width - margin;
  int y0 = margin, y1 = height - margin;

  real vmin = 1e300, vmax = -1e300;
  std::size_t longest = 0;
  for (const auto& s : series) {
    longest = std::max(longest, s.values.size());
    for (real v : s.values) {
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  }
  require(longest >= 1, "plot series are empty");
  if (vmax - vmin < 1e-12) {
    vmax += 1.0;
    vmin -= 1.0;
  }

  // Frame and light horizontal grid.
  std::array<std::uint8_t, 3> frame = {90, 90, 90};
  std::array<std::uint8_t, 3> grid = {220, 220, 220};
  for (int g = 1; g < 4; ++g) {
    int y = y0 + (y1 - y0) * g / 4;
    draw_line(img, x0, y, x1, y, grid);
  }
  draw_line(img, x0, y0, x0, y1, frame);
  draw_line(img, x0, y1, x1, y1, frame);

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (s.values.empty()) continue;
    auto color = plot_color(si);
    int prev_x = 0, prev_y = 0;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      real fx = longest > 1 ? static_cast<real>(i) / static_cast<real>(longest - 1) : 0.0;
      real fy = (s.values[i] - vmin) / (vmax - vmin);
      int px = x0 + static_cast<int>(fx * (x1 - x0));
      int py = y1 - static_cast<int>(fy * (y1 - y0));
      if (i > 0) draw_line(img, prev_x, prev_y, px, py, color);
      prev_x = px;
      prev_y = py;
    }
  }
  return img;
}

}  // namespace t2i
