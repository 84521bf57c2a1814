#include "magkey/board.hpp"

#include <cmath>
#include <string>

#include "magkey/errors.hpp"

namespace magkey {

Axes Axes::parse(const std::string& text) {
  bool x = false, y = false, z = false;
  for (char c : text) {
    bool* slot = c == 'x' ? &x : c == 'y' ? &y : c == 'z' ? &z : nullptr;
    if (!slot || *slot) throw DomainError("bad axis set '" + text + "'");
    *slot = true;
  }
  Axes axes(x, y, z);
  if (axes.empty()) throw DomainError("empty axis set");
  return axes;
}

std::string Axes::to_string() const {
  std::string s;
  if (has(0)) s += 'x';
  if (has(1)) s += 'y';
  if (has(2)) s += 'z';
  return s;
}

Vec2 BoardSpec::centroid(CellId cell) const {
  if (!valid_cell(cell)) throw DomainError("cell " + std::to_string(cell) + " outside board");
  return Vec2((col_of(cell) + 0.5) * cell_size, (row_of(cell) + 0.5) * cell_size);
}

bool BoardSpec::contains(const Vec2& pos) const {
  return pos.x() >= 0.0 && pos.y() >= 0.0 && pos.x() <= width() && pos.y() <= height();
}

std::optional<CellId> BoardSpec::cell_at(const Vec2& pos) const {
  if (!std::isfinite(pos.x()) || !std::isfinite(pos.y()) || !contains(pos)) return std::nullopt;
  int col = std::min(static_cast<int>(std::floor(pos.x() / cell_size)), cols - 1);
  int row = std::min(static_cast<int>(std::floor(pos.y() / cell_size)), rows - 1);
  return cell_id(row, col);
}

bool BoardSpec::same_grid(const BoardSpec& other) const {
  return rows == other.rows && cols == other.cols && cell_size == other.cell_size;
}

void BoardSpec::validate() const {
  if (rows < 1 || cols < 1) throw DomainError("board needs at least one row and column");
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw DomainError("cell_size must be > 0");
  if (!sensor_pos.allFinite() || !std::isfinite(magnet_height))
    throw DomainError("non-finite board geometry");
}

}  // namespace magkey
