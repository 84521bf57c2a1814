#pragma once

#include <optional>

#include "magkey/types.hpp"

namespace magkey {

/// Virtual grid printed on the board, plus where the phone's magnetometer
/// sits in the board frame (cm). Cell (row, col) has its centroid at
/// (col + 0.5, row + 0.5) * cell_size in the z = 0 plane.
struct BoardSpec {
  double cell_size = 2.0;
  int rows = 8;
  int cols = 18;
  Vec3 sensor_pos = Vec3(18.0, -20.0, 0.0);
  double magnet_height = 0.5;

  int cell_count() const { return rows * cols; }
  double width() const { return cols * cell_size; }
  double height() const { return rows * cell_size; }

  bool valid_cell(CellId cell) const { return cell >= 0 && cell < cell_count(); }
  int row_of(CellId cell) const { return cell / cols; }
  int col_of(CellId cell) const { return cell % cols; }
  CellId cell_id(int row, int col) const { return row * cols + col; }

  Vec2 centroid(CellId cell) const;

  bool contains(const Vec2& pos) const;

  /// Cell whose closed-open square contains pos; points on the far board
  /// edge map to the last row/column.
  std::optional<CellId> cell_at(const Vec2& pos) const;

  /// Magnet position in 3-D for a board-plane point.
  Vec3 magnet_point(const Vec2& pos) const { return Vec3(pos.x(), pos.y(), magnet_height); }

  /// Same grid geometry (rows, cols, cell size); sensor placement is not compared.
  bool same_grid(const BoardSpec& other) const;

  /// Throws DomainError unless rows*cols >= 1 and cell_size > 0.
  void validate() const;
};

}  // namespace magkey
