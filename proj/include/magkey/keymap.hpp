#pragma once

#include <optional>
#include <string>
#include <vector>

#include "magkey/board.hpp"
#include "magkey/estimate.hpp"

namespace magkey {

struct Key {
  std::string id;
  std::string label;
  std::vector<CellId> cells;
};

/// Application keys as groups of fine-grained cells. Keys may be any cell
/// set (curved, L-shaped, ...), but sets must not overlap.
struct KeyLayout {
  std::string id;
  int rows = 8;
  int cols = 18;
  double cell_size = 2.0;
  std::vector<Key> keys;
  std::optional<std::string> reference_key;

  const Key* find_key(const std::string& key_id) const;
  /// Owning key of a cell, or nullptr when unmapped.
  const Key* key_for_cell(CellId cell) const;
  bool matches(const BoardSpec& board) const;
};

KeyLayout make_layout(const std::string& id, const BoardSpec& board);

struct KeyEvent {
  std::string key_id;
  std::string label;
  double t_start = 0.0;
  double t_end = 0.0;
  Estimate source;
};

/// Discrete estimates map by cell; continuous ones snap to the containing
/// cell first. Returns nullopt for unmapped cells; DomainError when the
/// estimate was made on a different grid.
std::optional<KeyEvent> map_key(const Estimate& est, const KeyLayout& layout);

enum class ViolationKind { kOverlap, kOutOfBoard, kEmptyKey, kMissingReferenceKey, kDuplicateKeyId, kBadGeometry };

const char* to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string message;
  std::vector<std::string> keys;
  std::optional<CellId> cell;
};

std::vector<Violation> validate_layout(const KeyLayout& layout);

/// Folds key `absorbed` into key `into` (union of cells, absorbed removed).
KeyLayout merge_keys(const KeyLayout& layout, const std::string& into, const std::string& absorbed);

/// 16-key calculator on 2x2-cell keys (the '=' key spans 2x4 cells) in the
/// block nearest the sensor: cell columns 4-13 of the default 18x8 board.
/// Reference key "C" bootstraps polarity.
KeyLayout calculator_layout(const BoardSpec& board = {});

}  // namespace magkey
