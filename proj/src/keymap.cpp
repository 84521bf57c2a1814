#include "magkey/keymap.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "magkey/errors.hpp"

namespace magkey {

const Key* KeyLayout::find_key(const std::string& key_id) const {
  for (const auto& k : keys)
    if (k.id == key_id) return &k;
  return nullptr;
}

const Key* KeyLayout::key_for_cell(CellId cell) const {
  for (const auto& k : keys)
    if (std::find(k.cells.begin(), k.cells.end(), cell) != k.cells.end()) return &k;
  return nullptr;
}

bool KeyLayout::matches(const BoardSpec& board) const {
  return rows == board.rows && cols == board.cols && cell_size == board.cell_size;
}

KeyLayout make_layout(const std::string& id, const BoardSpec& board) {
  KeyLayout layout;
  layout.id = id;
  layout.rows = board.rows;
  layout.cols = board.cols;
  layout.cell_size = board.cell_size;
  return layout;
}

std::optional<KeyEvent> map_key(const Estimate& est, const KeyLayout& layout) {
  if (!layout.matches(est.board)) throw DomainError("estimate board does not match layout '" + layout.id + "'");
  std::optional<CellId> cell = est.cell;
  if (est.mode == EstimateMode::kContinuous) cell = est.board.cell_at(est.position);
  if (!cell) return std::nullopt;
  const Key* key = layout.key_for_cell(*cell);
  if (!key) return std::nullopt;
  return KeyEvent{key->id, key->label, est.t_start, est.t_end, est};
}

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kOverlap: return "overlap";
    case ViolationKind::kOutOfBoard: return "out_of_board";
    case ViolationKind::kEmptyKey: return "empty_key";
    case ViolationKind::kMissingReferenceKey: return "missing_reference_key";
    case ViolationKind::kDuplicateKeyId: return "duplicate_key_id";
    case ViolationKind::kBadGeometry: return "bad_geometry";
  }
  return "unknown";
}

std::vector<Violation> validate_layout(const KeyLayout& layout) {
  std::vector<Violation> out;
  if (layout.rows < 1 || layout.cols < 1 || !(layout.cell_size > 0.0))
    out.push_back({ViolationKind::kBadGeometry, "board needs rows, cols >= 1 and cell_size > 0", {}, {}});
  const int n_cells = layout.rows * layout.cols;

  std::set<std::string> seen;
  std::map<CellId, std::vector<std::string>> owners;
  for (const auto& key : layout.keys) {
    if (!seen.insert(key.id).second)
      out.push_back({ViolationKind::kDuplicateKeyId, "key id '" + key.id + "' used twice", {key.id}, {}});
    if (key.cells.empty())
      out.push_back({ViolationKind::kEmptyKey, "key '" + key.id + "' has no cells", {key.id}, {}});
    std::set<CellId> unique(key.cells.begin(), key.cells.end());
    for (CellId c : unique) {
      if (c < 0 || c >= n_cells)
        out.push_back({ViolationKind::kOutOfBoard,
                       "key '" + key.id + "' cell " + std::to_string(c) + " outside " +
                           std::to_string(n_cells) + "-cell board",
                       {key.id}, c});
      else
        owners[c].push_back(key.id);
    }
  }
  for (const auto& [cell, ids] : owners) {
    if (ids.size() < 2) continue;
    std::string names;
    for (const auto& id : ids) names += (names.empty() ? "'" : ", '") + id + "'";
    out.push_back({ViolationKind::kOverlap, "cell " + std::to_string(cell) + " claimed by " + names, ids, cell});
  }
  if (layout.reference_key && !layout.find_key(*layout.reference_key))
    out.push_back({ViolationKind::kMissingReferenceKey,
                   "reference key '" + *layout.reference_key + "' not in layout", {*layout.reference_key}, {}});
  return out;
}

KeyLayout merge_keys(const KeyLayout& layout, const std::string& into, const std::string& absorbed) {
  if (into == absorbed) throw DomainError("cannot merge a key into itself");
  if (!layout.find_key(into) || !layout.find_key(absorbed)) throw NotFoundError("merge: unknown key id");
  KeyLayout out = layout;
  std::vector<CellId> moved = layout.find_key(absorbed)->cells;
  std::erase_if(out.keys, [&](const Key& k) { return k.id == absorbed; });
  for (auto& k : out.keys) {
    if (k.id != into) continue;
    k.cells.insert(k.cells.end(), moved.begin(), moved.end());
    std::sort(k.cells.begin(), k.cells.end());
    k.cells.erase(std::unique(k.cells.begin(), k.cells.end()), k.cells.end());
  }
  if (out.reference_key == absorbed) out.reference_key = into;
  return out;
}

KeyLayout calculator_layout(const BoardSpec& board) {
  if (board.rows < 8 || board.cols < 14) throw DomainError("calculator layout needs an 8x14 cell area");
  KeyLayout layout = make_layout("calculator", board);
  const auto add = [&](const std::string& id, const std::string& label, int kr, int kc, int height) {
    Key key{id, label, {}};
    for (int r = 2 * kr; r < 2 * (kr + height); ++r)
      for (int c = 4 + 2 * kc; c < 6 + 2 * kc; ++c) key.cells.push_back(board.cell_id(r, c));
    layout.keys.push_back(std::move(key));
  };
  add("7", "7", 0, 0, 1);
  add("8", "8", 0, 1, 1);
  add("9", "9", 0, 2, 1);
  add("/", "÷", 0, 3, 1);
  add("C", "C", 0, 4, 1);
  add("4", "4", 1, 0, 1);
  add("5", "5", 1, 1, 1);
  add("6", "6", 1, 2, 1);
  add("*", "×", 1, 3, 1);
  add("-", "−", 1, 4, 1);
  add("1", "1", 2, 0, 1);
  add("2", "2", 2, 1, 1);
  add("3", "3", 2, 2, 1);
  add("+", "+", 2, 3, 1);
  add("=", "=", 2, 4, 2);
  add("0", "0", 3, 0, 1);
  layout.reference_key = "C";
  return layout;
}

}  // namespace magkey
