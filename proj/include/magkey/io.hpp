#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "magkey/affine.hpp"
#include "magkey/board.hpp"
#include "magkey/estimate.hpp"
#include "magkey/evalharness.hpp"
#include "magkey/field_sim.hpp"
#include "magkey/fingerprint.hpp"
#include "magkey/keymap.hpp"
#include "magkey/offset.hpp"
#include "magkey/segment.hpp"

namespace magkey {

using Json = nlohmann::json;

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);
Json read_json_file(const std::filesystem::path& path);

Json to_json(const Vec3& v);
Vec3 vec3_from_json(const Json& j);

Json to_json(const BoardSpec& board);
BoardSpec board_from_json(const Json& j, BoardSpec defaults = {});

Json to_json(const EnvSpec& env);
EnvSpec env_from_json(const Json& j, EnvSpec defaults = {});

Json to_json(const MagnetSpec& magnet);
MagnetSpec magnet_from_json(const Json& j, MagnetSpec defaults = {});

Json to_json(const Scenario& scenario);
Scenario scenario_from_json(const Json& j);

/// [{pos:[x,y]|null, dwell}, ...]
Json path_to_json(const std::vector<PathPoint>& path);
std::vector<PathPoint> path_from_json(const Json& j);

Json to_json(const SilenceStats& stats);
SilenceStats silence_from_json(const Json& j);

Json to_json(const AffineMap& map);
AffineMap affine_from_json(const Json& j);

Json to_json(const Fingerprint& fp);
Fingerprint fingerprint_from_json(const Json& j);

Json to_json(const KeyLayout& layout);
KeyLayout layout_from_json(const Json& j);

Json to_json(const Violation& v);

Json to_json(const Estimate& est);
/// The estimate JSON carries no grid; `board` is attached as given.
Estimate estimate_from_json(const Json& j, const BoardSpec& board);

Json to_json(const EvalReport& report, bool include_samples = false);

Json to_json(const CrossTable& table);

/// Session file: silence, polarity, affine map and the paths of the
/// fingerprint and layout files it refers to.
struct SessionFile {
  SilenceStats silence;
  Polarity polarity = Polarity::kNormal;
  AffineMap affine;
  std::string fingerprint_path;
  std::string layout_path;
};

Json to_json(const SessionFile& session);
SessionFile session_from_json(const Json& j);

/// `t,bx,by,bz` with a header line.
std::string trace_to_csv(const Trace& trace);
Trace trace_from_csv(const std::string& text);

/// `start_idx,end_idx,start_t,end_t` with a header line.
std::string keystrokes_to_csv(const std::vector<Keystroke>& keystrokes);

struct KeystrokeSpan {
  std::size_t start = 0;
  std::size_t end = 0;
};
std::vector<KeystrokeSpan> keystrokes_from_csv(const std::string& text);

}  // namespace magkey
