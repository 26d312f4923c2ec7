#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "ivos/core.hpp"

namespace ivos {

// {"frame": int, "strokes": [{"object": int, "polarity": "pos"|"neg",
//   "radius": int, "points": [[x, y], ...]}]}

nlohmann::json scribbles_to_json(const ScribbleSet& s);

/// Throws ValidationError on schema violations.
ScribbleSet scribbles_from_json(const nlohmann::json& j);

std::string dump_scribbles(const ScribbleSet& s);
ScribbleSet parse_scribbles(const std::string& text);

}  // namespace ivos
