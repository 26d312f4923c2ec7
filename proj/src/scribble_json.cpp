#include "ivos/scribble_json.hpp"

namespace ivos {

using nlohmann::json;

json scribbles_to_json(const ScribbleSet& s) {
  json strokes = json::array();
  for (const auto& st : s.strokes) {
    json pts = json::array();
    for (const auto& p : st.points) pts.push_back({p.x, p.y});
    strokes.push_back({{"object", static_cast<int>(st.object)},
                       {"polarity", st.polarity == Polarity::kPositive ? "pos" : "neg"},
                       {"radius", st.brush_radius},
                       {"points", std::move(pts)}});
  }
  return json{{"frame", s.frame_index}, {"strokes", std::move(strokes)}};
}

ScribbleSet scribbles_from_json(const json& j) {
  try {
    ScribbleSet s;
    s.frame_index = j.at("frame").get<int>();
    for (const auto& js : j.at("strokes")) {
      ScribbleStroke st;
      const int obj = js.at("object").get<int>();
      if (obj < 0 || obj > 255) throw ValidationError("object id out of range: " + std::to_string(obj));
      st.object = static_cast<ObjectId>(obj);
      const auto pol = js.at("polarity").get<std::string>();
      if (pol == "pos") {
        st.polarity = Polarity::kPositive;
      } else if (pol == "neg") {
        st.polarity = Polarity::kNegative;
      } else {
        throw ValidationError("polarity must be \"pos\" or \"neg\", got \"" + pol + "\"");
      }
      st.brush_radius = js.value("radius", 0);
      for (const auto& jp : js.at("points")) {
        if (!jp.is_array() || jp.size() != 2) throw ValidationError("point must be [x, y]");
        st.points.push_back({jp[0].get<int>(), jp[1].get<int>()});
      }
      s.strokes.push_back(std::move(st));
    }
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed scribble JSON: ") + e.what());
  }
}

std::string dump_scribbles(const ScribbleSet& s) { return scribbles_to_json(s).dump(); }

ScribbleSet parse_scribbles(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed scribble JSON: ") + e.what());
  }
  return scribbles_from_json(j);
}

}  // namespace ivos
