#include "trackbridge/graph_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace trackbridge {

using nlohmann::json;

std::string format_number(double value) {
  if (value == 0.0) return "0";  // folds -0
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string spots_csv(const LineageGraph& graph) {
  std::string out = "id,timepoint,x,y,z,cxx,cxy,cxz,cyy,cyz,czz,tag\n";
  for (SpotId id : graph.alive_spots()) {
    const SpotRecord& s = graph.spot(id);
    out += std::to_string(id);
    out += ',';
    out += std::to_string(s.timepoint);
    for (double p : s.position) {
      out += ',';
      out += format_number(p);
    }
    for (double c : s.covariance.v) {
      out += ',';
      out += format_number(c);
    }
    out += ',';
    out += graph.tag_name(id);
    out += '\n';
  }
  return out;
}

std::string links_csv(const LineageGraph& graph) {
  std::string out = "id,source,target\n";
  for (LinkId id : graph.alive_links()) {
    const LinkRecord& l = graph.link(id);
    out += std::to_string(id) + ',' + std::to_string(l.source) + ',' + std::to_string(l.target) + '\n';
  }
  return out;
}

json spot_to_json(const LineageGraph& graph, SpotId id) {
  const SpotRecord& s = graph.spot(id);
  json j = {{"id", id},
            {"timepoint", s.timepoint},
            {"position", s.position},
            {"covariance", s.covariance.v}};
  const std::string tag = graph.tag_name(id);
  j["tag"] = tag.empty() ? json(nullptr) : json(tag);
  return j;
}

json link_to_json(const LineageGraph& graph, LinkId id) {
  const LinkRecord& l = graph.link(id);
  return {{"id", id}, {"source", l.source}, {"target", l.target}};
}

json graph_to_json(const LineageGraph& graph) {
  json tags = json::array();
  for (const TagSet& t : graph.tag_sets()) {
    tags.push_back({{"name", t.name}, {"color", {t.color.r, t.color.g, t.color.b, t.color.a}}});
  }
  json spots = json::array();
  for (SpotId id : graph.alive_spots()) spots.push_back(spot_to_json(graph, id));
  json links = json::array();
  for (LinkId id : graph.alive_links()) links.push_back(link_to_json(graph, id));
  return {{"tagSets", std::move(tags)}, {"spots", std::move(spots)}, {"links", std::move(links)}};
}

LineageGraph graph_from_json(const json& doc, std::int32_t timepoint_count) {
  LineageGraph graph(timepoint_count);
  try {
    for (const json& t : doc.value("tagSets", json::array())) {
      const auto c = t.at("color").get<std::array<float, 4>>();
      graph.define_tag(t.at("name").get<std::string>(), Rgba{c[0], c[1], c[2], c[3]});
    }
    for (const json& s : doc.at("spots")) {
      const auto p = s.at("position").get<std::array<double, 3>>();
      SymMat3 cov;
      cov.v = s.at("covariance").get<std::array<double, 6>>();
      TagRef tag = kNoTag;
      if (s.contains("tag") && !s["tag"].is_null()) {
        const auto ref = graph.find_tag(s["tag"].get<std::string>());
        if (!ref) throw NotFoundError("spot references unknown tag");
        tag = *ref;
      }
      graph.insert_spot_at(s.at("id").get<SpotId>(), s.at("timepoint").get<std::int32_t>(),
                           Vec3(p[0], p[1], p[2]), cov, tag);
    }
    for (const json& l : doc.at("links")) {
      graph.insert_link_at(l.at("id").get<LinkId>(), l.at("source").get<SpotId>(), l.at("target").get<SpotId>());
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed graph document: ") + e.what());
  }
  graph.clear_history();
  return graph;
}

std::string read_text_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + file.string());
  out << text;
}

void write_csv_export(const LineageGraph& graph, const std::filesystem::path& dir) {
  write_text_file(dir / "spots.csv", spots_csv(graph));
  write_text_file(dir / "links.csv", links_csv(graph));
}

void save_graph(const LineageGraph& graph, const std::filesystem::path& file) {
  write_text_file(file, graph_to_json(graph).dump(1) + "\n");
}

LineageGraph load_graph(const std::filesystem::path& file, std::int32_t timepoint_count) {
  json doc;
  try {
    doc = json::parse(read_text_file(file));
  } catch (const json::exception& e) {
    throw ValidationError("cannot parse " + file.string() + ": " + e.what());
  }
  return graph_from_json(doc, timepoint_count);
}

}  // namespace trackbridge
