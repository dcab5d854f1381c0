#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "trackbridge/lineage_graph.hpp"

namespace trackbridge {

// Shortest round-trip decimal representation.
std::string format_number(double value);

// spots.csv: id,timepoint,x,y,z,cxx,cxy,cxz,cyy,cyz,czz,tag (ascending id)
std::string spots_csv(const LineageGraph& graph);
// links.csv: id,source,target (ascending id)
std::string links_csv(const LineageGraph& graph);

nlohmann::json spot_to_json(const LineageGraph& graph, SpotId id);
nlohmann::json link_to_json(const LineageGraph& graph, LinkId id);

// Snapshot of spots, links and tag sets. Ids are preserved by graph_from_json.
nlohmann::json graph_to_json(const LineageGraph& graph);
LineageGraph graph_from_json(const nlohmann::json& doc, std::int32_t timepoint_count = LineageGraph::kUnboundedTimepoints);

void write_csv_export(const LineageGraph& graph, const std::filesystem::path& dir);
void save_graph(const LineageGraph& graph, const std::filesystem::path& file);
LineageGraph load_graph(const std::filesystem::path& file, std::int32_t timepoint_count = LineageGraph::kUnboundedTimepoints);

std::string read_text_file(const std::filesystem::path& file);
void write_text_file(const std::filesystem::path& file, const std::string& text);

}  // namespace trackbridge
