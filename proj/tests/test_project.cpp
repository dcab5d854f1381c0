#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "support/project_fixture.hpp"

using namespace trackbridge;
using fixture::ProjectDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::uint32_t read_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

std::uint16_t read_u16(const std::string& s, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(s[at]) | (static_cast<unsigned char>(s[at + 1]) << 8));
}

}  // namespace

TEST_CASE("manifest round trip with relative paths") {
  ProjectDir d("trackbridge_manifest_test");
  const ProjectManifest m = load_manifest(d.dir / "project.json");
  CHECK(m.name == "demo");
  CHECK(fs::equivalent(m.volume, d.dir / "vol"));
  const json j = json::parse(read_text_file(d.dir / "project.json"));
  CHECK(j["volume"] == "vol");
  CHECK_NOTHROW(m.validate());

  ProjectManifest bad = m;
  bad.graph = d.dir / "missing.json";
  CHECK_THROWS(bad.validate());
  bad = m;
  bad.detection.sigma_large = 0.1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  write_text_file(d.dir / "broken.json", "{\"name\": 3");
  CHECK_THROWS(load_manifest(d.dir / "broken.json"));
}

TEST_CASE("graph document reflects protocol edits") {
  ProjectDir d("trackbridge_graph_doc_test");
  Project p(load_manifest(d.dir / "project.json"));
  for (int i = 0; i < 3; ++i) {
    p.bridge().handle_message(kEngine, {{"type", "addSpot"}, {"payload", {{"timepoint", i}, {"position", {i, 1, 1}}}}});
  }
  const auto r = handle_document_request(p, "GET", "/api/v1/graph");
  CHECK(r.status == 200);
  const json doc = json::parse(r.body);
  CHECK(doc["spots"].size() == 3);
  CHECK(doc["version"] == 3);
  CHECK(p.presenter().full_redraws() >= 1);

  const auto info = json::parse(handle_document_request(p, "GET", "/api/v1/info").body);
  CHECK(info["spots"] == 3);
  CHECK(info["name"] == "demo");
  CHECK(handle_document_request(p, "GET", "/api/v1/export/spots.csv").body == spots_csv(p.bridge().graph()));
  CHECK(handle_document_request(p, "GET", "/api/v1/nothing").status == 404);
  CHECK(handle_document_request(p, "GET", "/elsewhere").status == 404);
  CHECK(handle_document_request(p, "DELETE", "/api/v1/graph").status == 405);
}

TEST_CASE("slab fetch returns raw voxels and clips to the volume") {
  ProjectDir d("trackbridge_slab_test");
  Project p(load_manifest(d.dir / "project.json"));
  const VolumeTimeSeries& v = *p.volume();

  const auto r = handle_document_request(p, "GET", "/api/v1/volume/slab?t=1&x0=-2&y0=1&z0=0&x1=3&y1=9&z1=2");
  REQUIRE(r.status == 200);
  CHECK(r.content_type == "application/octet-stream");
  const std::uint32_t n = read_u32(r.body, 0);
  const json desc = json::parse(r.body.substr(4, n));
  CHECK(desc["clipped"] == true);
  CHECK(desc["box"]["x0"] == 0);
  CHECK(desc["box"]["y1"] == 5);
  CHECK(desc["size"] == json::array({3, 4, 2}));
  std::size_t at = 4 + n;
  REQUIRE(r.body.size() == at + 2 * 3 * 4 * 2);
  for (int z = 0; z < 2; ++z) {
    for (int y = 1; y < 5; ++y) {
      for (int x = 0; x < 3; ++x, at += 2) REQUIRE(read_u16(r.body, at) == v.at(1, x, y, z));
    }
  }

  const auto full = handle_document_request(p, "GET", "/api/v1/volume/slab?t=0");
  CHECK(json::parse(full.body.substr(4, read_u32(full.body, 0)))["clipped"] == false);
  CHECK(full.body.size() == 4 + read_u32(full.body, 0) + 2 * 6 * 5 * 4);
  CHECK(handle_document_request(p, "GET", "/api/v1/volume/slab?t=9").status == 400);
  CHECK(handle_document_request(p, "GET", "/api/v1/volume/slab?x0=abc").status == 400);
  const auto empty = handle_document_request(p, "GET", "/api/v1/volume/slab?x0=10");
  CHECK(empty.status == 200);
  CHECK(empty.body.size() == 4 + read_u32(empty.body, 0));
}

TEST_CASE("save and load round trip") {
  ProjectDir d("trackbridge_save_test");
  Project p(load_manifest(d.dir / "project.json"));
  auto& b = p.bridge();
  b.handle_message(kEngine, {{"type", "addSpot"}, {"payload", {{"timepoint", 0}, {"position", {1, 1, 1}}}}});
  b.handle_message(kEngine, {{"type", "addSpot"}, {"payload", {{"timepoint", 1}, {"position", {1.5, 1, 1}}}}});
  b.handle_message(kEngine, {{"type", "addLink"}, {"payload", {{"source", 0}, {"target", 1}}}});
  b.handle_message(kEngine, {{"type", "setTag"}, {"payload", {{"id", 1}, {"tag", "tp"}, {"color", {0, 1, 0, 1}}}}});
  const std::string before = spots_csv(b.graph()) + links_csv(b.graph());
  REQUIRE(b.graph().tag_name(1) == "tp");
  REQUIRE(handle_document_request(p, "POST", "/api/v1/project/save").status == 200);

  b.handle_message(kEngine, {{"type", "deleteSpot"}, {"payload", {{"id", 0}}}});
  CHECK(b.graph().spot_count() == 1);
  const auto loaded = handle_document_request(p, "POST", "/api/v1/project/load");
  CHECK(loaded.status == 200);
  CHECK(spots_csv(b.graph()) + links_csv(b.graph()) == before);

  Project fresh(load_manifest(d.dir / "project.json"));
  CHECK(spots_csv(fresh.bridge().graph()) + links_csv(fresh.bridge().graph()) == before);

  // load is refused while a track is being annotated
  b.annotate_and_advance(kEngine, Vec3(4, 4, 2));
  CHECK(handle_document_request(p, "POST", "/api/v1/project/load").status == 409);
}

TEST_CASE("project refuses a graph with mismatched timepoints") {
  ProjectDir d("trackbridge_mismatch_test");
  LineageGraph g;
  g.add_spot(7, Vec3::Zero());
  save_graph(g, d.dir / "graph.json");
  CHECK_THROWS(Project(load_manifest(d.dir / "project.json")));
}
