#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "trackbridge/graph_io.hpp"
#include "trackbridge/trace.hpp"
#include "trackbridge/volume.hpp"

using namespace trackbridge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "trackbridge_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(TRACKBRIDGE_CLI) + " " + args + " > " + (kRoot / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Writes the scene and trace inputs shared by both runs.
void write_inputs() {
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);
  VolumeHeader h;
  h.dims = {24, 24, 16};
  h.timepoints = 4;
  SyntheticScene scene;
  std::vector<BlobState> a, b;
  for (std::int32_t t = 0; t < 4; ++t) {
    a.push_back({t, Vec3(6 + 1.5 * t, 8, 8), 2.0, 1000.0});
    b.push_back({t, Vec3(16, 16 - 1.0 * t, 8), 2.0, 800.0});
  }
  scene.trajectories = {a, b};
  json doc = scene_to_json(scene);
  doc["header"] = header_to_json(h);
  write_text_file(kRoot / "scene.json", doc.dump(2));

  std::vector<RayProfile> rays;
  const Vec3 eye(12, -10, 8);
  for (std::int32_t t = 3; t >= 0; --t) {
    RayProfile r;
    r.timepoint = t;
    r.origin = eye;
    r.direction = (a[static_cast<std::size_t>(t)].center - eye).normalized();
    r.step = 0.5;
    rays.push_back(r);  // raw samples are filled in by the CLI
  }
  write_text_file(kRoot / "trace.json", rays_to_json(rays).dump(2));
}

void pipeline(const fs::path& out) {
  fs::create_directories(out);
  REQUIRE(run("generate --spec " + q(kRoot / "scene.json") + " --out " + q(out / "vol") + " --seed 7 --noise 50 --manifest " +
              q(out / "project.json")) == 0);
  REQUIRE(run("detect --volume " + q(out / "vol") + " --t 0 --graph " + q(out / "graph.json")) == 0);
  REQUIRE(run("detect --volume " + q(out / "vol") + " --t 1 --graph " + q(out / "graph.json")) == 0);
  REQUIRE(run("link --graph " + q(out / "graph.json") + " --from 0") == 0);
  REQUIRE(run("extract --volume " + q(out / "vol") + " --trace " + q(kRoot / "trace.json") + " --out " +
              q(out / "track.csv") + " --graph " + q(out / "graph.json")) == 0);
  REQUIRE(run("export --graph " + q(out / "graph.json") + " --out " + q(out / "csv")) == 0);
  REQUIRE(run("bench populate --links 3000 --seed 3 --repeats 1 --report " + q(out / "bench.json")) == 0);
}

}  // namespace

TEST_CASE("CLI commands are deterministic under fixed seeds") {
  write_inputs();
  pipeline(kRoot / "a");
  pipeline(kRoot / "b");
  for (const char* file : {"vol/volume.raw", "vol/volume.json", "graph.json", "track.csv", "csv/spots.csv",
                           "csv/links.csv"}) {
    CAPTURE(file);
    CHECK(read_text_file(kRoot / "a" / file) == read_text_file(kRoot / "b" / file));
  }
  // timing fields differ by nature; everything else must match
  json ra = json::parse(read_text_file(kRoot / "a" / "bench.json"));
  json rb = json::parse(read_text_file(kRoot / "b" / "bench.json"));
  CHECK(ra["links"] == 3000);
  CHECK(ra.contains("populationSeconds"));
  CHECK(ra.contains("spotsPerTimepoint"));
  for (const char* k : {"populationSeconds", "secondsPerLink", "generationSeconds"}) {
    ra.erase(k);
    rb.erase(k);
  }
  CHECK(ra == rb);

  const LineageGraph g = load_graph(kRoot / "a" / "graph.json");
  CHECK(g.validate().empty());
  CHECK(g.spots_at_timepoint(0).size() >= 2);
  CHECK(read_text_file(kRoot / "a" / "track.csv").rfind("timepoint,x,y,z", 0) == 0);
}

TEST_CASE("CLI validation failures exit non-zero") {
  write_inputs();
  CHECK(run("detect --volume " + q(kRoot / "missing") + " --t 0 --graph " + q(kRoot / "g.json")) != 0);
  CHECK(run("link --graph " + q(kRoot / "missing.json") + " --from 0") != 0);
  CHECK(run("generate --spec " + q(kRoot / "trace.json") + " --out " + q(kRoot / "v")) != 0);
  CHECK(run("bench populate --links 10 --spots-per-tp 5-2") != 0);
  CHECK(run("nonsense") != 0);

  REQUIRE(run("export --out " + q(kRoot / "empty")) == 0);
  CHECK(read_text_file(kRoot / "empty" / "spots.csv") == "id,timepoint,x,y,z,cxx,cxy,cxz,cyy,cyz,czz,tag\n");
  CHECK(read_text_file(kRoot / "empty" / "links.csv") == "id,source,target\n");
  fs::remove_all(kRoot);
}
