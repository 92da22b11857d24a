#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <unistd.h>

#include "support.hpp"
#include "urbanwave/errors.hpp"
#include "urbanwave/io.hpp"
#include "urbanwave/propagation.hpp"

using namespace urbanwave;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("urbanwave_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& content = {}) const {
    const auto p = (path / name).string();
    if (!content.empty()) std::ofstream(p) << content;
    return p;
  }
};

std::string slurp(const std::string& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("single triangle in group Wall") {
  TempDir dir;
  const auto obj = dir.file("s.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\ng Wall\nf 1 2 3\n");
  const auto mat = dir.file("m.csv", "# defaults only\n");
  const Scene scene = load_scene(obj, mat);
  REQUIRE(scene.triangles().size() == 1);
  CHECK(scene.materials()[scene.triangles()[0].material_id].reflection_coefficient == 0.8);
}

TEST_CASE("material table lookups and errors") {
  TempDir dir;
  const auto mat = dir.file("m.csv", "material,Glass,0.5,6\ngroup,towers,Glass\ngroup,cars,Metal\n");
  const auto t = load_material_table(mat);
  REQUIRE(t.find("Glass"));
  CHECK(t.materials[*t.find("Glass")].thickness_mm == 6.0);
  REQUIRE(t.find("Metal"));
  CHECK(t.materials[*t.find("Metal")].reflection_coefficient == 0.9);
  CHECK(t.materials[*t.find("Metal")].penetration_loss_db == 10.0);

  CHECK_THROWS_AS(load_material_table(dir.file("bad1.csv", "group,a,Unobtainium\n")), InputError);
  CHECK_THROWS_AS(load_material_table(dir.file("bad2.csv", "material,X,1.5\n")), InputError);
  CHECK_THROWS_AS(load_material_table(dir.file("bad3.csv", "texture,X\n")), InputError);
  CHECK_THROWS_AS(load_material_table(dir.file("missing.csv")), InputError);

  const auto obj = dir.file("s.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\ng towers\nf 1 2 3\ng unknown\nf 1 2 4\n");
  std::vector<std::string> warnings;
  const Scene scene = load_scene(obj, mat, &warnings);
  REQUIRE(scene.triangles().size() == 2);
  CHECK(scene.materials()[scene.triangles()[0].material_id].name == "Glass");
  CHECK(scene.materials()[scene.triangles()[1].material_id].name == "Wall");
  CHECK(warnings.size() == 1);
}

TEST_CASE("OBJ errors carry line numbers") {
  TempDir dir;
  const auto mat = dir.file("m.csv", "# none\n");
  try {
    load_scene(dir.file("a.obj", "v 0 0 0\nv 1 0\n"), mat);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  CHECK_THROWS_AS(load_scene(dir.file("b.obj", "v 0 0 0\nf 1 2 3\n"), mat), InputError);
  CHECK_THROWS_AS(load_scene(dir.file("c.obj", "bogus 1 2\n"), mat), InputError);
  CHECK_THROWS_WITH_AS(load_scene(dir.file("d.obj", "# nothing\n"), mat), "empty scene", InputError);
}

TEST_CASE("OBJ polygons, negative indices and slashes") {
  TempDir dir;
  const auto obj = dir.file("q.obj", "o quad\nv 0 0 0\nv 2 0 0\nv 2 2 0\nv 0 2 0\nvn 0 0 1\nf -4//1 -3//1 -2//1 -1//1\n");
  const Scene scene = load_scene(obj, dir.file("m.csv", "#\n"));
  CHECK(scene.triangles().size() == 2);
  CHECK(scene.faces().size() == 1);
}

TEST_CASE("scene write/load round trip") {
  TempDir dir;
  std::vector<SceneObject> objs;
  for (std::uint32_t i = 0; i < 6; ++i) {
    objs.push_back(testing::box_object(i + 1, {i * 25.0, (i % 2) * 30.0, 0}, {10, 12, 5.0 + i}, i % 2));
  }
  objs.push_back(testing::wall_object(50, {0.1, -20.3, 0}, {30.7, -25.1, 0}, 0, 7.25, 1));
  const Scene original(testing::default_materials(), objs);
  write_scene(original.objects(), original.materials(), dir.file("w.obj"), dir.file("w.csv"));
  const Scene loaded = load_scene(dir.file("w.obj"), dir.file("w.csv"));
  REQUIRE(loaded.triangles().size() == original.triangles().size());
  for (std::size_t i = 0; i < loaded.triangles().size(); ++i) {
    CHECK(loaded.triangles()[i].material_id == original.triangles()[i].material_id);
    CHECK(loaded.triangles()[i].v0 == original.triangles()[i].v0);
    CHECK(loaded.triangles()[i].v2 == original.triangles()[i].v2);
  }
  CHECK(loaded.faces().size() == original.faces().size());
}

TEST_CASE("SUMO FCD parsing") {
  TempDir dir;
  const auto xml = dir.file("f.xml", R"(<?xml version="1.0" encoding="UTF-8"?>
<!-- generated -->
<fcd-export>
  <timestep time="0.00">
    <vehicle id="a" x="10.0" y="20.0" angle="0.00" type="car" speed="5.0" pos="1" lane="e_0" slope="0"/>
    <vehicle id="b" x="0" y="0" angle="90" speed="7.5"/>
  </timestep>
  <timestep time="1.00">
    <vehicle id="a" x="10.0" y="25.0" angle="0.00" speed="5.0"/>
  </timestep>
  <timestep time="2.00"/>
</fcd-export>
)");
  const auto trajs = load_sumo_fcd(xml, 1.5);
  REQUIRE(trajs.size() == 2);
  CHECK(trajs[0].receiver_id == "a");
  REQUIRE(trajs[0].samples.size() == 2);
  CHECK(trajs[0].samples[1].position == Vec3{10, 25, 1.5});
  CHECK(trajs[0].samples[0].speed_mps == 5.0);
  // clockwise from north
  CHECK(trajs[0].samples[0].heading.x == doctest::Approx(0.0));
  CHECK(trajs[0].samples[0].heading.y == doctest::Approx(1.0));
  CHECK(trajs[1].samples[0].heading.x == doctest::Approx(1.0));
  CHECK(trajs[1].samples[0].heading.y == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(load_sumo_fcd(dir.file("m.xml", "<timestep time=\"0\"><vehicle id=\"a\" x=\"1\" y=\"2\" angle=\"0\"/></timestep>")),
                  InputError);
  CHECK_THROWS_AS(
      load_sumo_fcd(dir.file("n.xml", "<timestep time=\"1\"><vehicle id=\"a\" x=\"1\" y=\"2\" angle=\"0\" speed=\"1\"/>"
                                      "</timestep><timestep time=\"0\"><vehicle id=\"a\" x=\"1\" y=\"2\" angle=\"0\" "
                                      "speed=\"1\"/></timestep>")),
      InputError);
}

TEST_CASE("SUMO FCD scales linearly") {
  TempDir dir;
  auto build = [&](int vehicles, int steps) {
    std::string s = "<fcd-export>\n";
    for (int t = 0; t < steps; ++t) {
      s += "<timestep time=\"" + std::to_string(t) + "\">\n";
      for (int v = 0; v < vehicles; ++v) {
        s += "<vehicle id=\"v" + std::to_string(v) + "\" x=\"" + std::to_string(v) + "\" y=\"" + std::to_string(t) +
             "\" angle=\"0\" speed=\"1\"/>\n";
      }
      s += "</timestep>\n";
    }
    return dir.file("big" + std::to_string(vehicles) + ".xml", s + "</fcd-export>\n");
  };
  const auto small = build(1000, 100), large = build(10000, 100);
  auto time = [](const std::string& p, std::size_t& samples) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto trajs = load_sumo_fcd(p);
    samples = 0;
    for (const auto& t : trajs) samples += t.samples.size();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  std::size_t n_small = 0, n_large = 0;
  const double t_small = time(small, n_small);
  const double t_large = time(large, n_large);
  CHECK(n_small == 100000);
  CHECK(n_large == 1000000);
  // 10x the input must not cost anywhere near 100x
  CHECK(t_large < 30.0 * t_small + 0.05);
}

TEST_CASE("CSV trajectories") {
  TempDir dir;
  const auto csv = dir.file("t.csv",
                            "rx_id,t,x,y,z,speed,hx,hy,hz\n"
                            "a,0,0,0,1.5,1,1,0,0\n"
                            "b,1,5,5,1.5,2,0,1,0\n"
                            "a,2,2,0,1.5,1,1,0,0\n"
                            "a,1,1,0,1.5,1,1,0,0\n"
                            "b,0,5,3,1.5,2,0,1,0\n");
  const auto trajs = load_csv_trajectories(csv);
  REQUIRE(trajs.size() == 2);
  CHECK(trajs[0].receiver_id == "a");
  REQUIRE(trajs[0].samples.size() == 3);
  CHECK(trajs[0].samples[1].position.x == 1.0);
  CHECK(trajs[1].samples[0].t_s == 0.0);
  CHECK(trajs[1].samples[0].position.y == 3.0);
  try {
    load_csv_trajectories(dir.file("r.csv", "rx_id,t,x,y,z\na,0,0,0,0\na,1,1,0\n"));
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
}

TEST_CASE("power trace format") {
  TempDir dir;
  write_power_trace({}, dir.file("e.csv"));
  CHECK(slurp(dir.file("e.csv")) == std::string(kPowerTraceHeader) + "\n");

  PowerTraceRow los;
  los.t_s = 0.5;
  los.rx_id = "car1";
  los.position = {100, 0, 1.5};
  los.power_dbm = -31.98;
  los.n_paths = 1;
  los.los = true;
  PowerTraceRow dark;
  dark.t_s = 0.6;
  dark.rx_id = "car1";
  write_power_trace({los, dark}, dir.file("p.csv"));
  const std::string text = slurp(dir.file("p.csv"));
  CHECK(text.find("-31.9800") != std::string::npos);
  CHECK(text.find("0.600000,car1,0.00000,0.00000,0.00000,-inf,0,0,") != std::string::npos);

  // positions re-ingest through the trajectory loader
  const auto trajs = load_csv_trajectories(dir.file("p.csv"));
  REQUIRE(trajs.size() == 1);
  CHECK(trajs[0].samples[0].position == Vec3{100, 0, 1.5});
}

TEST_CASE("number formatting") {
  CHECK(format_number(-31.98) == "-31.9800");
  CHECK(format_number(1.0) == "1.00000");
  CHECK(format_number(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(format_number(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("heatmap round trip") {
  TempDir dir;
  HeatmapGrid g;
  g.origin = {-10.5, 3.25, 0};
  g.cell_m = 5;
  g.nx = 2;
  g.ny = 2;
  g.values = {-40.123456789, -50.5, -std::numeric_limits<double>::infinity(), -61.0};
  write_heatmap(g, dir.file("h.csv"));
  const auto text = slurp(dir.file("h.csv"));
  CHECK(text.rfind("# origin=-10.5,3.25,0 cell=5 nx=2 ny=2 height=1.5\n", 0) == 0);
  const HeatmapGrid r = read_heatmap(dir.file("h.csv"));
  CHECK(r.nx == 2);
  CHECK(r.ny == 2);
  CHECK(r.origin == g.origin);
  CHECK(r.values == g.values);

  HeatmapGrid one = g;
  one.nx = one.ny = 1;
  one.values = {-20};
  write_heatmap(one, dir.file("one.csv"));
  CHECK(read_heatmap(dir.file("one.csv")).values == std::vector<double>{-20});
}
