#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "urbanwave/errors.hpp"
#include "urbanwave/io.hpp"

namespace urbanwave {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw InputError("");
    return v;
  } catch (const std::exception&) {
    throw InputError(where + ": expected a number, got '" + s + "'");
  }
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::optional<std::uint32_t> MaterialTable::find(const std::string& name) const {
  for (std::uint32_t i = 0; i < materials.size(); ++i) {
    if (materials[i].name == name) return i;
  }
  return std::nullopt;
}

MaterialTable default_material_table() {
  MaterialTable t;
  t.materials.push_back({"Wall", 0.8, std::nullopt, std::nullopt});
  t.materials.push_back({"Metal", 0.9, 10.0, 10.0});
  return t;
}

MaterialTable load_material_table(const std::string& path) {
  auto in = open_in(path);
  MaterialTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path + ":" + std::to_string(line_no);
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto f = split(s, ',');
    if (f[0] == "material") {
      if (f.size() < 3 || f.size() > 5 || f[1].empty()) throw InputError(where + ": malformed material record");
      if (t.find(f[1])) throw InputError(where + ": duplicate material '" + f[1] + "'");
      Material m;
      m.name = f[1];
      m.reflection_coefficient = parse_double(f[2], where);
      if (f.size() > 3 && !f[3].empty()) m.thickness_mm = parse_double(f[3], where);
      if (f.size() > 4 && !f[4].empty()) m.penetration_loss_db = parse_double(f[4], where);
      try {
        validate(m);
      } catch (const InputError& e) {
        throw InputError(where + ": " + e.what());
      }
      t.materials.push_back(std::move(m));
    } else if (f[0] == "group") {
      if (f.size() != 3 || f[1].empty()) throw InputError(where + ": malformed group record");
      for (const auto& g : t.groups) {
        if (g.first == f[1]) throw InputError(where + ": duplicate group '" + f[1] + "'");
      }
      t.groups.emplace_back(f[1], f[2]);
    } else {
      throw InputError(where + ": unknown record '" + f[0] + "'");
    }
  }
  for (const auto& d : default_material_table().materials) {
    if (!t.find(d.name)) t.materials.push_back(d);
  }
  for (const auto& [group, material] : t.groups) {
    if (!t.find(material)) throw InputError(path + ": group '" + group + "' names unknown material '" + material + "'");
  }
  return t;
}

void write_material_table(const MaterialTable& table, const std::string& path) {
  auto out = open_out(path);
  for (const auto& m : table.materials) {
    out << "material," << m.name << ',' << exact(m.reflection_coefficient);
    if (m.thickness_mm || m.penetration_loss_db) {
      out << ',' << (m.thickness_mm ? exact(*m.thickness_mm) : "");
      if (m.penetration_loss_db) out << ',' << exact(*m.penetration_loss_db);
    }
    out << '\n';
  }
  for (const auto& [g, m] : table.groups) out << "group," << g << ',' << m << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

Scene load_scene(const std::string& obj_path, const std::string& materials_path, std::vector<std::string>* warnings) {
  const MaterialTable table = load_material_table(materials_path);
  auto in = open_in(obj_path);

  std::vector<Vec3> vertices;
  std::vector<SceneObject> objects;
  std::string group = "default";
  std::uint32_t material = 0;

  auto material_for = [&](const std::string& name, int line_no) -> std::uint32_t {
    for (const auto& [g, m] : table.groups) {
      if (g == name) return *table.find(m);
    }
    if (auto id = table.find(name)) return *id;
    if (warnings) warnings->push_back(obj_path + ":" + std::to_string(line_no) + ": group '" + name +
                                      "' has no material, using Wall");
    return *table.find("Wall");
  };
  auto start_object = [&](const std::string& name) {
    SceneObject o;
    o.id = static_cast<std::uint32_t>(objects.size() + 1);
    o.name = name;
    objects.push_back(std::move(o));
  };

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = obj_path + ":" + std::to_string(line_no);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    if (key == "v") {
      Vec3 v;
      if (!(ls >> v.x >> v.y >> v.z)) throw InputError(where + ": malformed vertex");
      vertices.push_back(v);
    } else if (key == "g" || key == "o") {
      std::string name;
      std::getline(ls, name);
      name = trim(name);
      if (name.empty()) name = "default";
      group = name;
      material = material_for(group, line_no);
      if (objects.empty() || !objects.back().triangles.empty()) {
        start_object(group);
      } else {
        objects.back().name = group;
      }
    } else if (key == "f") {
      std::vector<std::uint32_t> idx;
      std::string tok;
      while (ls >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        long v = 0;
        try {
          std::size_t used = 0;
          v = std::stol(head, &used);
          if (used != head.size()) throw InputError("");
        } catch (const std::exception&) {
          throw InputError(where + ": malformed face index '" + tok + "'");
        }
        const long n = static_cast<long>(vertices.size());
        const long resolved = v < 0 ? n + v : v - 1;
        if (v == 0 || resolved < 0 || resolved >= n) throw InputError(where + ": face index out of range");
        idx.push_back(static_cast<std::uint32_t>(resolved));
      }
      if (idx.size() < 3) throw InputError(where + ": face needs at least three vertices");
      if (objects.empty()) {
        material = material_for(group, line_no);
        start_object(group);
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        Triangle t{vertices[idx[0]], vertices[idx[k]], vertices[idx[k + 1]], material, objects.back().id};
        if (!(t.area() > kMinTriangleArea)) throw InputError(where + ": degenerate face");
        objects.back().triangles.push_back(t);
      }
    } else if (key == "vn" || key == "vt" || key == "s" || key == "usemtl" || key == "mtllib" || key == "l") {
      continue;
    } else {
      throw InputError(where + ": unsupported OBJ statement '" + key + "'");
    }
  }
  std::erase_if(objects, [](const SceneObject& o) { return o.triangles.empty(); });
  if (objects.empty()) throw InputError("empty scene");
  return Scene(table.materials, std::move(objects));
}

void write_scene(const std::vector<SceneObject>& objects, const std::vector<Material>& materials,
                 const std::string& obj_path, const std::string& materials_path) {
  MaterialTable table;
  table.materials = materials;
  auto out = open_out(obj_path);
  out << "# urbanwave scene\n";
  std::size_t base = 1;
  for (const auto& obj : objects) {
    // one group per (object, material) so each group maps to a single material
    std::vector<std::uint32_t> mats;
    for (const auto& t : obj.triangles) {
      if (std::find(mats.begin(), mats.end(), t.material_id) == mats.end()) mats.push_back(t.material_id);
    }
    for (auto m : mats) {
      const std::string group = "obj" + std::to_string(obj.id) + (mats.size() > 1 ? "_m" + std::to_string(m) : "");
      table.groups.emplace_back(group, materials.at(m).name);
      out << "g " << group << '\n';
      std::size_t count = 0;
      for (const auto& t0 : obj.triangles) {
        if (t0.material_id != m) continue;
        const Triangle t = t0.translated(obj.pose);
        for (const Vec3& v : {t.v0, t.v1, t.v2}) out << "v " << exact(v.x) << ' ' << exact(v.y) << ' ' << exact(v.z) << '\n';
        ++count;
      }
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t i = base + 3 * k;
        out << "f " << i << ' ' << i + 1 << ' ' << i + 2 << '\n';
      }
      base += 3 * count;
    }
  }
  if (!out) throw std::runtime_error("failed writing '" + obj_path + "'");
  write_material_table(table, materials_path);
}

namespace {

/// Minimal streaming scanner for the element/attribute subset used by SUMO FCD exports.
class FcdScanner {
 public:
  FcdScanner(std::string text, std::string path) : text_(std::move(text)), path_(std::move(path)) {}

  struct Tag {
    std::string name;
    bool closing = false;
    std::vector<std::pair<std::string, std::string>> attrs;
    int line = 0;
  };

  /// Next element tag; comments, declarations and text are skipped.
  bool next(Tag& tag) {
    for (;;) {
      const auto lt = text_.find('<', pos_);
      if (lt == std::string::npos) return false;
      advance_to(lt);
      if (text_.compare(lt, 4, "<!--") == 0) {
        const auto end = text_.find("-->", lt);
        if (end == std::string::npos) fail("unterminated comment");
        advance_to(end + 3);
        continue;
      }
      if (text_.compare(lt, 2, "<?") == 0 || text_.compare(lt, 2, "<!") == 0) {
        const auto end = text_.find('>', lt);
        if (end == std::string::npos) fail("unterminated declaration");
        advance_to(end + 1);
        continue;
      }
      const auto gt = text_.find('>', lt);
      if (gt == std::string::npos) fail("unterminated element");
      parse_tag(lt + 1, gt, tag);
      advance_to(gt + 1);
      return true;
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw InputError(path_ + ":" + std::to_string(line_) + ": " + what);
  }
  int line() const { return line_; }

 private:
  void advance_to(std::size_t p) {
    line_ += static_cast<int>(std::count(text_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                         text_.begin() + static_cast<std::ptrdiff_t>(p), '\n'));
    pos_ = p;
  }

  void parse_tag(std::size_t b, std::size_t e, Tag& tag) {
    tag = Tag{};
    tag.line = line_;
    std::size_t i = b;
    if (i < e && text_[i] == '/') {
      tag.closing = true;
      ++i;
    }
    const auto name_end = text_.find_first_of(" \t\r\n/>", i);
    tag.name = text_.substr(i, std::min(name_end, e) - i);
    i = std::min(name_end, e);
    while (i < e) {
      i = text_.find_first_not_of(" \t\r\n/", i);
      if (i == std::string::npos || i >= e) break;
      const auto eq = text_.find('=', i);
      if (eq == std::string::npos || eq >= e) fail("malformed attribute in <" + tag.name + ">");
      const std::string key = trim(std::string_view(text_).substr(i, eq - i));
      const auto q = text_.find_first_not_of(" \t\r\n", eq + 1);
      if (q >= e || (text_[q] != '"' && text_[q] != '\'')) fail("unquoted attribute in <" + tag.name + ">");
      const auto close = text_.find(text_[q], q + 1);
      if (close == std::string::npos || close >= e) fail("unterminated attribute in <" + tag.name + ">");
      tag.attrs.emplace_back(key, text_.substr(q + 1, close - q - 1));
      i = close + 1;
    }
  }

  std::string text_;
  std::string path_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

const std::string& attr(const FcdScanner& sc, const FcdScanner::Tag& tag, const std::string& key) {
  for (const auto& [k, v] : tag.attrs) {
    if (k == key) return v;
  }
  sc.fail("<" + tag.name + "> missing attribute '" + key + "'");
}

}  // namespace

std::vector<Trajectory> load_sumo_fcd(const std::string& xml_path, double rx_height_m) {
  auto in = open_in(xml_path);
  std::ostringstream buf;
  buf << in.rdbuf();
  FcdScanner sc(buf.str(), xml_path);

  std::vector<Trajectory> out;
  std::unordered_map<std::string, std::size_t> index;
  double time = 0.0;
  bool in_timestep = false;
  FcdScanner::Tag tag;
  while (sc.next(tag)) {
    if (tag.name == "timestep") {
      if (tag.closing) {
        in_timestep = false;
        continue;
      }
      time = parse_double(attr(sc, tag, "time"), xml_path + ":" + std::to_string(tag.line));
      in_timestep = true;
      continue;
    }
    if (tag.name != "vehicle" || tag.closing) continue;
    const std::string where = xml_path + ":" + std::to_string(tag.line);
    if (!in_timestep) sc.fail("<vehicle> outside <timestep>");
    const std::string& id = attr(sc, tag, "id");
    TrajectorySample s;
    s.t_s = time;
    s.position = {parse_double(attr(sc, tag, "x"), where), parse_double(attr(sc, tag, "y"), where), rx_height_m};
    s.speed_mps = parse_double(attr(sc, tag, "speed"), where);
    const double angle = parse_double(attr(sc, tag, "angle"), where) * std::numbers::pi / 180.0;
    s.heading = {std::sin(angle), std::cos(angle), 0.0};
    if (s.speed_mps < 0.0) sc.fail("negative speed for vehicle '" + id + "'");
    auto [it, fresh] = index.emplace(id, out.size());
    if (fresh) {
      out.emplace_back();
      out.back().receiver_id = id;
    }
    auto& traj = out[it->second];
    if (!traj.samples.empty() && !(s.t_s > traj.samples.back().t_s)) {
      sc.fail("time not increasing for vehicle '" + id + "'");
    }
    traj.samples.push_back(s);
  }
  return out;
}

std::vector<Trajectory> load_csv_trajectories(const std::string& csv_path) {
  auto in = open_in(csv_path);
  std::string line;
  if (!std::getline(in, line)) throw InputError(csv_path + ": missing header");
  const auto header = split(trim(line), ',');
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto c_id = column("rx_id"), c_t = column("t"), c_x = column("x"), c_y = column("y"), c_z = column("z");
  if (!c_id || !c_t || !c_x || !c_y || !c_z) throw InputError(csv_path + ": header must name rx_id,t,x,y,z");
  const auto c_speed = column("speed"), c_hx = column("hx"), c_hy = column("hy"), c_hz = column("hz");

  std::vector<Trajectory> out;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<bool>> has_speed;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    const std::string s = trim(line);
    if (s.empty()) continue;
    const auto f = split(s, ',');
    const std::string where = csv_path + ":" + std::to_string(row);
    if (f.size() != header.size()) {
      throw InputError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(f.size()));
    }
    TrajectorySample sample;
    sample.t_s = parse_double(f[*c_t], where);
    sample.position = {parse_double(f[*c_x], where), parse_double(f[*c_y], where), parse_double(f[*c_z], where)};
    const bool speed_given = c_speed.has_value();
    if (speed_given) sample.speed_mps = parse_double(f[*c_speed], where);
    if (c_hx && c_hy && c_hz) {
      sample.heading = {parse_double(f[*c_hx], where), parse_double(f[*c_hy], where), parse_double(f[*c_hz], where)};
    }
    auto [it, fresh] = index.emplace(f[*c_id], out.size());
    if (fresh) {
      out.emplace_back();
      out.back().receiver_id = f[*c_id];
    }
    out[it->second].samples.push_back(sample);
  }
  for (auto& traj : out) {
    std::stable_sort(traj.samples.begin(), traj.samples.end(),
                     [](const TrajectorySample& a, const TrajectorySample& b) { return a.t_s < b.t_s; });
    if (!c_speed || !(c_hx && c_hy && c_hz)) {
      for (std::size_t i = 0; i < traj.samples.size(); ++i) {
        const std::size_t a = i + 1 < traj.samples.size() ? i : (i > 0 ? i - 1 : i);
        const std::size_t b = a + 1 < traj.samples.size() ? a + 1 : a;
        Vec3 v;
        if (b != a && traj.samples[b].t_s > traj.samples[a].t_s) {
          v = (traj.samples[b].position - traj.samples[a].position) / (traj.samples[b].t_s - traj.samples[a].t_s);
        }
        if (!c_speed) traj.samples[i].speed_mps = norm(v);
        if (!(c_hx && c_hy && c_hz) && norm(v) > 0.0) traj.samples[i].heading = normalized(v);
      }
    }
    validate(traj);
  }
  return out;
}

void write_csv_trajectories(const std::vector<Trajectory>& trajectories, const std::string& csv_path) {
  auto out = open_out(csv_path);
  out << "rx_id,t,x,y,z,speed,hx,hy,hz\n";
  for (const auto& t : trajectories) {
    for (const auto& s : t.samples) {
      out << t.receiver_id << ',' << exact(s.t_s) << ',' << exact(s.position.x) << ',' << exact(s.position.y) << ','
          << exact(s.position.z) << ',' << exact(s.speed_mps) << ',' << exact(s.heading.x) << ','
          << exact(s.heading.y) << ',' << exact(s.heading.z) << '\n';
    }
  }
  if (!out) throw std::runtime_error("failed writing '" + csv_path + "'");
}

std::vector<Trajectory> load_trajectories(const std::string& path, double rx_height_m) {
  const bool xml = path.size() >= 4 && path.compare(path.size() - 4, 4, ".xml") == 0;
  return xml ? load_sumo_fcd(path, rx_height_m) : load_csv_trajectories(path);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%#.6g", v);
  return buf;
}

void write_power_trace(const std::vector<PowerTraceRow>& rows, const std::string& csv_path) {
  auto out = open_out(csv_path);
  out << kPowerTraceHeader << '\n';
  for (const auto& r : rows) {
    out << format_number(r.t_s) << ',' << r.rx_id << ',' << format_number(r.position.x) << ','
        << format_number(r.position.y) << ',' << format_number(r.position.z) << ','
        << (r.power_dbm ? format_number(*r.power_dbm) : std::string("-inf")) << ',' << r.n_paths << ','
        << (r.los ? 1 : 0) << ',' << format_number(r.delay_spread_s) << ',' << format_number(r.doppler_mean_hz)
        << ',' << format_number(r.doppler_spread_hz) << ',' << r.segment << ',' << r.cache_hits << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + csv_path + "'");
}

void write_heatmap(const HeatmapGrid& grid, const std::string& csv_path) {
  if (!(grid.cell_m > 0.0) || grid.values.size() != std::size_t{grid.nx} * grid.ny) {
    throw std::invalid_argument("write_heatmap: invalid grid");
  }
  auto out = open_out(csv_path);
  out << "# origin=" << exact(grid.origin.x) << ',' << exact(grid.origin.y) << ',' << exact(grid.origin.z)
      << " cell=" << exact(grid.cell_m) << " nx=" << grid.nx << " ny=" << grid.ny
      << " height=" << exact(grid.rx_height_m) << '\n';
  for (std::uint32_t iy = 0; iy < grid.ny; ++iy) {
    for (std::uint32_t ix = 0; ix < grid.nx; ++ix) {
      const double v = grid.at(ix, iy);
      out << (ix ? "," : "") << (std::isfinite(v) ? exact(v) : format_number(v));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + csv_path + "'");
}

HeatmapGrid read_heatmap(const std::string& csv_path) {
  auto in = open_in(csv_path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw InputError(csv_path + ":1: missing header");
  HeatmapGrid g;
  std::istringstream hs(line.substr(2));
  std::string field;
  const std::string where = csv_path + ":1";
  bool seen[5] = {};
  while (hs >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw InputError(where + ": malformed header field '" + field + "'");
    const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
    if (key == "origin") {
      const auto c = split(val, ',');
      if (c.size() != 3) throw InputError(where + ": origin needs three coordinates");
      g.origin = {parse_double(c[0], where), parse_double(c[1], where), parse_double(c[2], where)};
      seen[0] = true;
    } else if (key == "cell") {
      g.cell_m = parse_double(val, where);
      seen[1] = true;
    } else if (key == "nx") {
      g.nx = static_cast<std::uint32_t>(parse_double(val, where));
      seen[2] = true;
    } else if (key == "ny") {
      g.ny = static_cast<std::uint32_t>(parse_double(val, where));
      seen[3] = true;
    } else if (key == "height") {
      g.rx_height_m = parse_double(val, where);
      seen[4] = true;
    } else {
      throw InputError(where + ": unknown header field '" + key + "'");
    }
  }
  if (!std::all_of(std::begin(seen), std::end(seen), [](bool b) { return b; })) {
    throw InputError(where + ": incomplete header");
  }
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    const std::string w = csv_path + ":" + std::to_string(row);
    if (f.size() != g.nx) throw InputError(w + ": expected " + std::to_string(g.nx) + " values");
    for (const auto& s : f) g.values.push_back(parse_double(s, w));
  }
  if (g.values.size() != std::size_t{g.nx} * g.ny) throw InputError(csv_path + ": expected " + std::to_string(g.ny) + " rows");
  return g;
}

}  // namespace urbanwave
