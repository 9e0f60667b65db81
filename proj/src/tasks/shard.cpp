#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tasks/tasks.hpp"

namespace mmp::tasks {

namespace {

constexpr char kMagic[8] = {'M', 'M', 'P', 'S', 'H', 'D', '0', '1'};
constexpr uint32_t kVersion = 1;

struct Writer {
  std::string buf;
  void u8(uint8_t v) { buf.push_back(static_cast<char>(v)); }
  void u16(uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
};

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}
  void need(size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("shard: corrupt record (unexpected end of data)");
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf[pos++]);
  }
  uint16_t u16() {
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(u8()) << (8 * i);
    return v;
  }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
    return v;
  }
  uint64_t u64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(u8()) << (8 * i);
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
};

void put_object(Writer& w, const sim::ObjectSpec& o) {
  w.u8(static_cast<uint8_t>(o.shape_id));
  w.u8(static_cast<uint8_t>(o.texture_id));
  w.u8(static_cast<uint8_t>(o.rotation_bin));
  w.u8(static_cast<uint8_t>(o.cell.row));
  w.u8(static_cast<uint8_t>(o.cell.col));
  w.i32(o.object_uid);
}

sim::ObjectSpec get_object(Reader& r) {
  sim::ObjectSpec o;
  o.shape_id = r.u8();
  o.texture_id = r.u8();
  o.rotation_bin = r.u8();
  o.cell.row = r.u8();
  o.cell.col = r.u8();
  o.object_uid = r.i32();
  return o;
}

void put_scene(Writer& w, const sim::Scene& s) {
  w.u16(static_cast<uint16_t>(s.board_w));
  w.u16(static_cast<uint16_t>(s.board_h));
  w.u16(static_cast<uint16_t>(s.objects.size()));
  for (const auto& o : s.objects) put_object(w, o);
  w.u16(static_cast<uint16_t>(s.container_cells.size()));
  for (const auto& c : s.container_cells) {
    w.u8(static_cast<uint8_t>(c.row));
    w.u8(static_cast<uint8_t>(c.col));
  }
}

sim::Scene get_scene(Reader& r) {
  sim::Scene s;
  s.board_w = r.u16();
  s.board_h = r.u16();
  const int n = r.u16();
  for (int i = 0; i < n; ++i) s.objects.push_back(get_object(r));
  const int nc = r.u16();
  for (int i = 0; i < nc; ++i) {
    sim::Cell c;
    c.row = r.u8();
    c.col = r.u8();
    s.container_cells.push_back(c);
  }
  return s;
}

std::string encode_record(const ShardRecord& rec) {
  Writer w;
  w.u8(static_cast<uint8_t>(rec.instance.task_type));
  w.u8(static_cast<uint8_t>(rec.instance.level));
  w.u64(rec.instance.seed);
  w.u32(static_cast<uint32_t>(rec.instance.expert_steps));
  put_scene(w, rec.instance.initial_scene);

  const PredicateSpec& p = rec.instance.predicate;
  w.u8(static_cast<uint8_t>(p.type));
  w.i32(p.target_uid);
  w.u8(p.check_rotation ? 1 : 0);
  w.u16(static_cast<uint16_t>(p.rot_goals.size()));
  for (const auto& rg : p.rot_goals) {
    w.i32(rg.uid);
    w.u8(static_cast<uint8_t>(rg.expected_rot));
  }
  w.u16(static_cast<uint16_t>(p.goals.size()));
  for (const auto& g : p.goals) {
    w.i32(g.uid);
    w.u8(static_cast<uint8_t>(g.cell.row));
    w.u8(static_cast<uint8_t>(g.cell.col));
    w.u8(static_cast<uint8_t>(g.rot));
  }

  w.u16(static_cast<uint16_t>(rec.instance.prompt.elements.size()));
  for (const auto& e : rec.instance.prompt.elements) {
    w.u8(e.is_word ? 1 : 0);
    if (e.is_word) {
      w.u32(static_cast<uint32_t>(e.word_id));
    } else {
      w.u8(static_cast<uint8_t>(e.image.kind));
      w.u16(static_cast<uint16_t>(e.image.views.size()));
      for (const auto& v : e.image.views) put_object(w, v.spec);
    }
  }

  w.u16(static_cast<uint16_t>(rec.trajectory.actions.size()));
  for (const auto& a : rec.trajectory.actions) {
    w.u8(static_cast<uint8_t>(a.pick.row));
    w.u8(static_cast<uint8_t>(a.pick.col));
    w.u8(static_cast<uint8_t>(a.pick_rot_bin));
    w.u8(static_cast<uint8_t>(a.place.row));
    w.u8(static_cast<uint8_t>(a.place.col));
    w.u8(static_cast<uint8_t>(a.place_rot_bin));
  }
  return w.buf;
}

ShardRecord decode_record(const std::string& payload, const sim::SimConfig& cfg) {
  Reader r(payload);
  ShardRecord rec;
  rec.instance.task_type = static_cast<TaskType>(r.u8());
  rec.instance.level = static_cast<Level>(r.u8());
  rec.instance.seed = r.u64();
  rec.instance.expert_steps = static_cast<int>(r.u32());
  rec.instance.initial_scene = get_scene(r);

  PredicateSpec& p = rec.instance.predicate;
  p.type = static_cast<TaskType>(r.u8());
  p.target_uid = r.i32();
  p.check_rotation = r.u8() != 0;
  const int nrg = r.u16();
  for (int i = 0; i < nrg; ++i) {
    PredicateSpec::RotGoal rg;
    rg.uid = r.i32();
    rg.expected_rot = r.u8();
    p.rot_goals.push_back(rg);
  }
  const int ng = r.u16();
  for (int i = 0; i < ng; ++i) {
    PredicateSpec::CellGoal g;
    g.uid = r.i32();
    g.cell.row = r.u8();
    g.cell.col = r.u8();
    g.rot = r.u8();
    p.goals.push_back(g);
  }

  const int ne = r.u16();
  for (int i = 0; i < ne; ++i) {
    const bool is_word = r.u8() != 0;
    if (is_word) {
      rec.instance.prompt.elements.push_back(PromptElement::word(static_cast<int>(r.u32())));
    } else {
      PromptImage im;
      im.kind = static_cast<ImageKind>(r.u8());
      const int nv = r.u16();
      for (int j = 0; j < nv; ++j) {
        PromptView v;
        v.spec = get_object(r);
        v.view.patch = sim::render_object(v.spec.shape_id, v.spec.texture_id, v.spec.rotation_bin, cfg);
        v.view.object_uid = v.spec.object_uid;
        v.view.bbox = im.kind == ImageKind::SCENE_FRAME
                          ? sim::cell_bbox(v.spec.cell, cfg.patch_k)
                          : std::array<float, 4>{0.0f, 0.0f, static_cast<float>(cfg.patch_k),
                                                 static_cast<float>(cfg.patch_k)};
        im.views.push_back(std::move(v));
      }
      rec.instance.prompt.elements.push_back(PromptElement::img(std::move(im)));
    }
  }

  const int na = r.u16();
  std::vector<sim::ActionPrim> actions;
  for (int i = 0; i < na; ++i) {
    sim::ActionPrim a;
    a.pick.row = r.u8();
    a.pick.col = r.u8();
    a.pick_rot_bin = r.u8();
    a.place.row = r.u8();
    a.place.col = r.u8();
    a.place_rot_bin = r.u8();
    actions.push_back(a);
  }
  if (r.pos != payload.size()) throw std::runtime_error("shard: corrupt record (trailing bytes)");

  rec.trajectory = rollout_trajectory(rec.instance.initial_scene, actions, cfg);
  return rec;
}

}  // namespace

std::string manifest_to_text(const Manifest& m) {
  std::ostringstream os;
  os << "format_version = " << m.format_version << "\n";
  os << "split = " << m.split_name << "\n";
  os << "generator_seed = " << m.generator_seed << "\n";
  os << "demos_per_task = " << m.demos_per_task << "\n";
  os << "board_w = " << m.sim.board_w << "\n";
  os << "board_h = " << m.sim.board_h << "\n";
  os << "patch_k = " << m.sim.patch_k << "\n";
  os << "rotations = " << m.sim.rotations << "\n";
  os << "shapes = " << m.sim.shapes << "\n";
  os << "textures = " << m.sim.textures << "\n";
  os << "tasks = ";
  for (size_t i = 0; i < m.tasks.size(); ++i) os << (i ? "," : "") << to_string(m.tasks[i]);
  os << "\n";
  os << "combos = ";
  for (size_t i = 0; i < m.combos.size(); ++i)
    os << (i ? "," : "") << m.combos[i].first << ":" << m.combos[i].second;
  os << "\n";
  return os.str();
}

Manifest manifest_from_text(const std::string& text) {
  Manifest m;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const size_t eq = line.find(" = ");
    if (eq == std::string::npos) {
      if (!line.empty()) throw std::runtime_error("manifest: malformed line '" + line + "'");
      continue;
    }
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 3);
    if (key == "format_version") m.format_version = static_cast<uint32_t>(std::stoul(val));
    else if (key == "split") m.split_name = val;
    else if (key == "generator_seed") m.generator_seed = std::stoull(val);
    else if (key == "demos_per_task") m.demos_per_task = std::stoi(val);
    else if (key == "board_w") m.sim.board_w = std::stoi(val);
    else if (key == "board_h") m.sim.board_h = std::stoi(val);
    else if (key == "patch_k") m.sim.patch_k = std::stoi(val);
    else if (key == "rotations") m.sim.rotations = std::stoi(val);
    else if (key == "shapes") m.sim.shapes = std::stoi(val);
    else if (key == "textures") m.sim.textures = std::stoi(val);
    else if (key == "tasks") {
      std::istringstream ts(val);
      std::string tok;
      while (std::getline(ts, tok, ','))
        if (!tok.empty()) m.tasks.push_back(task_type_from_string(tok));
    } else if (key == "combos") {
      std::istringstream cs(val);
      std::string tok;
      while (std::getline(cs, tok, ',')) {
        if (tok.empty()) continue;
        const size_t colon = tok.find(':');
        if (colon == std::string::npos) throw std::runtime_error("manifest: malformed combo '" + tok + "'");
        m.combos.emplace_back(std::stoi(tok.substr(0, colon)), std::stoi(tok.substr(colon + 1)));
      }
    } else {
      throw std::runtime_error("manifest: unknown key '" + key + "'");
    }
  }
  return m;
}

void write_shard(const DatasetShard& shard, const std::string& path) {
  Writer w;
  w.buf.append(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  const std::string manifest = manifest_to_text(shard.manifest);
  w.u32(static_cast<uint32_t>(manifest.size()));
  w.buf.append(manifest);
  w.u64(shard.records.size());
  for (const auto& rec : shard.records) {
    const std::string payload = encode_record(rec);
    w.u32(static_cast<uint32_t>(payload.size()));
    w.buf.append(payload);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_shard: cannot open " + path);
  os.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!os) throw std::runtime_error("write_shard: write failed for " + path);
}

DatasetShard read_shard(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_shard: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  Reader r(buf);
  r.need(sizeof(kMagic));
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("read_shard: " + path + " is not a dataset shard");
  r.pos = sizeof(kMagic);
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("read_shard: unsupported shard version " + std::to_string(version));

  DatasetShard shard;
  const uint32_t mlen = r.u32();
  r.need(mlen);
  shard.manifest = manifest_from_text(buf.substr(r.pos, mlen));
  r.pos += mlen;

  const uint64_t count = r.u64();
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t len = r.u32();
    r.need(len);
    shard.records.push_back(decode_record(buf.substr(r.pos, len), shard.manifest.sim));
    r.pos += len;
  }
  if (r.pos != buf.size()) throw std::runtime_error("read_shard: trailing bytes after last record");
  return shard;
}

}  // namespace mmp::tasks
