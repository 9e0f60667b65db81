#include "model/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mmp::model {

namespace {

constexpr char kMagic[8] = {'M', 'M', 'P', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>(v >> (8 * i)));
}
void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>(v >> (8 * i)));
}
void put_str(std::string& buf, const std::string& s) {
  put_u32(buf, static_cast<uint32_t>(s.size()));
  buf.append(s);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  void need(size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
    return v;
  }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const Policy& policy, const CheckpointMeta& meta, const std::string& path) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32(buf, kVersion);
  put_str(buf, policy_config_to_text(policy.config()));

  const auto& words = policy.vocab().words();
  put_u32(buf, static_cast<uint32_t>(words.size()));
  for (const auto& w : words) put_str(buf, w);

  put_u64(buf, policy.init_seed());
  put_str(buf, meta.phase);
  put_u64(buf, static_cast<uint64_t>(meta.step));
  put_u64(buf, meta.seed);
  put_str(buf, meta.manifest_text);

  const auto& ps = policy.params();
  put_u32(buf, static_cast<uint32_t>(ps.count()));
  for (int s = 0; s < ps.count(); ++s) {
    const auto& t = ps.at(s);
    put_str(buf, ps.name(s));
    put_u32(buf, static_cast<uint32_t>(t.rows()));
    put_u32(buf, static_cast<uint32_t>(t.cols()));
    const size_t bytes = t.values.size() * sizeof(float);
    const size_t off = buf.size();
    buf.resize(off + bytes);
    std::memcpy(buf.data() + off, t.values.data(), bytes);
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Policy load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  const std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  Reader r{buf};
  r.need(sizeof(kMagic));
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: " + path + " is not a policy checkpoint");
  r.pos = sizeof(kMagic);
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported checkpoint version " + std::to_string(version));

  const PolicyConfig cfg = policy_config_from_text(r.str());
  const uint32_t n_words = r.u32();
  std::vector<std::string> words;
  for (uint32_t i = 0; i < n_words; ++i) words.push_back(r.str());

  const uint64_t init_seed = r.u64();
  CheckpointMeta meta;
  meta.phase = r.str();
  meta.step = static_cast<int64_t>(r.u64());
  meta.seed = r.u64();
  meta.manifest_text = r.str();

  Policy policy(cfg, Vocabulary::from_words(std::move(words)), init_seed);
  auto& ps = policy.params();
  const uint32_t n_params = r.u32();
  if (static_cast<int>(n_params) != ps.count())
    throw std::runtime_error("load_checkpoint: parameter count mismatch");
  for (uint32_t i = 0; i < n_params; ++i) {
    const std::string name = r.str();
    const uint32_t rows = r.u32();
    const uint32_t cols = r.u32();
    if (!ps.has(name)) throw std::runtime_error("load_checkpoint: unknown parameter '" + name + "'");
    auto& t = ps.at(name);
    if (t.rows() != static_cast<int>(rows) || t.cols() != static_cast<int>(cols))
      throw std::runtime_error("load_checkpoint: shape mismatch for '" + name + "'");
    const size_t bytes = t.values.size() * sizeof(float);
    r.need(bytes);
    std::memcpy(t.values.data(), buf.data() + r.pos, bytes);
    r.pos += bytes;
  }
  if (r.pos != buf.size()) throw std::runtime_error("load_checkpoint: trailing bytes");
  if (meta_out != nullptr) *meta_out = meta;
  return policy;
}

}  // namespace mmp::model
