#pragma once

#include <fstream>
#include <map>

#include "afford/tensor.hpp"

namespace afford {

// Self-describing checkpoint container: payload id + config hash + dependency
// hash + string metadata + named float32 blobs. Loading verifies the magic,
// format version and payload id; composition points verify dependency hashes.

inline constexpr uint32_t kCheckpointMagic = 0x4146434bu;  // "KCFA" little-endian
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string payload;  // vqvae | prior | cvae | policy
  uint64_t config_hash = 0;
  uint64_t dep_hash = 0;  // identity hash of the checkpoint this one was trained against
  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor<float>> blobs;
  uint64_t file_hash = 0;  // identity of this checkpoint (filled on save/load)

  const std::string& meta_at(const std::string& key) const {
    auto it = meta.find(key);
    check(it != meta.end(), "checkpoint missing metadata key: " + key);
    return it->second;
  }
  int meta_int(const std::string& key) const { return std::stoi(meta_at(key)); }
};

namespace ckptdetail {

inline void put_u32(std::string& b, uint32_t v) { b.append(reinterpret_cast<const char*>(&v), 4); }
inline void put_u64(std::string& b, uint64_t v) { b.append(reinterpret_cast<const char*>(&v), 8); }
inline void put_str(std::string& b, const std::string& s) {
  put_u64(b, s.size());
  b.append(s);
}

struct Reader {
  const std::string& b;
  size_t pos = 0;
  explicit Reader(const std::string& buf) : b(buf) {}
  void need(size_t n) const { check(pos + n <= b.size(), "checkpoint: truncated file"); }
  uint32_t u32() {
    need(4);
    uint32_t v;
    std::memcpy(&v, b.data() + pos, 4);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v;
    std::memcpy(&v, b.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string str() {
    uint64_t n = u64();
    need(n);
    std::string s = b.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace ckptdetail

inline void save_checkpoint(const std::string& path, Checkpoint& ck) {
  using namespace ckptdetail;
  std::string buf;
  put_u32(buf, kCheckpointMagic);
  put_u32(buf, kCheckpointVersion);
  put_str(buf, ck.payload);
  put_u64(buf, ck.config_hash);
  put_u64(buf, ck.dep_hash);
  put_u64(buf, ck.meta.size());
  for (const auto& [k, v] : ck.meta) {
    put_str(buf, k);
    put_str(buf, v);
  }
  put_u64(buf, ck.blobs.size());
  for (const auto& [name, t] : ck.blobs) {
    put_str(buf, name);
    put_u32(buf, uint32_t(t.shape.size()));
    for (int d : t.shape) put_u32(buf, uint32_t(d));
    buf.append(reinterpret_cast<const char*>(t.data()), t.v.size() * sizeof(float));
  }
  ck.file_hash = fnv1a64(buf.data(), buf.size());
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "checkpoint: cannot write " + path);
  f.write(buf.data(), std::streamsize(buf.size()));
  check(f.good(), "checkpoint: write failed " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  using namespace ckptdetail;
  Reader r(buf);
  check(r.u32() == kCheckpointMagic, "checkpoint: bad magic in " + path);
  uint32_t ver = r.u32();
  check(ver == kCheckpointVersion, "checkpoint: unsupported format version " +
                                       std::to_string(ver) + " in " + path);
  Checkpoint ck;
  ck.payload = r.str();
  ck.config_hash = r.u64();
  ck.dep_hash = r.u64();
  uint64_t nmeta = r.u64();
  for (uint64_t i = 0; i < nmeta; ++i) {
    std::string k = r.str();
    ck.meta[k] = r.str();
  }
  uint64_t nblobs = r.u64();
  for (uint64_t i = 0; i < nblobs; ++i) {
    std::string name = r.str();
    uint32_t nd = r.u32();
    std::vector<int> shape;
    for (uint32_t d = 0; d < nd; ++d) shape.push_back(int(r.u32()));
    Tensor<float> t(shape);
    size_t bytes = size_t(t.numel()) * sizeof(float);
    r.need(bytes);
    std::memcpy(t.data(), buf.data() + r.pos, bytes);
    r.pos += bytes;
    ck.blobs[name] = std::move(t);
  }
  ck.file_hash = fnv1a64(buf.data(), buf.size());
  return ck;
}

inline Checkpoint load_checkpoint_as(const std::string& path, const std::string& payload) {
  Checkpoint ck = load_checkpoint(path);
  check(ck.payload == payload, "checkpoint payload mismatch: expected '" + payload +
                                   "', found '" + ck.payload + "' in " + path);
  return ck;
}

}  // namespace afford
