#include "delip/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "delip/numerics/errors.hpp"

namespace delip {
namespace {

constexpr char kMagic[8] = {'D', 'E', 'L', 'I', 'P', 'C', 'K', 'P'};

class Writer {
public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }

  std::vector<std::uint8_t> out;
};

class Reader {
public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes(b) {}

  void need(std::size_t n) {
    if (pos + n > bytes.size()) throw ContractError("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }

  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.out.insert(w.out.end(), std::begin(kMagic), std::end(kMagic));
  w.u32(ckpt.version);
  w.u32(static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    w.str(a.name);
    w.u32(static_cast<std::uint32_t>(a.shape.size()));
    std::uint64_t count = 1;
    for (auto d : a.shape) {
      w.u64(d);
      count *= d;
    }
    if (count != a.values.size()) throw ContractError("checkpoint: array " + a.name + " has inconsistent shape");
    for (float f : a.values) w.f32(f);
  }
  return w.out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(sizeof(kMagic));
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw ContractError("checkpoint: bad magic");
  r.pos = sizeof(kMagic);
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCheckpointVersion) {
    throw ContractError("checkpoint: unsupported version " + std::to_string(c.version));
  }
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    c.meta[k] = r.str();
  }
  const std::uint32_t n_arrays = r.u32();
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    CheckpointArray a;
    a.name = r.str();
    const std::uint32_t rank = r.u32();
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(r.u64());
      count *= a.shape.back();
    }
    r.need(count * 4);
    a.values.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) a.values.push_back(r.f32());
    c.arrays.push_back(std::move(a));
  }
  if (r.pos != bytes.size()) throw ContractError("checkpoint: trailing bytes");
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ContractError("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContractError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint capture(const ParameterStore& store, std::map<std::string, std::string> meta) {
  Checkpoint c;
  c.meta = std::move(meta);
  for (const Parameter* p : store.all()) {
    CheckpointArray a;
    a.name = p->name;
    a.shape = {p->value.rows(), p->value.cols()};
    a.values.reserve(p->value.size());
    for (double v : p->value.values()) a.values.push_back(static_cast<float>(v));
    c.arrays.push_back(std::move(a));
  }
  return c;
}

void restore(ParameterStore& store, const Checkpoint& ckpt) {
  if (ckpt.arrays.size() != store.size()) {
    throw ContractError("checkpoint: holds " + std::to_string(ckpt.arrays.size()) + " arrays, model expects " +
                        std::to_string(store.size()));
  }
  for (const auto& a : ckpt.arrays) {
    Parameter& p = store.get(a.name);
    if (a.shape.size() != 2 || a.shape[0] != p.value.rows() || a.shape[1] != p.value.cols()) {
      throw ContractError("checkpoint: shape mismatch for " + a.name);
    }
    for (std::size_t i = 0; i < a.values.size(); ++i) p.value[i] = static_cast<double>(a.values[i]);
  }
}

}  // namespace delip
