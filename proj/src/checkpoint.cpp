#include "t2i/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace t2i {

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, const Tensor& t, bool trainable) {
  require(!has(name), "duplicate parameter name: " + name);
  require(t.defined(), "undefined tensor registered as " + name);
  entries_.push_back(Entry{name, t, trainable});
  if (trainable) entries_.back().tensor.set_trainable();
  index_[name] = entries_.size() - 1;
  return entries_.back().tensor;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  require(it != index_.end(), "unknown parameter: " + name);
  return entries_[it->second].tensor;
}

std::vector<ParamStore::Entry*> ParamStore::trainable_entries() {
  std::vector<Entry*> out;
  for (auto& e : entries_)
    if (e.trainable) out.push_back(&e);
  return out;
}

std::vector<ParamStore::Entry*> ParamStore::matching(const std::string& prefix) {
  std::vector<Entry*> out;
  for (auto& e : entries_)
    if (e.name.rfind(prefix, 0) == 0) out.push_back(&e);
  return out;
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void quantize_f32(std::vector<real>& values) {
  for (real& v : values) v = static_cast<real>(static_cast<float>(v));
}

void ParamStore::quantize_f32() {
  for (auto& e : entries_) t2i::quantize_f32(e.tensor.values());
}

std::int64_t ParamStore::total_elements() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

// ---------------------------------------------------------------------------
// Checkpoint container
// ---------------------------------------------------------------------------

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  fail("checkpoint is missing tensor: " + name);
}

bool Checkpoint::has_blob(const std::string& name) const {
  for (const auto& [n, b] : blobs)
    if (n == name) return true;
  return false;
}

const std::string& Checkpoint::blob(const std::string& name) const {
  for (const auto& [n, b] : blobs)
    if (n == name) return b;
  fail("checkpoint is missing blob: " + name);
}

// ---------------------------------------------------------------------------
// Binary format
//   magic "T2CK" | u32 version | u64 config_hash | u32 n_records
//   record: u8 kind (0 tensor, 1 blob) | u32 name_len | name
//     tensor: u32 ndim | i64 dims... | f32 data (little-endian)
//     blob:   u64 len  | bytes
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'T', '2', 'C', 'K'};

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(!is.fail(), "checkpoint truncated");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  auto len = read_pod<std::uint32_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  require(!is.fail(), "checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), "cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  write_pod<std::uint32_t>(os, Checkpoint::kVersion);
  write_pod<std::uint64_t>(os, ckpt.config_hash);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size() + ckpt.blobs.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    write_pod<std::uint8_t>(os, 0);
    write_string(os, name);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.ndim()));
    for (int d = 0; d < t.ndim(); ++d) write_pod<std::int64_t>(os, t.dim(d));
    for (std::int64_t i = 0; i < t.numel(); ++i)
      write_pod<float>(os, static_cast<float>(t.data()[i]));
  }
  for (const auto& [name, blob] : ckpt.blobs) {
    write_pod<std::uint8_t>(os, 1);
    write_string(os, name);
    write_pod<std::uint64_t>(os, blob.size());
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
  require(os.good(), "checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  require(!is.fail() && std::memcmp(magic, kMagic, 4) == 0, "not a checkpoint file: " + path);
  auto version = read_pod<std::uint32_t>(is);
  require(version == Checkpoint::kVersion,
          "checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
              std::to_string(Checkpoint::kVersion));
  Checkpoint ckpt;
  ckpt.config_hash = read_pod<std::uint64_t>(is);
  auto count = read_pod<std::uint32_t>(is);
  for (std::uint32_t r = 0; r < count; ++r) {
    auto kind = read_pod<std::uint8_t>(is);
    std::string name = read_string(is);
    if (kind == 0) {
      auto ndim = read_pod<std::uint32_t>(is);
      std::vector<int> shape;
      for (std::uint32_t d = 0; d < ndim; ++d)
        shape.push_back(static_cast<int>(read_pod<std::int64_t>(is)));
      Tensor t(shape);
      for (std::int64_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<real>(read_pod<float>(is));
      ckpt.tensors.emplace_back(name, std::move(t));
    } else if (kind == 1) {
      auto len = read_pod<std::uint64_t>(is);
      std::string blob(len, '\0');
      is.read(blob.data(), static_cast<std::streamsize>(len));
      require(!is.fail(), "checkpoint truncated");
      ckpt.blobs.emplace_back(name, std::move(blob));
    } else {
      fail("unknown checkpoint record kind");
    }
  }
  return ckpt;
}

void store_to_checkpoint(const ParamStore& store, Checkpoint* ckpt, const std::string& prefix) {
  // Deep copies: the checkpoint must stay frozen while training continues.
  for (const auto& e : store.entries())
    ckpt->tensors.emplace_back(prefix + e.name, e.tensor.clone());
}

void checkpoint_to_store(const Checkpoint& ckpt, ParamStore* store, const std::string& prefix) {
  for (auto& entry : store->mutable_entries()) {
    const Tensor& src = ckpt.tensor(prefix + entry.name);
    require(src.shape() == entry.tensor.shape(), "checkpoint shape mismatch for " + entry.name +
                                                     ": " + shape_str(src.shape()) + " vs " +
                                                     shape_str(entry.tensor.shape()));
    std::copy(src.data(), src.data() + src.numel(), entry.tensor.data());
  }
}

}  // namespace t2i
