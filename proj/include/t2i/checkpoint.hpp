#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "t2i/tensor.hpp"

namespace t2i {

// Registry of named tensors. Model components register their parameters and
// buffers here; the optimizer, checkpoint writer, and the parameter identity
// checks all iterate it in registration order.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;  // handle shares storage with the owning module
    bool trainable;
  };

  Tensor& add(const std::string& name, const Tensor& t, bool trainable = true);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Tensor& get(const std::string& name);
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& mutable_entries() { return entries_; }

  std::vector<Entry*> trainable_entries();
  // Entries whose name starts with `prefix`.
  std::vector<Entry*> matching(const std::string& prefix);

  void zero_grads();
  // Rounds every tensor through 32-bit floats so the in-memory state is
  // exactly what the checkpoint format stores.
  void quantize_f32();

  std::int64_t total_elements() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

void quantize_f32(std::vector<real>& values);

// Versioned binary container: named f32 tensors plus named byte blobs
// (RNG states, vocabulary). Writing is deterministic; loading a payload and
// saving it again reproduces the bytes exactly.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::uint64_t config_hash = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::vector<std::pair<std::string, std::string>> blobs;

  bool has_tensor(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;
  bool has_blob(const std::string& name) const;
  const std::string& blob(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies every store entry into `ckpt` (quantized to f32 losslessly only if
// the store was quantized beforehand, which the trainer guarantees).
void store_to_checkpoint(const ParamStore& store, Checkpoint* ckpt, const std::string& prefix = "");
// Loads matching tensors back; missing or shape-mismatched names are errors.
void checkpoint_to_store(const Checkpoint& ckpt, ParamStore* store, const std::string& prefix = "");

}  // namespace t2i
