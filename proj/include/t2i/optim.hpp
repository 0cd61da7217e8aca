#pragma once

#include <string>
#include <vector>

#include "t2i/checkpoint.hpp"
#include "t2i/tensor.hpp"

namespace t2i {

// Gradient descent with adaptive moments. After every step the parameters
// and both moment buffers are rounded through 32-bit floats, so a checkpoint
// written between steps captures the training state exactly.
class Adam {
 public:
  struct Config {
    real lr = 2e-4;
    real beta1 = 0.5;
    real beta2 = 0.999;
    real eps = 1e-8;
  };

  Adam(std::vector<ParamStore::Entry*> params, Config cfg);
  // Convenience: every trainable entry in the store.
  Adam(ParamStore& store, Config cfg);

  void step();
  void zero_grads();
  std::int64_t step_count() const { return t_; }
  std::size_t slot_count() const { return slots_.size(); }

  void to_checkpoint(Checkpoint* ckpt, const std::string& prefix) const;
  void from_checkpoint(const Checkpoint& ckpt, const std::string& prefix);

 private:
  struct Slot {
    std::string name;
    Tensor param;  // shares storage and grad with the module's tensor
    std::vector<real> m, v;
  };
  std::vector<Slot> slots_;
  Config cfg_;
  std::int64_t t_ = 0;
};

}  // namespace t2i
