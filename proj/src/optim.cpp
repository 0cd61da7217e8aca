#include "t2i/optim.hpp"

#include <cmath>

namespace t2i {

Adam::Adam(std::vector<ParamStore::Entry*> params, Config cfg) : cfg_(cfg) {
  for (auto* e : params) {
    require(e->trainable, "Adam given non-trainable parameter: " + e->name);
    Slot s;
    s.name = e->name;
    s.param = e->tensor;
    s.m.assign(static_cast<std::size_t>(e->tensor.numel()), 0.0);
    s.v.assign(static_cast<std::size_t>(e->tensor.numel()), 0.0);
    slots_.push_back(std::move(s));
  }
}

Adam::Adam(ParamStore& store, Config cfg) : Adam(store.trainable_entries(), cfg) {}

void Adam::step() {
  ++t_;
  real bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<real>(t_));
  real bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<real>(t_));
  for (auto& s : slots_) {
    const std::vector<real>& g = s.param.grad();
    real* p = s.param.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      real mhat = s.m[i] / bc1;
      real vhat = s.v[i] / bc2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    quantize_f32(s.param.values());
    quantize_f32(s.m);
    quantize_f32(s.v);
  }
}

void Adam::zero_grads() {
  for (auto& s : slots_) s.param.zero_grad();
}

void Adam::to_checkpoint(Checkpoint* ckpt, const std::string& prefix) const {
  ckpt->blobs.emplace_back(prefix + ".t", std::to_string(t_));
  for (const auto& s : slots_) {
    ckpt->tensors.emplace_back(prefix + ".m." + s.name, Tensor(s.param.shape(), s.m));
    ckpt->tensors.emplace_back(prefix + ".v." + s.name, Tensor(s.param.shape(), s.v));
  }
}

void Adam::from_checkpoint(const Checkpoint& ckpt, const std::string& prefix) {
  t_ = std::stoll(ckpt.blob(prefix + ".t"));
  for (auto& s : slots_) {
    const Tensor& m = ckpt.tensor(prefix + ".m." + s.name);
    const Tensor& v = ckpt.tensor(prefix + ".v." + s.name);
    require(m.numel() == static_cast<std::int64_t>(s.m.size()), "optimizer state size mismatch");
    s.m.assign(m.data(), m.data() + m.numel());
    s.v.assign(v.data(), v.data() + v.numel());
  }
}

}  // namespace t2i
