#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "t2i/data.hpp"
#include "t2i/gan.hpp"
#include "t2i/optim.hpp"

namespace t2i {

struct LossConfig {
  real alpha = 0.1;
  real epsilon = 1.0;
  std::array<bool, 3> contrastive_stages = {true, true, true};
  real contrastive_weight = 1.0;
  real adversarial_weight = 1.0;
  real intra_ratio = 0.5;
  // Eq.-level normalization convention. The summation over the feature
  // length has no index dependence, so both readings produce the same
  // number: per_pair_half computes 0.5 * (term); per_feature_dim would sum N
  // identical terms and divide by 2N. They are kept as one code path.
  enum class Normalization { PerPairHalf, PerFeatureDim };
  Normalization normalization = Normalization::PerPairHalf;

  void validate() const;
};

// Clamped pair loss: 0.5 * [ y * max(d, alpha)^2 + (1-y) * max(eps - d, 0)^2 ]
// with d = ||v1 - v2||.
Tensor contrastive_loss(const Tensor& v1, const Tensor& v2, int y, const LossConfig& cfg);

// Contrastive loss over both discriminator branches (features v and v_c),
// summed over the configured stages, averaged over the batch. Optional
// out-params receive the per-stage branch components.
Tensor combined_contrastive(const std::array<DiscOutputs, 3>& out_a,
                            const std::array<DiscOutputs, 3>& out_b, const std::vector<int>& y,
                            const LossConfig& cfg, std::array<real, 3>* u_components = nullptr,
                            std::array<real, 3>* c_components = nullptr);

// Per-branch adversarial pieces. The discriminator maximizes
// log D(real) + log(1 - D(fake)); the generator minimizes -log D(fake).
Tensor d_branch_pair_loss(const Tensor& real_logits, const Tensor& fake_logits);
Tensor d_mismatch_loss(const Tensor& mismatched_logits);
Tensor g_branch_loss(const Tensor& fake_logits);

struct PairBatch;

// Both Siamese branches through one shared parameter set: generate from each
// side's captions with its own noise, then discriminate at every stage.
struct SiameseOutputs {
  BatchEnc enc_a, enc_b;
  GenOutputs gen_a, gen_b;
  std::array<DiscOutputs, 3> disc_a, disc_b;
};
SiameseOutputs siamese_forward(GanModel& model, const PairBatch& batch, const Tensor& z_a,
                               const Tensor& z_b, NormMode mode);

struct PairBatch {
  std::vector<std::vector<int>> tokens_a, tokens_b;
  std::vector<int> y;  // 1 = same ground-truth image, 0 = different
  std::vector<int> image_ids_a, image_ids_b;
  std::vector<int> caption_ids_a, caption_ids_b;
  std::array<Tensor, 3> real_a;  // ground-truth images per stage resolution
  std::array<Tensor, 3> real_b;
  int size() const { return static_cast<int>(y.size()); }
};

// Draws pair batches from the training split: intra pairs take two distinct
// captions of one scene, inter pairs take captions of two distinct scenes.
// Scenes are used without replacement within a batch.
class PairSampler {
 public:
  explicit PairSampler(const Dataset& ds);
  PairBatch sample(int batch_pairs, real intra_ratio, Rng& rng) const;

 private:
  const Dataset* ds_;
};

struct LossReport {
  std::int64_t step = 0;
  std::array<real, 3> d_adv{};     // per-stage adversarial D losses
  std::array<real, 3> g_adv{};     // per-stage adversarial G losses
  std::array<real, 3> contr_u{};   // per-stage contrastive, unconditional feats
  std::array<real, 3> contr_c{};   // per-stage contrastive, conditioned feats
  real d_adv_total = 0;
  real g_adv_total = 0;
  real contr_total = 0;

  bool finite() const;
  static std::string csv_header();
  std::string csv_row() const;
};

struct TrainConfig {
  LossConfig loss;
  int batch_pairs = 8;
  real lr = 2e-4;
  real beta1 = 0.5;
  real beta2 = 0.999;
  int epochs = 2;
  std::uint64_t seed = 1;
  bool train_encoder = false;  // encoder frozen by default
  bool debug_checks = false;
  int checkpoint_interval = 0;  // steps; 0 = only initial and final
};

// Owns the parameter store, the two optimizers, and the RNG streams; runs
// the alternating D/G updates with the Siamese contrastive terms.
class Trainer {
 public:
  Trainer(GanModel& model, const Dataset& ds, const TrainConfig& cfg);

  // One D update followed by one G update on a sampled batch.
  LossReport step();
  // Same, on a caller-provided batch with caller-provided noise.
  LossReport train_step(const PairBatch& batch, const Tensor& z_a, const Tensor& z_b,
                        bool update_d = true, bool update_g = true);
  // Discriminator-only update against fixed fakes; used by overfit checks.
  LossReport d_overfit_step(const PairBatch& batch, const Tensor& z_a, const Tensor& z_b);

  PairBatch sample_batch();
  Tensor draw_noise(int n);

  // step counter of completed train steps
  std::int64_t step_count() const { return step_; }
  ParamStore& params() { return store_; }
  GanModel& model() { return *model_; }
  const Dataset& dataset() const { return *ds_; }
  const TrainConfig& config() const { return cfg_; }

  Checkpoint make_checkpoint(std::uint64_t config_hash) const;
  void restore(const Checkpoint& ckpt);

  // Runs `epochs * steps_per_epoch()` steps, invoking the callbacks.
  using StepCallback = std::function<void(const LossReport&)>;
  using CheckpointCallback = std::function<void(std::int64_t step)>;
  void train_loop(int epochs, const StepCallback& on_step, const CheckpointCallback& on_ckpt);
  int steps_per_epoch() const;

 private:
  LossReport run_step(const PairBatch& batch, const Tensor& z_a, const Tensor& z_b, bool update_d,
                      bool update_g);

  GanModel* model_;
  const Dataset* ds_;
  TrainConfig cfg_;
  ParamStore store_;
  std::unique_ptr<Adam> opt_g_;
  std::unique_ptr<Adam> opt_d_;
  PairSampler sampler_;
  Rng data_rng_, noise_rng_;
  std::int64_t step_ = 0;
};

}  // namespace t2i
