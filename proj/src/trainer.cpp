#include "t2i/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace t2i {

void LossConfig::validate() const {
  require(alpha > 0 && alpha < epsilon, "loss config requires 0 < alpha < epsilon");
  require(contrastive_weight >= 0 && adversarial_weight >= 0, "loss weights must be non-negative");
  require(intra_ratio >= 0 && intra_ratio <= 1, "intra_ratio must lie in [0, 1]");
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Tensor contrastive_loss(const Tensor& v1, const Tensor& v2, int y, const LossConfig& cfg) {
  Tensor d = l2_distance(v1, v2);
  Tensor term;
  if (y == 1) {
    // max(d, alpha) = relu(d - alpha) + alpha
    term = add_scalar(relu(add_scalar(d, -cfg.alpha)), cfg.alpha);
  } else {
    // max(eps - d, 0)
    term = relu(neg(add_scalar(d, -cfg.epsilon)));
  }
  return scale(square(term), 0.5);
}

Tensor combined_contrastive(const std::array<DiscOutputs, 3>& out_a,
                            const std::array<DiscOutputs, 3>& out_b, const std::vector<int>& y,
                            const LossConfig& cfg, std::array<real, 3>* u_components,
                            std::array<real, 3>* c_components) {
  int n = static_cast<int>(y.size());
  require(n >= 1, "combined_contrastive needs at least one pair");
  Tensor total = Tensor::scalar(0.0);
  for (int s = 0; s < 3; ++s) {
    auto su = static_cast<std::size_t>(s);
    if (!cfg.contrastive_stages[su]) continue;
    Tensor stage_u = Tensor::scalar(0.0);
    Tensor stage_c = Tensor::scalar(0.0);
    for (int i = 0; i < n; ++i) {
      stage_u = add(stage_u, contrastive_loss(select0(out_a[su].feat_u, i),
                                              select0(out_b[su].feat_u, i),
                                              y[static_cast<std::size_t>(i)], cfg));
      stage_c = add(stage_c, contrastive_loss(select0(out_a[su].feat_c, i),
                                              select0(out_b[su].feat_c, i),
                                              y[static_cast<std::size_t>(i)], cfg));
    }
    stage_u = scale(stage_u, 1.0 / static_cast<real>(n));
    stage_c = scale(stage_c, 1.0 / static_cast<real>(n));
    if (u_components) (*u_components)[su] = stage_u.value();
    if (c_components) (*c_components)[su] = stage_c.value();
    total = add(total, add(stage_u, stage_c));
  }
  return total;
}

Tensor d_branch_pair_loss(const Tensor& real_logits, const Tensor& fake_logits) {
  std::vector<real> ones(static_cast<std::size_t>(real_logits.numel()), 1.0);
  std::vector<real> zeros(static_cast<std::size_t>(fake_logits.numel()), 0.0);
  return add(bce_with_logits(real_logits, ones), bce_with_logits(fake_logits, zeros));
}

Tensor d_mismatch_loss(const Tensor& mismatched_logits) {
  std::vector<real> zeros(static_cast<std::size_t>(mismatched_logits.numel()), 0.0);
  return bce_with_logits(mismatched_logits, zeros);
}

Tensor g_branch_loss(const Tensor& fake_logits) {
  std::vector<real> ones(static_cast<std::size_t>(fake_logits.numel()), 1.0);
  return bce_with_logits(fake_logits, ones);
}

SiameseOutputs siamese_forward(GanModel& model, const PairBatch& batch, const Tensor& z_a,
                               const Tensor& z_b, NormMode mode) {
  SiameseOutputs out;
  out.enc_a = model.encode_batch(batch.tokens_a);
  out.enc_b = model.encode_batch(batch.tokens_b);
  out.gen_a = model.generate(z_a, out.enc_a, mode);
  out.gen_b = model.generate(z_b, out.enc_b, mode);
  for (int s = 0; s < 3; ++s) {
    auto su = static_cast<std::size_t>(s);
    out.disc_a[su] = model.discriminate(s, out.gen_a.images[su], out.enc_a.s_bar);
    out.disc_b[su] = model.discriminate(s, out.gen_b.images[su], out.enc_b.s_bar);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pair sampling
// ---------------------------------------------------------------------------

PairSampler::PairSampler(const Dataset& ds) : ds_(&ds) {
  require(ds.train_indices.size() >= 2, "pair sampler needs at least two training scenes");
  for (auto i : ds.train_indices)
    require(ds.scenes[i].captions.size() >= 2, "pair sampler needs >= 2 captions per scene");
}

PairBatch PairSampler::sample(int batch_pairs, real intra_ratio, Rng& rng) const {
  require(batch_pairs >= 1, "batch must contain at least one pair");
  int n_intra = static_cast<int>(std::llround(intra_ratio * batch_pairs));
  int n_inter = batch_pairs - n_intra;
  std::size_t scenes_needed =
      static_cast<std::size_t>(n_intra) + 2 * static_cast<std::size_t>(n_inter);
  require(scenes_needed <= ds_->train_indices.size(),
          "dataset too small: batch needs " + std::to_string(scenes_needed) +
              " distinct scenes, train split has " + std::to_string(ds_->train_indices.size()));

  // Scenes drawn without replacement within the batch.
  std::vector<std::size_t> pool = ds_->train_indices;
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
  std::size_t next = 0;

  PairBatch batch;
  auto push_side = [&](const Scene& scene, int caption_id, bool side_a) {
    auto& tokens = side_a ? batch.tokens_a : batch.tokens_b;
    auto& ids = side_a ? batch.image_ids_a : batch.image_ids_b;
    auto& cap_ids = side_a ? batch.caption_ids_a : batch.caption_ids_b;
    tokens.push_back(tokenize(scene.captions[static_cast<std::size_t>(caption_id)], ds_->vocab));
    ids.push_back(scene.id);
    cap_ids.push_back(caption_id);
  };

  std::vector<const Scene*> scenes_a, scenes_b;
  for (int p = 0; p < batch_pairs; ++p) {
    if (p < n_intra) {
      const Scene& scene = ds_->scenes[pool[next++]];
      int k = static_cast<int>(scene.captions.size());
      int c1 = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      int c2 = static_cast<int>(rng.below(static_cast<std::uint64_t>(k - 1)));
      if (c2 >= c1) ++c2;  // distinct captions of the same image
      batch.y.push_back(1);
      push_side(scene, c1, true);
      push_side(scene, c2, false);
      scenes_a.push_back(&scene);
      scenes_b.push_back(&scene);
    } else {
      const Scene& sa = ds_->scenes[pool[next++]];
      const Scene& sb = ds_->scenes[pool[next++]];
      batch.y.push_back(0);
      push_side(sa, static_cast<int>(rng.below(sa.captions.size())), true);
      push_side(sb, static_cast<int>(rng.below(sb.captions.size())), false);
      scenes_a.push_back(&sa);
      scenes_b.push_back(&sb);
    }
  }

  for (int r = 0; r < 3; ++r) {
    std::vector<Tensor> rows_a, rows_b;
    int res = kResolutions[static_cast<std::size_t>(r)];
    for (int p = 0; p < batch_pairs; ++p) {
      rows_a.push_back(reshape(scenes_a[static_cast<std::size_t>(p)]->images[static_cast<std::size_t>(r)],
                               {1, 3, res, res}));
      rows_b.push_back(reshape(scenes_b[static_cast<std::size_t>(p)]->images[static_cast<std::size_t>(r)],
                               {1, 3, res, res}));
    }
    batch.real_a[static_cast<std::size_t>(r)] = rows_a.size() == 1 ? rows_a[0] : concat(rows_a, 0);
    batch.real_b[static_cast<std::size_t>(r)] = rows_b.size() == 1 ? rows_b[0] : concat(rows_b, 0);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// LossReport
// ---------------------------------------------------------------------------

bool LossReport::finite() const {
  for (int s = 0; s < 3; ++s) {
    auto su = static_cast<std::size_t>(s);
    if (!std::isfinite(d_adv[su]) || !std::isfinite(g_adv[su]) || !std::isfinite(contr_u[su]) ||
        !std::isfinite(contr_c[su]))
      return false;
  }
  return std::isfinite(d_adv_total) && std::isfinite(g_adv_total) && std::isfinite(contr_total);
}

std::string LossReport::csv_header() {
  return "step,d_adv_total,g_adv_total,contr_total,"
         "d_adv0,d_adv1,d_adv2,g_adv0,g_adv1,g_adv2,"
         "contr_u0,contr_u1,contr_u2,contr_c0,contr_c1,contr_c2";
}

std::string LossReport::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << step << ',' << d_adv_total << ',' << g_adv_total << ',' << contr_total;
  for (int s = 0; s < 3; ++s) os << ',' << d_adv[static_cast<std::size_t>(s)];
  for (int s = 0; s < 3; ++s) os << ',' << g_adv[static_cast<std::size_t>(s)];
  for (int s = 0; s < 3; ++s) os << ',' << contr_u[static_cast<std::size_t>(s)];
  for (int s = 0; s < 3; ++s) os << ',' << contr_c[static_cast<std::size_t>(s)];
  return os.str();
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(GanModel& model, const Dataset& ds, const TrainConfig& cfg)
    : model_(&model), ds_(&ds), cfg_(cfg), sampler_(ds) {
  cfg_.loss.validate();
  require(cfg_.batch_pairs >= 2, "training needs at least two pairs per batch");
  model_->register_params(store_);
  store_.quantize_f32();

  Adam::Config acfg;
  acfg.lr = cfg_.lr;
  acfg.beta1 = cfg_.beta1;
  acfg.beta2 = cfg_.beta2;

  std::vector<ParamStore::Entry*> g_params;
  for (auto* e : store_.matching("g."))
    if (e->trainable) g_params.push_back(e);
  if (cfg_.train_encoder)
    for (auto* e : store_.matching("enc."))
      if (e->trainable) g_params.push_back(e);
  std::vector<ParamStore::Entry*> d_params;
  for (const char* p : {"d0.", "d1.", "d2."})
    for (auto* e : store_.matching(p))
      if (e->trainable) d_params.push_back(e);

  opt_g_ = std::make_unique<Adam>(g_params, acfg);
  opt_d_ = std::make_unique<Adam>(d_params, acfg);

  Rng root(cfg_.seed);
  data_rng_ = root.fork(1);
  noise_rng_ = root.fork(2);
}

PairBatch Trainer::sample_batch() {
  return sampler_.sample(cfg_.batch_pairs, cfg_.loss.intra_ratio, data_rng_);
}

Tensor Trainer::draw_noise(int n) { return Tensor::randn({n, model_->cfg.z_dim}, noise_rng_); }

LossReport Trainer::step() {
  PairBatch batch = sample_batch();
  Tensor z_a = draw_noise(batch.size());
  Tensor z_b = draw_noise(batch.size());
  return train_step(batch, z_a, z_b);
}

LossReport Trainer::train_step(const PairBatch& batch, const Tensor& z_a, const Tensor& z_b,
                               bool update_d, bool update_g) {
  return run_step(batch, z_a, z_b, update_d, update_g);
}

LossReport Trainer::d_overfit_step(const PairBatch& batch, const Tensor& z_a, const Tensor& z_b) {
  return run_step(batch, z_a, z_b, /*update_d=*/true, /*update_g=*/false);
}

namespace {

// Rows rotated by one: row i of the result is row (i+1) mod N of x.
Tensor roll_rows(const Tensor& x) {
  int n = x.dim(0);
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    rows.push_back(reshape(select0(x, (i + 1) % n), {1, x.dim(1)}));
  return rows.size() == 1 ? rows[0] : concat(rows, 0);
}

}  // namespace

LossReport Trainer::run_step(const PairBatch& batch, const Tensor& z_a, const Tensor& z_b,
                             bool update_d, bool update_g) {
  bool saved_checks = debug_checks();
  set_debug_checks(cfg_.debug_checks);

  int n = batch.size();
  require(n >= 2, "train step needs at least two pairs for mismatched captions");
  LossReport report;
  report.step = step_ + 1;

  // Frozen-encoder captions become constants; re-encoded on tape only when
  // the encoder itself is being trained.
  BatchEnc enc_a = model_->encode_batch(batch.tokens_a);
  BatchEnc enc_b = model_->encode_batch(batch.tokens_b);

  // Fake images for the D update carry no generator graph.
  GenOutputs fake_a = model_->generate(z_a, enc_a, NormMode::Train);
  GenOutputs fake_b = model_->generate(z_b, enc_b, NormMode::Train);

  if (update_d) {
    Tape tape;
    TapeScope scope(tape);
    std::array<DiscOutputs, 3> df_a, df_b;
    Tensor d_loss = Tensor::scalar(0.0);
    for (int s = 0; s < 3; ++s) {
      auto su = static_cast<std::size_t>(s);
      const Discriminator& disc = model_->discs[su];
      Tensor trunk_real_a = disc.trunk(batch.real_a[su]);
      Tensor trunk_real_b = disc.trunk(batch.real_b[su]);
      DiscOutputs dr_a = disc.heads(trunk_real_a, enc_a.s_bar);
      DiscOutputs dr_b = disc.heads(trunk_real_b, enc_b.s_bar);
      df_a[su] = disc.forward(fake_a.images[su], enc_a.s_bar);
      df_b[su] = disc.forward(fake_b.images[su], enc_b.s_bar);
      CondOut dm_a = disc.cond_head(trunk_real_a, roll_rows(enc_a.s_bar));
      CondOut dm_b = disc.cond_head(trunk_real_b, roll_rows(enc_b.s_bar));

      Tensor stage = add(d_branch_pair_loss(dr_a.logit_u, df_a[su].logit_u),
                         d_branch_pair_loss(dr_a.logit_c, df_a[su].logit_c));
      stage = add(stage, d_mismatch_loss(dm_a.logit));
      Tensor stage_b = add(d_branch_pair_loss(dr_b.logit_u, df_b[su].logit_u),
                           d_branch_pair_loss(dr_b.logit_c, df_b[su].logit_c));
      stage_b = add(stage_b, d_mismatch_loss(dm_b.logit));
      Tensor stage_mean = scale(add(stage, stage_b), 0.5);  // average the two branches
      report.d_adv[su] = stage_mean.value();
      d_loss = add(d_loss, stage_mean);
    }
    Tensor contr = combined_contrastive(df_a, df_b, batch.y, cfg_.loss);
    Tensor total =
        add(scale(d_loss, cfg_.loss.adversarial_weight), scale(contr, cfg_.loss.contrastive_weight));
    store_.zero_grads();
    tape.backward(total);
    opt_d_->step();
    for (int s = 0; s < 3; ++s) {
      auto su = static_cast<std::size_t>(s);
      report.d_adv_total += report.d_adv[su];
    }
  }

  if (update_g) {
    Tape tape;
    TapeScope scope(tape);
    // The frozen-encoder case reuses the off-tape encodings; re-encoding on
    // tape is only needed when encoder gradients are wanted.
    SiameseOutputs fwd;
    if (cfg_.train_encoder) {
      fwd = siamese_forward(*model_, batch, z_a, z_b, NormMode::Train);
    } else {
      fwd.enc_a = enc_a;
      fwd.enc_b = enc_b;
      fwd.gen_a = model_->generate(z_a, enc_a, NormMode::Train);
      fwd.gen_b = model_->generate(z_b, enc_b, NormMode::Train);
      for (int s = 0; s < 3; ++s) {
        auto su = static_cast<std::size_t>(s);
        fwd.disc_a[su] = model_->discriminate(s, fwd.gen_a.images[su], enc_a.s_bar);
        fwd.disc_b[su] = model_->discriminate(s, fwd.gen_b.images[su], enc_b.s_bar);
      }
    }
    const auto& dg_a = fwd.disc_a;
    const auto& dg_b = fwd.disc_b;
    Tensor g_loss = Tensor::scalar(0.0);
    for (int s = 0; s < 3; ++s) {
      auto su = static_cast<std::size_t>(s);
      Tensor stage = add(add(g_branch_loss(dg_a[su].logit_u), g_branch_loss(dg_a[su].logit_c)),
                         add(g_branch_loss(dg_b[su].logit_u), g_branch_loss(dg_b[su].logit_c)));
      Tensor stage_mean = scale(stage, 0.5);
      report.g_adv[su] = stage_mean.value();
      g_loss = add(g_loss, stage_mean);
    }
    Tensor contr = combined_contrastive(dg_a, dg_b, batch.y, cfg_.loss, &report.contr_u,
                                        &report.contr_c);
    report.contr_total = contr.value();
    Tensor total =
        add(scale(g_loss, cfg_.loss.adversarial_weight), scale(contr, cfg_.loss.contrastive_weight));
    store_.zero_grads();
    tape.backward(total);
    opt_g_->step();
    for (int s = 0; s < 3; ++s) report.g_adv_total += report.g_adv[static_cast<std::size_t>(s)];
  }

  // Round every persistent tensor (including running stats) to f32 so the
  // training state equals its checkpoint image.
  store_.quantize_f32();
  ++step_;
  report.step = step_;

  set_debug_checks(saved_checks);
  if (!report.finite()) fail("non-finite loss at step " + std::to_string(step_));
  return report;
}

int Trainer::steps_per_epoch() const {
  int per = static_cast<int>(ds_->train_indices.size()) / cfg_.batch_pairs;
  return std::max(1, per);
}

void Trainer::train_loop(int epochs, const StepCallback& on_step,
                         const CheckpointCallback& on_ckpt) {
  require(epochs >= 0, "epochs must be non-negative");
  if (on_ckpt) on_ckpt(step_);  // initial checkpoint
  // `epochs` is a total budget: a resumed run finishes the original
  // schedule instead of extending it.
  std::int64_t target = static_cast<std::int64_t>(epochs) * steps_per_epoch();
  while (step_ < target) {
    LossReport report = step();
    if (on_step) on_step(report);
    if (cfg_.checkpoint_interval > 0 && step_ % cfg_.checkpoint_interval == 0 && on_ckpt)
      on_ckpt(step_);
  }
  if (on_ckpt && !(cfg_.checkpoint_interval > 0 && step_ % cfg_.checkpoint_interval == 0) &&
      step_ > 0)
    on_ckpt(step_);  // final checkpoint
}

Checkpoint Trainer::make_checkpoint(std::uint64_t config_hash) const {
  Checkpoint ckpt;
  ckpt.config_hash = config_hash;
  store_to_checkpoint(store_, &ckpt);
  opt_g_->to_checkpoint(&ckpt, "opt_g");
  opt_d_->to_checkpoint(&ckpt, "opt_d");
  ckpt.blobs.emplace_back("rng.data", data_rng_.serialize());
  ckpt.blobs.emplace_back("rng.noise", noise_rng_.serialize());
  ckpt.blobs.emplace_back("trainer.step", std::to_string(step_));
  ckpt.blobs.emplace_back("vocab", ds_->vocab.serialize());
  ckpt.blobs.emplace_back("scbn_mode", to_string(model_->cfg.scbn_mode));
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  checkpoint_to_store(ckpt, &store_);
  opt_g_->from_checkpoint(ckpt, "opt_g");
  opt_d_->from_checkpoint(ckpt, "opt_d");
  data_rng_.deserialize(ckpt.blob("rng.data"));
  noise_rng_.deserialize(ckpt.blob("rng.noise"));
  step_ = std::stoll(ckpt.blob("trainer.step"));
}

}  // namespace t2i
