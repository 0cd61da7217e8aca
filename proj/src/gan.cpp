#include "t2i/gan.hpp"

namespace t2i {

Dense::Dense(int in, int out, Rng& rng, real stdev)
    : w(Tensor::randn({in, out}, rng, stdev)), b(Tensor::zeros({out})) {}

void Dense::register_params(ParamStore& store, const std::string& prefix) {
  w = store.add(prefix + ".w", w);
  b = store.add(prefix + ".b", b);
}

Conv::Conv(int in, int out, int ksize, int stride, int pad, Rng& rng, real stdev)
    : k(Tensor::randn({out, in, ksize, ksize}, rng, stdev)),
      b(Tensor::zeros({out})),
      stride(stride),
      pad(pad) {}

void Conv::register_params(ParamStore& store, const std::string& prefix) {
  k = store.add(prefix + ".k", k);
  b = store.add(prefix + ".b", b);
}

ScbnMode scbn_mode_from_string(const std::string& s) {
  if (s == "off") return ScbnMode::Off;
  if (s == "sentence") return ScbnMode::Sentence;
  if (s == "word") return ScbnMode::Word;
  if (s == "both") return ScbnMode::Both;
  fail("unknown scbn mode: " + s + " (expected off|sentence|word|both)");
}

std::string to_string(ScbnMode mode) {
  switch (mode) {
    case ScbnMode::Off: return "off";
    case ScbnMode::Sentence: return "sentence";
    case ScbnMode::Word: return "word";
    default: return "both";
  }
}

// ---------------------------------------------------------------------------
// ScbnSite
// ---------------------------------------------------------------------------

ScbnSite::ScbnSite(int channels, ScbnMode mode, Rng& rng, int sent_dim, int word_dim)
    : bn(channels), mode(mode) {
  if (mode == ScbnMode::Sentence || mode == ScbnMode::Both)
    sent.emplace(channels, rng, sent_dim);
  if (mode == ScbnMode::Word || mode == ScbnMode::Both) word.emplace(channels, rng, word_dim);
}

Tensor ScbnSite::apply(const Tensor& x, const BatchEnc& enc, NormMode nm) {
  if (mode == ScbnMode::Off) return bn.forward(x, nm);

  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  ModulationParams mods;
  if (sent) {
    require(enc.s_bar.defined() && enc.s_bar.dim(0) == n,
            "scbn sentence cues must cover the batch");
    mods = sent->modulations(enc.s_bar);
  }
  if (word) {
    require(static_cast<int>(enc.word_feats.size()) == n,
            "scbn word cues must cover the batch");
    // Sub-region features come from the pre-normalization activation.
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      Tensor feats = reshape(select0(x, i), {c, h * w});
      Tensor fused = word->vse(feats, enc.word_feats[static_cast<std::size_t>(i)]);
      rows.push_back(reshape(fused, {1, c, h, w}));
    }
    Tensor vse_map = rows.size() == 1 ? rows[0] : concat(rows, 0);
    ModulationParams wmods = word->modulations(vse_map);
    if (mods.defined()) {
      mods.gamma_c = add(mods.gamma_c, wmods.gamma_c);
      mods.beta_c = add(mods.beta_c, wmods.beta_c);
    } else {
      mods = wmods;
    }
  }
  return bn.forward(x, nm, mods);
}

void ScbnSite::register_params(ParamStore& store, const std::string& prefix) {
  bn.register_params(store, prefix + ".bn");
  if (sent) sent->register_params(store, prefix + ".sent");
  if (word) word->register_params(store, prefix + ".word");
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

Generator::Generator(ScbnMode mode, Rng& rng, int z_dim, int sent_dim)
    : mode(mode),
      z_dim(z_dim),
      sent_dim(sent_dim),
      seed(z_dim + sent_dim, 4 * 4 * 64, rng),
      conv0(64, 32, 3, 1, 1, rng),
      norm0(32, mode, rng, sent_dim),
      rgb0(32, 3, 3, 1, 1, rng),
      sproj1(sent_dim, 32, rng),
      join1(64, 32, 3, 1, 1, rng),
      conv1(32, 16, 3, 1, 1, rng),
      norm1(16, mode, rng, sent_dim),
      rgb1(16, 3, 3, 1, 1, rng),
      sproj2(sent_dim, 16, rng),
      join2(32, 16, 3, 1, 1, rng),
      conv2(16, 8, 3, 1, 1, rng),
      norm2(8, mode, rng, sent_dim),
      rgb2(8, 3, 3, 1, 1, rng) {}

GenOutputs Generator::forward(const Tensor& z, const BatchEnc& enc, NormMode nm) {
  require(z.ndim() == 2 && z.dim(1) == z_dim,
          "generator expects z of shape [N x " + std::to_string(z_dim) + "]");
  require(enc.s_bar.ndim() == 2 && enc.s_bar.dim(1) == sent_dim && enc.s_bar.dim(0) == z.dim(0),
          "generator expects matching sentence batch");
  int n = z.dim(0);
  GenOutputs out;

  // Stage 0: dense seed, one up-sampling block to 8x8.
  Tensor h = seed.forward(concat({z, enc.s_bar}, 1));
  h = reshape(h, {n, 64, 4, 4});
  h = upsample_nearest2x(h);
  h = conv0.forward(h);
  h = relu(norm0.apply(h, enc, nm));
  out.hidden[0] = h;
  out.images[0] = tanh_op(rgb0.forward(h));

  // Stage 1: join sentence cue, refine, up-sample to 16x16.
  Tensor cue1 = broadcast_spatial(sproj1.forward(enc.s_bar), 8, 8);
  h = relu(join1.forward(concat({h, cue1}, 1)));
  h = upsample_nearest2x(h);
  h = conv1.forward(h);
  h = relu(norm1.apply(h, enc, nm));
  out.hidden[1] = h;
  out.images[1] = tanh_op(rgb1.forward(h));

  // Stage 2: join again, up-sample to 32x32.
  Tensor cue2 = broadcast_spatial(sproj2.forward(enc.s_bar), 16, 16);
  h = relu(join2.forward(concat({h, cue2}, 1)));
  h = upsample_nearest2x(h);
  h = conv2.forward(h);
  h = relu(norm2.apply(h, enc, nm));
  out.hidden[2] = h;
  out.images[2] = tanh_op(rgb2.forward(h));
  return out;
}

void Generator::register_params(ParamStore& store, const std::string& prefix) {
  seed.register_params(store, prefix + ".seed");
  conv0.register_params(store, prefix + ".conv0");
  norm0.register_params(store, prefix + ".norm0");
  rgb0.register_params(store, prefix + ".rgb0");
  sproj1.register_params(store, prefix + ".sproj1");
  join1.register_params(store, prefix + ".join1");
  conv1.register_params(store, prefix + ".conv1");
  norm1.register_params(store, prefix + ".norm1");
  rgb1.register_params(store, prefix + ".rgb1");
  sproj2.register_params(store, prefix + ".sproj2");
  join2.register_params(store, prefix + ".join2");
  conv2.register_params(store, prefix + ".conv2");
  norm2.register_params(store, prefix + ".norm2");
  rgb2.register_params(store, prefix + ".rgb2");
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

Discriminator::Discriminator(int stage, Rng& rng, int sent_dim, int feat_dim)
    : stage_(stage), sent_dim_(sent_dim) {
  require(stage >= 0 && stage <= 2, "discriminator stage must be 0, 1, or 2");
  // Down-sampling chain to a 4x4 map, widths 32 -> 64 -> 128; earlier stages
  // swap strided convs for stride-1 refinements so the output size matches.
  if (stage == 0) {
    trunk_.emplace_back(3, 32, 4, 2, 1, rng);
    trunk_.emplace_back(32, 64, 3, 1, 1, rng);
    trunk_.emplace_back(64, 128, 3, 1, 1, rng);
  } else if (stage == 1) {
    trunk_.emplace_back(3, 32, 4, 2, 1, rng);
    trunk_.emplace_back(32, 64, 4, 2, 1, rng);
    trunk_.emplace_back(64, 128, 3, 1, 1, rng);
  } else {
    trunk_.emplace_back(3, 32, 4, 2, 1, rng);
    trunk_.emplace_back(32, 64, 4, 2, 1, rng);
    trunk_.emplace_back(64, 128, 4, 2, 1, rng);
  }
  u_feat_ = Dense(128 * 4 * 4, feat_dim, rng);
  u_score_ = Dense(feat_dim, 1, rng);
  sproj_ = Dense(sent_dim, 64, rng);
  // 1x1 join: on a 4x4 map the trunk already provides the receptive field.
  c_join_ = Conv(128 + 64, 128, 1, 1, 0, rng);
  c_feat_ = Dense(128 * 4 * 4, feat_dim, rng);
  c_score_ = Dense(feat_dim, 1, rng);
}

Tensor Discriminator::trunk(const Tensor& images) const {
  int res = resolution();
  require(images.ndim() == 4 && images.dim(1) == 3 && images.dim(2) == res &&
              images.dim(3) == res,
          "discriminator stage " + std::to_string(stage_) + " expects [N x 3 x " +
              std::to_string(res) + " x " + std::to_string(res) + "], got " +
              shape_str(images.shape()));
  Tensor h = images;
  for (const auto& conv : trunk_) h = leaky_relu(conv.forward(h));
  return h;
}

CondOut Discriminator::cond_head(const Tensor& trunk_feats, const Tensor& s_bar) const {
  require(s_bar.ndim() == 2 && s_bar.dim(0) == trunk_feats.dim(0) && s_bar.dim(1) == sent_dim_,
          "discriminator expects a matching sentence batch");
  int n = trunk_feats.dim(0);
  Tensor cue = broadcast_spatial(sproj_.forward(s_bar), 4, 4);
  Tensor joined = leaky_relu(c_join_.forward(concat({trunk_feats, cue}, 1)));
  Tensor flat = reshape(joined, {n, 128 * 4 * 4});
  CondOut out;
  out.feat = leaky_relu(c_feat_.forward(flat));
  out.logit = reshape(c_score_.forward(out.feat), {n});
  out.score = sigmoid(out.logit);
  return out;
}

DiscOutputs Discriminator::heads(const Tensor& trunk_feats, const Tensor& s_bar) const {
  int n = trunk_feats.dim(0);
  DiscOutputs out;
  Tensor flat_u = reshape(trunk_feats, {n, 128 * 4 * 4});
  out.feat_u = leaky_relu(u_feat_.forward(flat_u));
  out.logit_u = reshape(u_score_.forward(out.feat_u), {n});
  out.score_u = sigmoid(out.logit_u);
  CondOut cond = cond_head(trunk_feats, s_bar);
  out.feat_c = cond.feat;
  out.logit_c = cond.logit;
  out.score_c = cond.score;
  return out;
}

DiscOutputs Discriminator::forward(const Tensor& images, const Tensor& s_bar) const {
  return heads(trunk(images), s_bar);
}

void Discriminator::register_params(ParamStore& store, const std::string& prefix) {
  for (std::size_t i = 0; i < trunk_.size(); ++i)
    trunk_[i].register_params(store, prefix + ".trunk" + std::to_string(i));
  u_feat_.register_params(store, prefix + ".u_feat");
  u_score_.register_params(store, prefix + ".u_score");
  sproj_.register_params(store, prefix + ".sproj");
  c_join_.register_params(store, prefix + ".c_join");
  c_feat_.register_params(store, prefix + ".c_feat");
  c_score_.register_params(store, prefix + ".c_score");
}

// ---------------------------------------------------------------------------
// GanModel
// ---------------------------------------------------------------------------

GanModel::GanModel(int vocab_size, const GanConfig& cfg, Rng& rng)
    : cfg(cfg),
      encoder(vocab_size, rng),
      gen(cfg.scbn_mode, rng, cfg.z_dim, cfg.sent_dim) {
  for (int s = 0; s < 3; ++s) discs.emplace_back(s, rng, cfg.sent_dim);
}

BatchEnc GanModel::encode_batch(const std::vector<std::vector<int>>& token_rows) const {
  require(!token_rows.empty(), "encode_batch needs at least one caption");
  BatchEnc enc;
  std::vector<Tensor> rows;
  for (const auto& tokens : token_rows) {
    EncoderOutput out = encoder.encode(tokens);
    rows.push_back(reshape(out.sentence_feat, {1, encoder.feature_dim()}));
    enc.word_feats.push_back(out.word_feats);
  }
  enc.s_bar = rows.size() == 1 ? rows[0] : concat(rows, 0);
  return enc;
}

GenOutputs GanModel::generate(const Tensor& z, const BatchEnc& enc, NormMode nm) {
  return gen.forward(z, enc, nm);
}

DiscOutputs GanModel::discriminate(int stage, const Tensor& images, const Tensor& s_bar) const {
  require(stage >= 0 && stage < 3, "discriminator stage out of range");
  return discs[static_cast<std::size_t>(stage)].forward(images, s_bar);
}

void GanModel::register_params(ParamStore& store) {
  encoder.register_params(store, "enc");
  gen.register_params(store, "g");
  for (int s = 0; s < 3; ++s)
    discs[static_cast<std::size_t>(s)].register_params(store, "d" + std::to_string(s));
}

}  // namespace t2i
