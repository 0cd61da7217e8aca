#include "t2i/norm.hpp"

#include <cmath>

namespace t2i {

// ---------------------------------------------------------------------------
// BatchNorm2d
// ---------------------------------------------------------------------------

BatchNorm2d::BatchNorm2d(int channels, real eps, real momentum)
    : gamma(Tensor::full({channels}, 1.0)),
      beta(Tensor::zeros({channels})),
      running_mean(Tensor::zeros({channels})),
      running_var(Tensor::full({channels}, 1.0)),
      eps(eps),
      momentum(momentum),
      channels(channels) {
  require(eps > 0, "batch norm eps must be positive");
  require(momentum > 0 && momentum < 1, "batch norm momentum must lie in (0, 1)");
}

Tensor BatchNorm2d::normalize(const Tensor& x, NormMode mode) {
  require(x.ndim() == 4, "batch norm expects NCHW input, got " + shape_str(x.shape()));
  require(x.dim(1) == channels, "batch norm channel mismatch: input has " +
                                    std::to_string(x.dim(1)) + ", layer has " +
                                    std::to_string(channels));
  Tensor mu, var;
  if (mode == NormMode::Train) {
    require(static_cast<std::int64_t>(x.dim(0)) * x.dim(2) * x.dim(3) >= 2,
            "train-mode batch norm needs N*H*W >= 2");
    auto stats = channel_stats(x);
    mu = stats.first;
    var = stats.second;
    // Running-stat update is a buffer write, not part of the graph.
    for (int c = 0; c < channels; ++c) {
      running_mean.data()[c] = (1.0 - momentum) * running_mean.data()[c] + momentum * mu.data()[c];
      running_var.data()[c] = (1.0 - momentum) * running_var.data()[c] + momentum * var.data()[c];
    }
  } else {
    mu = running_mean.detached();
    var = running_var.detached();
  }
  Tensor mu_r = reshape(mu, {channels, 1, 1});
  Tensor denom = reshape(sqrt_op(add_scalar(var, eps)), {channels, 1, 1});
  return div(sub(x, mu_r), denom);
}

Tensor BatchNorm2d::forward(const Tensor& x, NormMode mode) {
  return forward(x, mode, ModulationParams{});
}

Tensor BatchNorm2d::forward(const Tensor& x, NormMode mode, const ModulationParams& mods) {
  Tensor xhat = normalize(x, mode);
  Tensor g = reshape(gamma, {channels, 1, 1});
  Tensor b = reshape(beta, {channels, 1, 1});
  if (mods.defined()) {
    g = add(g, mods.gamma_c);
    b = add(b, mods.beta_c);
  }
  return add(mul(g, xhat), b);
}

void BatchNorm2d::register_params(ParamStore& store, const std::string& prefix) {
  gamma = store.add(prefix + ".gamma", gamma);
  beta = store.add(prefix + ".beta", beta);
  running_mean = store.add(prefix + ".running_mean", running_mean, /*trainable=*/false);
  running_var = store.add(prefix + ".running_var", running_var, /*trainable=*/false);
}

// ---------------------------------------------------------------------------
// SentenceHead
// ---------------------------------------------------------------------------

SentenceHead::SentenceHead(int channels, Rng& rng, int sent_dim, int hidden, bool zero_init_final)
    : channels(channels), sent_dim(sent_dim), hidden(hidden) {
  real s1 = 1.0 / std::sqrt(static_cast<real>(sent_dim));
  w1g = Tensor::randn({sent_dim, hidden}, rng, s1);
  b1g = Tensor::zeros({hidden});
  w1b = Tensor::randn({sent_dim, hidden}, rng, s1);
  b1b = Tensor::zeros({hidden});
  if (zero_init_final) {
    w2g = Tensor::zeros({hidden, channels});
    w2b = Tensor::zeros({hidden, channels});
  } else {
    real s2 = 1.0 / std::sqrt(static_cast<real>(hidden));
    w2g = Tensor::randn({hidden, channels}, rng, s2);
    w2b = Tensor::randn({hidden, channels}, rng, s2);
  }
  b2g = Tensor::zeros({channels});
  b2b = Tensor::zeros({channels});
}

ModulationParams SentenceHead::modulations(const Tensor& s_bar) const {
  Tensor s = s_bar.ndim() == 1 ? reshape(s_bar, {1, s_bar.dim(0)}) : s_bar;
  require(s.ndim() == 2 && s.dim(1) == sent_dim,
          "sentence head expects [N x " + std::to_string(sent_dim) + "], got " +
              shape_str(s_bar.shape()));
  int n = s.dim(0);
  Tensor hg = relu(add(matmul(s, w1g), b1g));
  Tensor hb = relu(add(matmul(s, w1b), b1b));
  ModulationParams mods;
  mods.gamma_c = reshape(add(matmul(hg, w2g), b2g), {n, channels, 1, 1});
  mods.beta_c = reshape(add(matmul(hb, w2b), b2b), {n, channels, 1, 1});
  return mods;
}

void SentenceHead::register_params(ParamStore& store, const std::string& prefix) {
  w1g = store.add(prefix + ".w1g", w1g);
  b1g = store.add(prefix + ".b1g", b1g);
  w2g = store.add(prefix + ".w2g", w2g);
  b2g = store.add(prefix + ".b2g", b2g);
  w1b = store.add(prefix + ".w1b", w1b);
  b1b = store.add(prefix + ".b1b", b1b);
  w2b = store.add(prefix + ".w2b", w2b);
  b2b = store.add(prefix + ".b2b", b2b);
}

// ---------------------------------------------------------------------------
// WordHead
// ---------------------------------------------------------------------------

WordHead::WordHead(int channels, Rng& rng, int word_dim, bool zero_init_final)
    : channels(channels), word_dim(word_dim) {
  real s = 1.0 / std::sqrt(static_cast<real>(word_dim));
  proj_w = Tensor::randn({channels, word_dim}, rng, s);
  proj_b = Tensor::zeros({channels});
  if (zero_init_final) {
    kg = Tensor::zeros({channels, channels, 1, 1});
    kb = Tensor::zeros({channels, channels, 1, 1});
  } else {
    real sc = 1.0 / std::sqrt(static_cast<real>(channels));
    kg = Tensor::randn({channels, channels, 1, 1}, rng, sc);
    kb = Tensor::randn({channels, channels, 1, 1}, rng, sc);
  }
  bg = Tensor::zeros({channels});
  bb = Tensor::zeros({channels});
}

Tensor WordHead::project_words(const Tensor& words) const {
  require(words.ndim() == 2 && words.dim(0) == word_dim,
          "word head expects word features [D x T], got " + shape_str(words.shape()));
  require(words.dim(1) >= 1, "word head needs at least one word");
  return add(matmul(proj_w, words), reshape(proj_b, {channels, 1}));  // [C x T]
}

Tensor WordHead::attention(const Tensor& x_feats, const Tensor& projected) const {
  require(x_feats.ndim() == 2 && x_feats.dim(0) == channels,
          "vse expects visual features [C x L], got " + shape_str(x_feats.shape()));
  Tensor scores = matmul(transpose2d(x_feats), projected);  // [L x T]
  return softmax(scores, 1);
}

Tensor WordHead::vse(const Tensor& x_feats, const Tensor& words) const {
  Tensor fw = project_words(words);
  Tensor weights = attention(x_feats, fw);
  return matmul(fw, transpose2d(weights));  // [C x L]
}

ModulationParams WordHead::modulations(const Tensor& vse_map) const {
  require(vse_map.ndim() == 4 && vse_map.dim(1) == channels,
          "word head expects [N x C x H x W] vse map, got " + shape_str(vse_map.shape()));
  ModulationParams mods;
  mods.gamma_c = conv2d(vse_map, kg, bg, 1, 0);
  mods.beta_c = conv2d(vse_map, kb, bb, 1, 0);
  return mods;
}

void WordHead::register_params(ParamStore& store, const std::string& prefix) {
  proj_w = store.add(prefix + ".proj_w", proj_w);
  proj_b = store.add(prefix + ".proj_b", proj_b);
  kg = store.add(prefix + ".kg", kg);
  bg = store.add(prefix + ".bg", bg);
  kb = store.add(prefix + ".kb", kb);
  bb = store.add(prefix + ".bb", bb);
}

// ---------------------------------------------------------------------------
// Concat-after-BN baseline
// ---------------------------------------------------------------------------

Tensor bn_concat_baseline(BatchNorm2d& layer, const Tensor& x, const Tensor& cue, CueLevel level,
                          NormMode mode) {
  Tensor normed = layer.forward(x, mode);
  Tensor cue_map;
  if (level == CueLevel::Sentence) {
    require(cue.ndim() == 2 && cue.dim(0) == x.dim(0),
            "sentence cue must be [N x K], got " + shape_str(cue.shape()));
    cue_map = broadcast_spatial(cue, x.dim(2), x.dim(3));
  } else {
    require(cue.ndim() == 4 && cue.dim(0) == x.dim(0) && cue.dim(2) == x.dim(2) &&
                cue.dim(3) == x.dim(3),
            "word cue must be [N x K x H x W] matching the input, got " + shape_str(cue.shape()));
    cue_map = cue;
  }
  return concat({normed, cue_map}, 1);
}

}  // namespace t2i
