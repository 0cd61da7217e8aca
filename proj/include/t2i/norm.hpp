#pragma once

#include <optional>
#include <string>

#include "t2i/checkpoint.hpp"
#include "t2i/rng.hpp"
#include "t2i/tensor.hpp"

namespace t2i {

enum class NormMode { Train, Eval };

// Condition-derived shifts of the affine parameters. Shapes must broadcast
// against the normalized NCHW activation: [N x C x 1 x 1] for sentence-level
// cues, [N x C x H x W] for word-level cues.
struct ModulationParams {
  Tensor gamma_c;
  Tensor beta_c;
  bool defined() const { return gamma_c.defined() && beta_c.defined(); }
};

// Per-channel batch normalization over (N, H, W) with learned affine and
// exponential-moving-average running statistics.
class BatchNorm2d {
 public:
  explicit BatchNorm2d(int channels, real eps = 1e-5, real momentum = 0.1);

  // Plain normalization: (x - mu) / sqrt(var + eps) with the mode's
  // statistics. Train mode uses batch statistics and updates running stats;
  // eval mode uses running stats. No affine applied.
  Tensor normalize(const Tensor& x, NormMode mode);

  // gamma * normalize(x) + beta.
  Tensor forward(const Tensor& x, NormMode mode);
  // (gamma + gamma_c) * normalize(x) + (beta + beta_c). Passing empty mods
  // takes exactly the plain forward path.
  Tensor forward(const Tensor& x, NormMode mode, const ModulationParams& mods);

  void register_params(ParamStore& store, const std::string& prefix);

  Tensor gamma, beta;                  // [C], trainable
  Tensor running_mean, running_var;    // [C], buffers
  real eps;
  real momentum;
  int channels;
};

// Sentence-level conditioning: two one-hidden-layer MLPs map the sentence
// vector to per-channel gamma_c and beta_c. Final layers start at zero so a
// freshly built head leaves batch norm unchanged.
class SentenceHead {
 public:
  SentenceHead(int channels, Rng& rng, int sent_dim = 256, int hidden = 128,
               bool zero_init_final = true);

  // s_bar: [N x sent_dim]. Returns mods shaped [N x C x 1 x 1].
  ModulationParams modulations(const Tensor& s_bar) const;

  void register_params(ParamStore& store, const std::string& prefix);

  Tensor w1g, b1g, w2g, b2g;  // gamma MLP
  Tensor w1b, b1b, w2b, b2b;  // beta MLP
  int channels, sent_dim, hidden;
};

// Word-level conditioning: a perception layer projects word features to the
// visual channel width, per-sub-region softmax attention fuses them into a
// VSE map, and two 1x1 convolutions turn that map into gamma_c and beta_c.
class WordHead {
 public:
  WordHead(int channels, Rng& rng, int word_dim = 256, bool zero_init_final = true);

  // f(w_t) for every word column: [C x T].
  Tensor project_words(const Tensor& words) const;
  // Softmax attention of each sub-region over the projected words: [L x T].
  Tensor attention(const Tensor& x_feats, const Tensor& projected) const;
  // x_feats: [C x L] visual features of one sample; words: [D x T].
  // Returns the fused [C x L] map.
  Tensor vse(const Tensor& x_feats, const Tensor& words) const;

  // vse_map: [N x C x H x W]. Returns mods of the same shape.
  ModulationParams modulations(const Tensor& vse_map) const;

  void register_params(ParamStore& store, const std::string& prefix);

  Tensor proj_w, proj_b;  // perception layer D -> C
  Tensor kg, bg;          // 1x1 conv for gamma_c
  Tensor kb, bb;          // 1x1 conv for beta_c
  int channels, word_dim;
};

// Table-style baseline: batch-normalize, then concatenate the cue along the
// channel axis. `cue` is [N x K] for sentence-level (replicated spatially)
// or [N x K x H x W] for word-level. The 1x1 conv mapping back to C channels
// is owned by the caller.
enum class CueLevel { Sentence, Word };
Tensor bn_concat_baseline(BatchNorm2d& layer, const Tensor& x, const Tensor& cue, CueLevel level,
                          NormMode mode);

}  // namespace t2i
