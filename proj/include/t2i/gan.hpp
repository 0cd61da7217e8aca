#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "t2i/checkpoint.hpp"
#include "t2i/norm.hpp"
#include "t2i/rng.hpp"
#include "t2i/tensor.hpp"
#include "t2i/text_encoder.hpp"

namespace t2i {

struct Dense {
  Tensor w;  // [in x out]
  Tensor b;  // [out]
  Dense() = default;
  Dense(int in, int out, Rng& rng, real stdev = 0.02);
  Tensor forward(const Tensor& x) const { return add(matmul(x, w), b); }
  void register_params(ParamStore& store, const std::string& prefix);
};

struct Conv {
  Tensor k;  // [out x in x kh x kw]
  Tensor b;  // [out]
  int stride = 1;
  int pad = 0;
  Conv() = default;
  Conv(int in, int out, int ksize, int stride, int pad, Rng& rng, real stdev = 0.02);
  Tensor forward(const Tensor& x) const { return conv2d(x, k, b, stride, pad); }
  void register_params(ParamStore& store, const std::string& prefix);
};

// Encoded caption batch: one sentence vector row per sample plus the
// per-sample word feature matrices (token counts differ across samples).
struct BatchEnc {
  Tensor s_bar;                    // [N x 256]
  std::vector<Tensor> word_feats;  // each [256 x T_i]
};

enum class ScbnMode { Off, Sentence, Word, Both };
ScbnMode scbn_mode_from_string(const std::string& s);
std::string to_string(ScbnMode mode);

// One semantic-conditioned normalization site: plain batch norm whose affine
// parameters are shifted by sentence-level and/or word-level cues.
class ScbnSite {
 public:
  ScbnSite(int channels, ScbnMode mode, Rng& rng, int sent_dim = 256, int word_dim = 256);
  Tensor apply(const Tensor& x, const BatchEnc& enc, NormMode nm);
  void register_params(ParamStore& store, const std::string& prefix);

  BatchNorm2d bn;
  std::optional<SentenceHead> sent;
  std::optional<WordHead> word;
  ScbnMode mode;
};

struct GenOutputs {
  std::array<Tensor, 3> images;  // [N x 3 x 8/16/32 x 8/16/32], in [-1, 1]
  std::array<Tensor, 3> hidden;  // per-stage hidden features
};

// Three-stage coarse-to-fine generator, 8 -> 16 -> 32 px. Stage 0 maps
// concat(z, s_bar) through a dense seed; stages 1-2 refine the previous
// hidden features joined with the sentence vector. One SCBN site sits at the
// end of each up-sampling block.
class Generator {
 public:
  Generator(ScbnMode mode, Rng& rng, int z_dim = 100, int sent_dim = 256);
  GenOutputs forward(const Tensor& z, const BatchEnc& enc, NormMode nm);
  void register_params(ParamStore& store, const std::string& prefix);

  ScbnMode mode;
  int z_dim, sent_dim;
  Dense seed;                       // [z+sent] -> 4*4*64
  Conv conv0;                       // 64 -> 32 at 8x8
  ScbnSite norm0;
  Conv rgb0;                        // 32 -> 3
  Dense sproj1;                     // sentence join projection, 256 -> 32
  Conv join1;                       // 64 -> 32 at 8x8
  Conv conv1;                       // 32 -> 16 at 16x16
  ScbnSite norm1;
  Conv rgb1;
  Dense sproj2;                     // 256 -> 16
  Conv join2;                       // 32 -> 16 at 16x16
  Conv conv2;                       // 16 -> 8 at 32x32
  ScbnSite norm2;
  Conv rgb2;
};

struct DiscOutputs {
  Tensor logit_u, score_u;  // [N]; score = sigmoid(logit)
  Tensor feat_u;            // [N x 256], unconditional contrastive features
  Tensor logit_c, score_c;  // conditioned branch
  Tensor feat_c;            // [N x 256]
};

// Conditioned-branch outputs alone, for mismatched-caption passes that
// reuse an already computed trunk.
struct CondOut {
  Tensor logit, score;  // [N]
  Tensor feat;          // [N x 256]
};

// Per-stage discriminator: a strided trunk down to 4x4x128 feeding an
// unconditional branch and a branch conditioned on the sentence vector.
// Each branch emits a real/fake score and a 256-long feature vector.
class Discriminator {
 public:
  Discriminator(int stage, Rng& rng, int sent_dim = 256, int feat_dim = 256);
  DiscOutputs forward(const Tensor& images, const Tensor& s_bar) const;
  // The shared convolutional features: [N x 128 x 4 x 4].
  Tensor trunk(const Tensor& images) const;
  DiscOutputs heads(const Tensor& trunk_feats, const Tensor& s_bar) const;
  CondOut cond_head(const Tensor& trunk_feats, const Tensor& s_bar) const;
  int resolution() const { return 8 << stage_; }
  void register_params(ParamStore& store, const std::string& prefix);

 private:
  int stage_;
  int sent_dim_;
  std::vector<Conv> trunk_;
  Dense u_feat_, u_score_;
  Dense sproj_;
  Conv c_join_;
  Dense c_feat_, c_score_;
};

struct GanConfig {
  ScbnMode scbn_mode = ScbnMode::Word;
  int z_dim = 100;
  int sent_dim = 256;
};

// The full model bundle: frozen-by-default text encoder, generator, and the
// three independent discriminators. Parameters register under disjoint
// prefixes (enc, g, d0, d1, d2).
class GanModel {
 public:
  GanModel(int vocab_size, const GanConfig& cfg, Rng& rng);

  BatchEnc encode_batch(const std::vector<std::vector<int>>& token_rows) const;
  GenOutputs generate(const Tensor& z, const BatchEnc& enc, NormMode nm);
  DiscOutputs discriminate(int stage, const Tensor& images, const Tensor& s_bar) const;

  void register_params(ParamStore& store);

  GanConfig cfg;
  TextEncoder encoder;
  Generator gen;
  std::vector<Discriminator> discs;
};

}  // namespace t2i
