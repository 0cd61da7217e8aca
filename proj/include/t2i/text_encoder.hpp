#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "t2i/checkpoint.hpp"
#include "t2i/optim.hpp"
#include "t2i/rng.hpp"
#include "t2i/tensor.hpp"

namespace t2i {

// Token table with dense indices. PAD is fixed at 0, UNK at 1.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();
  static Vocabulary build(const std::vector<std::string>& texts);

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  int size() const { return static_cast<int>(tokens_.size()); }

  std::string serialize() const;
  static Vocabulary deserialize(const std::string& blob);

 private:
  void push(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Lowercases, strips punctuation, splits on whitespace.
std::vector<std::string> clean_tokens(const std::string& text);
// clean_tokens mapped through the vocabulary; errors on empty-after-cleaning.
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab);

struct EncoderOutput {
  Tensor word_feats;     // [2H x T], columns are per-word features
  Tensor sentence_feat;  // [2H], concat of the two final hidden states
};

// Bi-directional LSTM over an embedding lookup. Hidden width 128 per
// direction so the concatenated features match the 256-long contrastive
// feature vectors used downstream.
class TextEncoder {
 public:
  static constexpr int kMaxTokens = 32;

  TextEncoder(int vocab_size, Rng& rng, int embed_dim = 128, int hidden = 128);

  EncoderOutput encode(const std::vector<int>& tokens) const;
  int feature_dim() const { return 2 * hidden; }

  void register_params(ParamStore& store, const std::string& prefix);

  Tensor embedding;                // [V x E]
  Tensor fwd_wx, fwd_wh, fwd_b;    // forward direction gates
  Tensor bwd_wx, bwd_wh, bwd_b;    // backward direction gates
  int vocab_size, embed_dim, hidden;
};

// Small convolutional tower used only for encoder pretraining: embeds a
// [N x 3 x 32 x 32] image batch into [N x 256].
class ImageEncoder {
 public:
  explicit ImageEncoder(Rng& rng);
  Tensor forward(const Tensor& images) const;
  void register_params(ParamStore& store, const std::string& prefix);

  Tensor k1, b1, k2, b2, k3, b3;  // strided convs 3->16->32->64
  Tensor dw, db;                  // dense 1024 -> 256
};

struct MatchingExample {
  Tensor image;             // [3 x 32 x 32]
  std::vector<int> tokens;  // one caption
  int scene_id;
};

struct MatchingConfig {
  int epochs = 12;
  int batch = 16;
  real lr = 2e-3;
  std::uint64_t seed = 1;
  real heldout_fraction = 0.1;
  real temperature = 10.0;
};

struct MatchingStats {
  real first_epoch_loss = 0;
  real final_epoch_loss = 0;
  real matched_mean = 0;     // held-out matched-pair cosine similarity
  real mismatched_mean = 0;  // held-out mismatched-pair cosine similarity
  real margin() const { return matched_mean - mismatched_mean; }
};

// Batch-softmax matching over cosine similarities; trains both encoders so
// matched pairs score above mismatched ones. The caller freezes the text
// encoder afterwards.
MatchingStats pretrain_matching(TextEncoder& text_enc, ImageEncoder& img_enc,
                                const std::vector<MatchingExample>& corpus,
                                const MatchingConfig& cfg);

// Held-out cosine statistics without training; used to probe an encoder.
MatchingStats matching_eval(const TextEncoder& text_enc, const ImageEncoder& img_enc,
                            const std::vector<MatchingExample>& examples, real temperature = 10.0);

}  // namespace t2i
