#pragma once

#include <utility>
#include <vector>

#include "t2i/data.hpp"
#include "t2i/gan.hpp"

namespace t2i {

struct OracleConfig {
  int epochs = 20;
  int batch = 32;
  real lr = 4e-3;
  std::uint64_t seed = 7;
  real heldout_fraction = 0.15;
  real required_accuracy = 0.95;
};

// Small convolutional classifier over the 32 synthetic classes, trained on
// real renders of every class. Serves as the fixed evaluation network for
// the inception-score analog and the consistency ratio.
class OracleClassifier {
 public:
  explicit OracleClassifier(Rng& rng);

  // Renders its own corpus, trains, and validates on a held-out split.
  // Returns the held-out accuracy; the oracle refuses evaluation work until
  // that accuracy reaches cfg.required_accuracy.
  real train(const OracleConfig& cfg);
  bool validated() const { return validated_; }
  real heldout_accuracy() const { return heldout_accuracy_; }

  // [N x 3 x 32 x 32] -> [N x 32] class posteriors.
  Tensor probabilities(const Tensor& images);
  // [N x 3 x 32 x 32] -> [N x 128] penultimate-layer features.
  Tensor features(const Tensor& images);

  Tensor logits(const Tensor& images, NormMode mode);
  void register_params(ParamStore& store, const std::string& prefix);

  // Trained-oracle persistence, including the validation verdict.
  void save(const std::string& path);
  static OracleClassifier load(const std::string& path);

 private:
  Tensor backbone(const Tensor& images, NormMode mode);  // [N x 128] features
  Conv c1_, c2_, c3_, c4_;
  BatchNorm2d bn1_, bn2_, bn3_, bn4_;
  Dense feat_, head_;
  bool validated_ = false;
  real heldout_accuracy_ = 0;
};

// exp(E_x[KL(p(y|x) || p(y))]) per split; returns (mean, std) over splits.
// Requires at least 10 images per split.
std::pair<real, real> inception_score_from_probs(const Tensor& probs, int n_splits);
std::pair<real, real> inception_score(const Tensor& images, OracleClassifier& oracle,
                                      int n_splits);

// One evaluation pair: two captions generated with per-side fixed noise.
// y = 1 when both captions describe the same ground-truth image.
struct EvalPair {
  std::vector<int> tokens_a, tokens_b;
  int y = 0;
  std::uint64_t z_seed_a = 0, z_seed_b = 0;
};

// Builds a balanced pair list from the chosen split. Captions tokenize
// through `vocab` (the evaluating model's table, which may differ from the
// dataset's own).
std::vector<EvalPair> make_eval_pairs(const Dataset& ds, const Vocabulary& vocab,
                                      bool use_test_split, int n_pairs, Rng& rng);

struct ConsistencyResult {
  real ratio = 0;
  real intra_mean = 0;
  real inter_mean = 0;
};

// mean(intra) / mean(inter); invariant under uniform scaling of all
// distances (and hence of the oracle features they come from).
ConsistencyResult consistency_from_distances(const std::vector<real>& intra,
                                             const std::vector<real>& inter);

// Mean oracle-feature distance over intra pairs divided by the mean over
// inter pairs; below 1 indicates paraphrase-consistent generation.
ConsistencyResult consistency_ratio(GanModel& model, const std::vector<EvalPair>& pairs,
                                    OracleClassifier& oracle);

// Generates one 32 px image per caption row (eval-mode normalization).
Tensor generate_images32(GanModel& model, const std::vector<std::vector<int>>& token_rows,
                         const std::vector<std::uint64_t>& z_seeds);

}  // namespace t2i
