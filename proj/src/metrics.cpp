#include "t2i/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "t2i/optim.hpp"

namespace t2i {

// ---------------------------------------------------------------------------
// OracleClassifier
// ---------------------------------------------------------------------------

OracleClassifier::OracleClassifier(Rng& rng)
    : c1_(3, 16, 4, 2, 1, rng, 0.05),
      c2_(16, 32, 4, 2, 1, rng, 0.05),
      c3_(32, 64, 4, 2, 1, rng, 0.05),
      c4_(64, 64, 3, 1, 1, rng, 0.05),
      bn1_(16),
      bn2_(32),
      bn3_(64),
      bn4_(64),
      feat_(1024, 128, rng, 0.03),
      head_(128, kNumClasses, rng, 0.03) {}

Tensor OracleClassifier::backbone(const Tensor& images, NormMode mode) {
  require(images.ndim() == 4 && images.dim(1) == 3 && images.dim(2) == 32 && images.dim(3) == 32,
          "oracle expects [N x 3 x 32 x 32], got " + shape_str(images.shape()));
  Tensor h = leaky_relu(bn1_.forward(c1_.forward(images), mode));
  h = leaky_relu(bn2_.forward(c2_.forward(h), mode));
  h = leaky_relu(bn3_.forward(c3_.forward(h), mode));
  h = leaky_relu(bn4_.forward(c4_.forward(h), mode));
  h = reshape(h, {images.dim(0), 1024});
  return relu(feat_.forward(h));
}

Tensor OracleClassifier::logits(const Tensor& images, NormMode mode) {
  return head_.forward(backbone(images, mode));
}

Tensor OracleClassifier::probabilities(const Tensor& images) {
  require(validated_, "oracle classifier must pass validation before evaluating");
  return softmax(logits(images, NormMode::Eval), 1);
}

Tensor OracleClassifier::features(const Tensor& images) {
  require(validated_, "oracle classifier must pass validation before evaluating");
  return backbone(images, NormMode::Eval);
}

void OracleClassifier::register_params(ParamStore& store, const std::string& prefix) {
  c1_.register_params(store, prefix + ".c1");
  c2_.register_params(store, prefix + ".c2");
  c3_.register_params(store, prefix + ".c3");
  bn1_.register_params(store, prefix + ".bn1");
  bn2_.register_params(store, prefix + ".bn2");
  bn3_.register_params(store, prefix + ".bn3");
  c4_.register_params(store, prefix + ".c4");
  bn4_.register_params(store, prefix + ".bn4");
  feat_.register_params(store, prefix + ".feat");
  head_.register_params(store, prefix + ".head");
}

namespace {

// -mean_i log softmax(logits)[i, label_i]
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& labels) {
  int n = logits.dim(0);
  Tensor logp = log_op(softmax(logits, 1));
  Tensor acc = Tensor::scalar(0.0);
  for (int i = 0; i < n; ++i)
    acc = add(acc, slice1d(select0(logp, i), labels[static_cast<std::size_t>(i)], 1));
  return scale(acc, -1.0 / static_cast<real>(n));
}

Tensor stack_images(const std::vector<Tensor>& images) {
  std::vector<Tensor> rows;
  rows.reserve(images.size());
  for (const auto& img : images)
    rows.push_back(reshape(img, {1, img.dim(0), img.dim(1), img.dim(2)}));
  return rows.size() == 1 ? rows[0] : concat(rows, 0);
}

}  // namespace

real OracleClassifier::train(const OracleConfig& cfg) {
  bool saved_checks = debug_checks();
  set_debug_checks(false);
  Rng rng(cfg.seed);

  // Own corpus: the full nuisance grid (background x size x position) for
  // every class; validation holds out unseen attribute combinations.
  std::vector<Tensor> images;
  std::vector<int> labels;
  for (int cls = 0; cls < kNumClasses; ++cls) {
    for (int bg = 0; bg < 4; ++bg)
      for (int size = 0; size < 2; ++size)
        for (int pos = 0; pos < 5; ++pos) {
          SceneSpec spec;
          spec.shape = cls / 8;
          spec.fg_color = cls % 8;
          spec.bg_color = bg;
          spec.size = size;
          spec.position = pos;
          images.push_back(render(spec, 32));
          labels.push_back(cls);
        }
  }
  std::vector<std::size_t> order(images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::size_t n_held = static_cast<std::size_t>(cfg.heldout_fraction * order.size());
  require(n_held >= 1 && order.size() - n_held >= static_cast<std::size_t>(cfg.batch),
          "oracle corpus too small");

  ParamStore store;
  register_params(store, "oracle");
  store.quantize_f32();
  Adam::Config acfg;
  acfg.lr = cfg.lr;
  acfg.beta1 = 0.9;  // plain classification; GAN-style beta1 is unnecessarily low
  Adam opt(store, acfg);

  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_held),
                                     order.end());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = train_idx.size(); i > 1; --i)
      std::swap(train_idx[i - 1], train_idx[rng.below(i)]);
    for (std::size_t start = 0; start + static_cast<std::size_t>(cfg.batch) <= train_idx.size();
         start += static_cast<std::size_t>(cfg.batch)) {
      Tape tape;
      TapeScope scope(tape);
      std::vector<Tensor> batch_imgs;
      std::vector<int> batch_labels;
      for (int b = 0; b < cfg.batch; ++b) {
        std::size_t idx = train_idx[start + static_cast<std::size_t>(b)];
        batch_imgs.push_back(images[idx]);
        batch_labels.push_back(labels[idx]);
      }
      Tensor loss =
          cross_entropy_rows(logits(stack_images(batch_imgs), NormMode::Train), batch_labels);
      opt.zero_grads();
      tape.backward(loss);
      opt.step();
    }
  }

  // Held-out accuracy gates all later use.
  int correct = 0;
  for (std::size_t i = 0; i < n_held; ++i) {
    std::size_t idx = order[i];
    Tensor lg = logits(reshape(images[idx], {1, 3, 32, 32}), NormMode::Eval);
    int best = 0;
    for (int k = 1; k < kNumClasses; ++k)
      if (lg.data()[k] > lg.data()[best]) best = k;
    if (best == labels[idx]) ++correct;
  }
  heldout_accuracy_ = static_cast<real>(correct) / static_cast<real>(n_held);
  validated_ = heldout_accuracy_ >= cfg.required_accuracy;
  set_debug_checks(saved_checks);
  require(validated_, "oracle validation failed: held-out accuracy " +
                          std::to_string(heldout_accuracy_) + " below " +
                          std::to_string(cfg.required_accuracy));
  return heldout_accuracy_;
}

void OracleClassifier::save(const std::string& path) {
  ParamStore store;
  register_params(store, "oracle");
  Checkpoint ckpt;
  store_to_checkpoint(store, &ckpt);
  ckpt.blobs.emplace_back("oracle.accuracy", std::to_string(heldout_accuracy_));
  ckpt.blobs.emplace_back("oracle.validated", validated_ ? "1" : "0");
  save_checkpoint(path, ckpt);
}

OracleClassifier OracleClassifier::load(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  Rng dummy(0);
  OracleClassifier oracle(dummy);
  ParamStore store;
  oracle.register_params(store, "oracle");
  checkpoint_to_store(ckpt, &store);
  oracle.heldout_accuracy_ = std::stod(ckpt.blob("oracle.accuracy"));
  oracle.validated_ = ckpt.blob("oracle.validated") == "1";
  return oracle;
}

// ---------------------------------------------------------------------------
// Inception-score analog
// ---------------------------------------------------------------------------

std::pair<real, real> inception_score_from_probs(const Tensor& probs, int n_splits) {
  require(probs.ndim() == 2, "inception score expects [N x K] probabilities");
  int n = probs.dim(0), k = probs.dim(1);
  require(n_splits >= 1, "need at least one split");
  require(n / n_splits >= 10, "need at least 10 images per split, got " +
                                  std::to_string(n) + " images for " + std::to_string(n_splits) +
                                  " splits");
  std::vector<real> scores;
  for (int s = 0; s < n_splits; ++s) {
    int lo = static_cast<int>(static_cast<std::int64_t>(n) * s / n_splits);
    int hi = static_cast<int>(static_cast<std::int64_t>(n) * (s + 1) / n_splits);
    std::vector<real> marginal(static_cast<std::size_t>(k), 0.0);
    for (int i = lo; i < hi; ++i)
      for (int j = 0; j < k; ++j)
        marginal[static_cast<std::size_t>(j)] += probs.at({i, j}) / static_cast<real>(hi - lo);
    real kl_sum = 0;
    for (int i = lo; i < hi; ++i) {
      real kl = 0;
      for (int j = 0; j < k; ++j) {
        real p = probs.at({i, j});
        if (p > 0) kl += p * (std::log(p) - std::log(marginal[static_cast<std::size_t>(j)]));
      }
      kl_sum += kl;
    }
    scores.push_back(std::exp(kl_sum / static_cast<real>(hi - lo)));
  }
  real mean = 0;
  for (real s : scores) mean += s;
  mean /= static_cast<real>(scores.size());
  real var = 0;
  for (real s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<real>(scores.size());
  return {mean, std::sqrt(var)};
}

std::pair<real, real> inception_score(const Tensor& images, OracleClassifier& oracle,
                                      int n_splits) {
  return inception_score_from_probs(oracle.probabilities(images), n_splits);
}

// ---------------------------------------------------------------------------
// Consistency ratio
// ---------------------------------------------------------------------------

std::vector<EvalPair> make_eval_pairs(const Dataset& ds, const Vocabulary& vocab,
                                      bool use_test_split, int n_pairs, Rng& rng) {
  const auto& indices = use_test_split ? ds.test_indices : ds.train_indices;
  require(indices.size() >= 2, "split too small for evaluation pairs");
  std::vector<EvalPair> pairs;
  for (int p = 0; p < n_pairs; ++p) {
    EvalPair pair;
    pair.y = p % 2;  // alternate intra / inter
    if (pair.y == 1) {
      const Scene& scene = ds.scenes[indices[rng.below(indices.size())]];
      int k = static_cast<int>(scene.captions.size());
      int c1 = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      int c2 = static_cast<int>(rng.below(static_cast<std::uint64_t>(k - 1)));
      if (c2 >= c1) ++c2;
      pair.tokens_a = tokenize(scene.captions[static_cast<std::size_t>(c1)], vocab);
      pair.tokens_b = tokenize(scene.captions[static_cast<std::size_t>(c2)], vocab);
    } else {
      std::size_t i1 = rng.below(indices.size());
      std::size_t i2 = rng.below(indices.size() - 1);
      if (i2 >= i1) ++i2;
      const Scene& sa = ds.scenes[indices[i1]];
      const Scene& sb = ds.scenes[indices[i2]];
      pair.tokens_a = tokenize(sa.captions[rng.below(sa.captions.size())], vocab);
      pair.tokens_b = tokenize(sb.captions[rng.below(sb.captions.size())], vocab);
    }
    pair.z_seed_a = rng.raw();
    pair.z_seed_b = rng.raw();
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

Tensor generate_images32(GanModel& model, const std::vector<std::vector<int>>& token_rows,
                         const std::vector<std::uint64_t>& z_seeds) {
  require(token_rows.size() == z_seeds.size(), "token rows and noise seeds must align");
  std::vector<Tensor> images;
  for (std::size_t i = 0; i < token_rows.size(); ++i) {
    Rng zrng(z_seeds[i]);
    Tensor z = Tensor::randn({1, model.cfg.z_dim}, zrng);
    BatchEnc enc = model.encode_batch({token_rows[i]});
    GenOutputs out = model.generate(z, enc, NormMode::Eval);
    images.push_back(out.images[2]);
  }
  return images.size() == 1 ? images[0] : concat(images, 0);
}

ConsistencyResult consistency_from_distances(const std::vector<real>& intra,
                                             const std::vector<real>& inter) {
  require(!intra.empty() && !inter.empty(),
          "consistency ratio needs both intra and inter pairs");
  ConsistencyResult out;
  for (real d : intra) out.intra_mean += d / static_cast<real>(intra.size());
  for (real d : inter) out.inter_mean += d / static_cast<real>(inter.size());
  require(out.inter_mean > 0, "inter-pair distances are all zero; ratio undefined");
  out.ratio = out.intra_mean / out.inter_mean;
  return out;
}

ConsistencyResult consistency_ratio(GanModel& model, const std::vector<EvalPair>& pairs,
                                    OracleClassifier& oracle) {
  require(oracle.validated(), "oracle classifier must pass validation before evaluating");
  std::vector<real> intra, inter;
  for (const auto& pair : pairs) {
    Tensor imgs = generate_images32(model, {pair.tokens_a, pair.tokens_b},
                                    {pair.z_seed_a, pair.z_seed_b});
    Tensor feats = oracle.features(imgs);
    real d = l2_distance(select0(feats, 0), select0(feats, 1)).value();
    (pair.y == 1 ? intra : inter).push_back(d);
  }
  return consistency_from_distances(intra, inter);
}

}  // namespace t2i
