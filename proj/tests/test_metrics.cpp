#include <doctest.h>

#include <cmath>

#include "t2i/metrics.hpp"

using namespace t2i;

namespace {

// Direct KL-loop reference in extended precision.
std::pair<real, real> is_oracle(const Tensor& probs, int n_splits) {
  int n = probs.dim(0), k = probs.dim(1);
  std::vector<long double> scores;
  for (int s = 0; s < n_splits; ++s) {
    int lo = n * s / n_splits, hi = n * (s + 1) / n_splits;
    std::vector<long double> marg(static_cast<std::size_t>(k), 0.0L);
    for (int i = lo; i < hi; ++i)
      for (int j = 0; j < k; ++j) marg[static_cast<std::size_t>(j)] += probs.at({i, j});
    for (auto& m : marg) m /= (hi - lo);
    long double kl_mean = 0;
    for (int i = lo; i < hi; ++i) {
      long double kl = 0;
      for (int j = 0; j < k; ++j) {
        long double p = probs.at({i, j});
        if (p > 0) kl += p * (logl(p) - logl(marg[static_cast<std::size_t>(j)]));
      }
      kl_mean += kl / (hi - lo);
    }
    scores.push_back(expl(kl_mean));
  }
  long double mean = 0;
  for (auto s : scores) mean += s;
  mean /= scores.size();
  long double var = 0;
  for (auto s : scores) var += (s - mean) * (s - mean);
  var /= scores.size();
  return {static_cast<real>(mean), static_cast<real>(sqrtl(var))};
}

Tensor one_hot_rows(const std::vector<int>& labels, int k) {
  Tensor t({static_cast<int>(labels.size()), k});
  for (std::size_t i = 0; i < labels.size(); ++i)
    t.data()[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(labels[i])] = 1.0;
  return t;
}

OracleClassifier& shared_oracle() {
  static OracleClassifier* oracle = [] {
    Rng rng(12);
    auto* o = new OracleClassifier(rng);
    OracleConfig cfg;
    o->train(cfg);
    return o;
  }();
  return *oracle;
}

}  // namespace

TEST_CASE("inception score degenerate and maximal closed forms") {
  // Every image classified identically with confidence 1 -> score 1.
  std::vector<int> same(40, 3);
  auto [m1, s1] = inception_score_from_probs(one_hot_rows(same, 8), 2);
  CHECK(m1 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s1 == doctest::Approx(0.0).epsilon(1e-12));

  // Balanced confident coverage of all K classes -> score K.
  std::vector<int> balanced;
  for (int rep = 0; rep < 10; ++rep)
    for (int k = 0; k < 32; ++k) balanced.push_back(k);
  auto [mk, sk] = inception_score_from_probs(one_hot_rows(balanced, 32), 2);
  CHECK(mk == doctest::Approx(32.0).epsilon(1e-9));
  CHECK(sk == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("inception score matches the formula oracle on random soft distributions") {
  Rng rng(701);
  int n = 60, k = 7;
  Tensor probs({n, k});
  for (int i = 0; i < n; ++i) {
    real sum = 0;
    for (int j = 0; j < k; ++j) {
      real v = std::exp(rng.normal());
      probs.data()[i * k + j] = v;
      sum += v;
    }
    for (int j = 0; j < k; ++j) probs.data()[i * k + j] /= sum;
  }
  auto [mean, stdev] = inception_score_from_probs(probs, 3);
  auto [rmean, rstd] = is_oracle(probs, 3);
  CHECK(mean == doctest::Approx(rmean).epsilon(1e-10));
  CHECK(stdev == doctest::Approx(rstd).epsilon(1e-8));

  // Bounds: 1 <= score <= K for any probability rows.
  CHECK(mean >= 1.0 - 1e-12);
  CHECK(mean <= static_cast<real>(k) + 1e-12);
}

TEST_CASE("inception score is invariant to image order within a split") {
  Rng rng(703);
  int n = 40, k = 5;
  Tensor probs({n, k});
  for (int i = 0; i < n; ++i) {
    real sum = 0;
    for (int j = 0; j < k; ++j) {
      real v = rng.uniform(0.05, 1.0);
      probs.data()[i * k + j] = v;
      sum += v;
    }
    for (int j = 0; j < k; ++j) probs.data()[i * k + j] /= sum;
  }
  auto [m1, s1] = inception_score_from_probs(probs, 2);

  // Shuffle rows within each half.
  Tensor shuffled = probs.clone();
  for (int half = 0; half < 2; ++half) {
    int lo = half * 20;
    for (int i = 19; i > 0; --i) {
      int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
      for (int c = 0; c < k; ++c)
        std::swap(shuffled.data()[(lo + i) * k + c], shuffled.data()[(lo + j) * k + c]);
    }
  }
  auto [m2, s2] = inception_score_from_probs(shuffled, 2);
  CHECK(m1 == doctest::Approx(m2).epsilon(1e-12));
  CHECK(s1 == doctest::Approx(s2).epsilon(1e-12));
}

TEST_CASE("inception score enforces the split-size precondition") {
  Tensor probs({19, 4});
  for (int i = 0; i < 19 * 4; ++i) probs.data()[i] = 0.25;
  CHECK_THROWS(inception_score_from_probs(probs, 2));
  CHECK_NOTHROW(inception_score_from_probs(probs, 1));
}

TEST_CASE("oracle classifier trains past the accuracy gate") {
  OracleClassifier& oracle = shared_oracle();
  CHECK(oracle.validated());
  CHECK(oracle.heldout_accuracy() >= 0.95);

  // Confidently classifies a fresh render.
  SceneSpec spec{1, 4, 2, 1, 0};  // orange square on gray
  Tensor probs = oracle.probabilities(reshape(render(spec, 32), {1, 3, 32, 32}));
  int best = 0;
  for (int k = 1; k < 32; ++k)
    if (probs.data()[k] > probs.data()[best]) best = k;
  CHECK(best == spec.class_id());
}

TEST_CASE("unvalidated oracle refuses to evaluate") {
  Rng rng(705);
  OracleClassifier oracle(rng);
  CHECK(!oracle.validated());
  CHECK_THROWS(oracle.probabilities(Tensor::zeros({1, 3, 32, 32})));
  CHECK_THROWS(oracle.features(Tensor::zeros({1, 3, 32, 32})));
}

TEST_CASE("real test renders score well above the degenerate floor") {
  OracleClassifier& oracle = shared_oracle();
  BuildConfig bc;
  bc.n_scenes = 64;
  bc.seed = 9;
  Dataset ds = build_dataset(bc);
  std::vector<Tensor> imgs;
  for (auto i : ds.test_indices)
    imgs.push_back(reshape(ds.scenes[i].images[2], {1, 3, 32, 32}));
  // Duplicate until we can afford two splits of >= 10.
  while (imgs.size() < 20) imgs.push_back(imgs[imgs.size() % 8]);
  Tensor batch = concat(imgs, 0);
  auto [mean, stdev] = inception_score(batch, oracle, 2);
  CHECK(mean > 2.0);  // diverse confident classes
  CHECK(mean <= 32.0 + 1e-9);
}

TEST_CASE("consistency ratio degenerate and null behaviors") {
  OracleClassifier& oracle = shared_oracle();
  BuildConfig bc;
  bc.n_scenes = 64;
  bc.seed = 21;
  Dataset ds = build_dataset(bc);
  Rng rng(707);
  GanConfig gc;
  GanModel model(ds.vocab.size(), gc, rng);

  // Identical captions and identical noise per pair side: intra distances
  // are exactly zero, so the ratio is zero.
  std::vector<EvalPair> degenerate;
  for (int p = 0; p < 6; ++p) {
    const Scene& scene = ds.scenes[ds.test_indices[static_cast<std::size_t>(p) % ds.test_indices.size()]];
    EvalPair pair;
    pair.y = p % 2;
    if (pair.y == 1) {
      pair.tokens_a = tokenize(scene.captions[0], ds.vocab);
      pair.tokens_b = pair.tokens_a;
      pair.z_seed_a = 1234;
      pair.z_seed_b = 1234;
    } else {
      const Scene& other = ds.scenes[ds.test_indices[(static_cast<std::size_t>(p) + 1) %
                                                     ds.test_indices.size()]];
      pair.tokens_a = tokenize(scene.captions[0], ds.vocab);
      pair.tokens_b = tokenize(other.captions[1], ds.vocab);
      pair.z_seed_a = 99 + static_cast<std::uint64_t>(p);
      pair.z_seed_b = 511 + static_cast<std::uint64_t>(p);
    }
    degenerate.push_back(std::move(pair));
  }
  ConsistencyResult deg = consistency_ratio(model, degenerate, oracle);
  CHECK(deg.intra_mean == 0.0);
  CHECK(deg.ratio == 0.0);

  // Untrained model with independent noise: intra and inter pairs look
  // statistically alike, so the ratio sits near 1.
  auto pairs = make_eval_pairs(ds, ds.vocab, /*use_test_split=*/true, 24, rng);
  ConsistencyResult null_model = consistency_ratio(model, pairs, oracle);
  CHECK(null_model.ratio > 0.5);
  CHECK(null_model.ratio < 1.6);

  // Both pair kinds are required.
  std::vector<EvalPair> intra_only(pairs.begin(), pairs.end());
  intra_only.erase(std::remove_if(intra_only.begin(), intra_only.end(),
                                  [](const EvalPair& p) { return p.y == 0; }),
                   intra_only.end());
  CHECK_THROWS(consistency_ratio(model, intra_only, oracle));
}

TEST_CASE("consistency ratio is scale-invariant in the feature distances") {
  Rng rng(711);
  std::vector<real> intra, inter;
  for (int i = 0; i < 20; ++i) {
    intra.push_back(rng.uniform(0.1, 2.0));
    inter.push_back(rng.uniform(0.1, 2.0));
  }
  ConsistencyResult base = consistency_from_distances(intra, inter);
  for (real c : {0.25, 3.0, 117.0}) {
    std::vector<real> si = intra, se = inter;
    for (real& v : si) v *= c;
    for (real& v : se) v *= c;
    ConsistencyResult scaled = consistency_from_distances(si, se);
    CHECK(scaled.ratio == doctest::Approx(base.ratio).epsilon(1e-12));
  }
  CHECK_THROWS(consistency_from_distances({}, inter));
  CHECK_THROWS(consistency_from_distances(intra, {}));
}

TEST_CASE("eval pair construction alternates and stays within the split") {
  BuildConfig bc;
  bc.n_scenes = 64;
  bc.seed = 33;
  Dataset ds = build_dataset(bc);
  Rng rng(709);
  auto pairs = make_eval_pairs(ds, ds.vocab, true, 10, rng);
  REQUIRE(pairs.size() == 10);
  int intra = 0;
  for (const auto& p : pairs) {
    intra += p.y;
    CHECK(!p.tokens_a.empty());
    CHECK(!p.tokens_b.empty());
  }
  CHECK(intra == 5);
}
