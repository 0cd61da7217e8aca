#include <doctest.h>

#include <cmath>

#include "t2i/text_encoder.hpp"

using namespace t2i;

namespace {

Vocabulary toy_vocab() {
  return Vocabulary::build({"a red circle", "a blue square", "the green triangle is small"});
}

}  // namespace

TEST_CASE("tokenize lowercases, strips punctuation, and maps unknowns") {
  Vocabulary vocab = toy_vocab();
  auto ids = tokenize("A red circle.", vocab);
  REQUIRE(ids.size() == 3);
  CHECK(ids[0] == vocab.id("a"));
  CHECK(ids[1] == vocab.id("red"));
  CHECK(ids[2] == vocab.id("circle"));
  for (int id : ids) CHECK(id != Vocabulary::kUnk);

  CHECK_THROWS(tokenize("", vocab));
  CHECK_THROWS(tokenize("!!! ...", vocab));

  auto same = tokenize("RED red", vocab);
  CHECK(same[0] == same[1]);

  auto unk = tokenize("zebra red", vocab);
  CHECK(unk[0] == Vocabulary::kUnk);
  CHECK(unk[1] == vocab.id("red"));
}

TEST_CASE("vocabulary indices are dense with pad at zero and round-trip") {
  Vocabulary vocab = toy_vocab();
  CHECK(vocab.id("<pad>") == 0);
  CHECK(vocab.id("<unk>") == 1);
  for (int i = 0; i < vocab.size(); ++i) CHECK(vocab.id(vocab.token(i)) == i);

  Vocabulary restored = Vocabulary::deserialize(vocab.serialize());
  CHECK(restored.size() == vocab.size());
  for (int i = 0; i < vocab.size(); ++i) CHECK(restored.token(i) == vocab.token(i));
}

TEST_CASE("single-token sentence makes the word column equal the sentence feature") {
  Rng rng(301);
  TextEncoder enc(10, rng, 6, 4);
  auto out = enc.encode({3});
  CHECK(out.word_feats.shape() == std::vector<int>{8, 1});
  CHECK(out.sentence_feat.shape() == std::vector<int>{8});
  for (int i = 0; i < 8; ++i)
    CHECK(out.word_feats.at({i, 0}) == doctest::Approx(out.sentence_feat.at({i})).epsilon(1e-15));
}

TEST_CASE("zero-initialized encoder follows the gate algebra") {
  Rng rng(303);
  TextEncoder enc(4, rng, 3, 2);
  // Zero all parameters: gates are 0, so c = sigmoid(0)*0 + sigmoid(0)*tanh(0) = 0
  // and h = sigmoid(0)*tanh(0) = 0.
  for (Tensor* t : {&enc.embedding, &enc.fwd_wx, &enc.fwd_wh, &enc.fwd_b, &enc.bwd_wx, &enc.bwd_wh,
                    &enc.bwd_b})
    std::fill(t->data(), t->data() + t->numel(), 0.0);
  auto out = enc.encode({1, 2});
  for (std::int64_t i = 0; i < out.word_feats.numel(); ++i) CHECK(out.word_feats.data()[i] == 0.0);

  // With only biases set, one step computes
  //   c = sigmoid(bf)*0 + sigmoid(bi)*tanh(bg),  h = sigmoid(bo)*tanh(c).
  real bi = 0.3, bf = -0.2, bg = 0.7, bo = 0.1;
  for (int h = 0; h < 2; ++h) {
    enc.fwd_b.data()[0 + h] = bi;
    enc.fwd_b.data()[2 + h] = bf;
    enc.fwd_b.data()[4 + h] = bg;
    enc.fwd_b.data()[6 + h] = bo;
  }
  auto one = enc.encode({1});
  auto sig = [](real v) { return 1.0 / (1.0 + std::exp(-v)); };
  real c1 = sig(bi) * std::tanh(bg);
  real h1 = sig(bo) * std::tanh(c1);
  for (int h = 0; h < 2; ++h) CHECK(one.sentence_feat.at({h}) == doctest::Approx(h1).epsilon(1e-12));
}

TEST_CASE("reversing token order changes the sentence feature") {
  Rng rng(305);
  TextEncoder enc(12, rng, 8, 6);
  auto fwd = enc.encode({2, 5, 9});
  auto rev = enc.encode({9, 5, 2});
  real diff = 0;
  for (int i = 0; i < 12; ++i)
    diff += std::abs(fwd.sentence_feat.at({i}) - rev.sentence_feat.at({i}));
  CHECK(diff > 1e-8);
}

TEST_CASE("encode is deterministic and emits one column per token") {
  Rng rng(307);
  TextEncoder enc(12, rng, 8, 6);
  std::vector<int> tokens = {2, 7, 4, 11};
  auto a = enc.encode(tokens);
  auto b = enc.encode(tokens);
  CHECK(a.word_feats.shape() == std::vector<int>{12, 4});
  for (std::int64_t i = 0; i < a.word_feats.numel(); ++i)
    CHECK(a.word_feats.data()[i] == b.word_feats.data()[i]);
}

TEST_CASE("padding tokens contribute no columns") {
  Rng rng(309);
  TextEncoder enc(12, rng, 8, 6);
  auto clean = enc.encode({3, 5});
  auto padded = enc.encode({Vocabulary::kPad, 3, Vocabulary::kPad, 5, Vocabulary::kPad});
  CHECK(padded.word_feats.shape() == clean.word_feats.shape());
  for (std::int64_t i = 0; i < clean.word_feats.numel(); ++i)
    CHECK(padded.word_feats.data()[i] == clean.word_feats.data()[i]);
}

TEST_CASE("encode validates token range and length") {
  Rng rng(311);
  TextEncoder enc(8, rng, 4, 3);
  CHECK_THROWS(enc.encode({9}));
  CHECK_THROWS(enc.encode({-2}));
  CHECK_THROWS(enc.encode({}));
  std::vector<int> too_long(33, 2);
  CHECK_THROWS(enc.encode(too_long));
}

TEST_CASE("encoder gradients pass a finite-difference check") {
  Rng rng(313);
  TextEncoder enc(6, rng, 4, 3);
  std::vector<int> tokens = {1, 4, 2};
  auto f = [&](const Tensor& t) {
    TextEncoder local = enc;
    local.fwd_wx = t;
    auto out = local.encode(tokens);
    return sum(square(out.sentence_feat));
  };
  CHECK(grad_check(f, enc.fwd_wx.clone()).pass);

  auto femb = [&](const Tensor& t) {
    TextEncoder local = enc;
    local.embedding = t;
    auto out = local.encode(tokens);
    return sum(square(out.word_feats));
  };
  CHECK(grad_check(femb, enc.embedding.clone()).pass);
}

namespace {

// Tiny synthetic matching corpus: constant-color images whose caption names
// the color channel mix.
std::vector<MatchingExample> toy_matching_corpus(const Vocabulary& vocab, int n_scenes) {
  std::vector<MatchingExample> corpus;
  const char* words[4] = {"red", "green", "blue", "gray"};
  for (int s = 0; s < n_scenes; ++s) {
    int kind = s % 4;
    Tensor img({3, 32, 32});
    for (int c = 0; c < 3; ++c) {
      real level = kind == 3 ? 0.0 : (c == kind ? 0.8 : -0.8);
      for (int i = 0; i < 32 * 32; ++i) img.data()[c * 32 * 32 + i] = level;
    }
    MatchingExample ex;
    ex.image = img;
    ex.tokens = tokenize(std::string("a ") + words[kind] + " patch", vocab);
    ex.scene_id = s;
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

}  // namespace

TEST_CASE("matching pretraining separates matched from mismatched pairs") {
  Vocabulary vocab =
      Vocabulary::build({"a red patch", "a green patch", "a blue patch", "a gray patch"});
  Rng rng(315);
  TextEncoder text_enc(vocab.size(), rng);
  ImageEncoder img_enc(rng);
  auto corpus = toy_matching_corpus(vocab, 24);

  // Untrained: matched and mismatched cosines are statistically alike.
  MatchingStats before = matching_eval(text_enc, img_enc, corpus);
  CHECK(std::abs(before.margin()) < 0.25);

  MatchingConfig cfg;
  cfg.epochs = 6;
  cfg.batch = 8;
  cfg.seed = 42;
  MatchingStats stats = pretrain_matching(text_enc, img_enc, corpus, cfg);
  CHECK(stats.final_epoch_loss < stats.first_epoch_loss);
  CHECK(stats.margin() > 0.1);

  CHECK_THROWS(pretrain_matching(text_enc, img_enc,
                                 std::vector<MatchingExample>(corpus.begin(), corpus.begin() + 4),
                                 cfg));
}

TEST_CASE("single-kind corpus still shows a decreasing loss") {
  Vocabulary vocab = Vocabulary::build({"a red patch"});
  Rng rng(317);
  TextEncoder text_enc(vocab.size(), rng);
  ImageEncoder img_enc(rng);
  std::vector<MatchingExample> corpus;
  for (int s = 0; s < 12; ++s) {
    Tensor img({3, 32, 32});
    for (std::int64_t i = 0; i < img.numel(); ++i) img.data()[i] = 0.5;
    // Tiny per-scene jitter keeps images distinct but uninformative.
    img.data()[static_cast<std::size_t>(s)] += 0.01 * s;
    corpus.push_back({img, tokenize("a red patch", vocab), s});
  }
  MatchingConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 8;
  cfg.seed = 7;
  MatchingStats stats = pretrain_matching(text_enc, img_enc, corpus, cfg);
  CHECK(stats.final_epoch_loss < stats.first_epoch_loss);
}
