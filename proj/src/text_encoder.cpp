#include "t2i/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

namespace t2i {

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  push("<pad>");
  push("<unk>");
}

void Vocabulary::push(const std::string& token) {
  index_[token] = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  Vocabulary vocab;
  for (const auto& text : texts)
    for (const auto& tok : clean_tokens(text))
      if (!vocab.contains(tok)) vocab.push(tok);
  return vocab;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  require(id >= 0 && id < size(), "vocabulary id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::serialize() const {
  std::ostringstream os;
  for (const auto& t : tokens_) os << t << '\n';
  return os.str();
}

Vocabulary Vocabulary::deserialize(const std::string& blob) {
  Vocabulary vocab;
  std::istringstream is(blob);
  std::string line;
  int i = 0;
  while (std::getline(is, line)) {
    if (i == 0) {
      require(line == "<pad>", "vocabulary blob must start with <pad>");
    } else if (i == 1) {
      require(line == "<unk>", "vocabulary blob must have <unk> second");
    } else {
      vocab.push(line);
    }
    ++i;
  }
  require(i >= 2, "vocabulary blob too short");
  return vocab;
}

std::vector<std::string> clean_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
  auto toks = clean_tokens(text);
  require(!toks.empty(), "text is empty after cleaning: \"" + text + "\"");
  std::vector<int> ids;
  ids.reserve(toks.size());
  for (const auto& t : toks) ids.push_back(vocab.id(t));
  return ids;
}

// ---------------------------------------------------------------------------
// TextEncoder
// ---------------------------------------------------------------------------

TextEncoder::TextEncoder(int vocab_size, Rng& rng, int embed_dim, int hidden)
    : vocab_size(vocab_size), embed_dim(embed_dim), hidden(hidden) {
  real se = 0.1;
  real sx = 1.0 / std::sqrt(static_cast<real>(embed_dim));
  real sh = 1.0 / std::sqrt(static_cast<real>(hidden));
  embedding = Tensor::randn({vocab_size, embed_dim}, rng, se);
  fwd_wx = Tensor::randn({embed_dim, 4 * hidden}, rng, sx);
  fwd_wh = Tensor::randn({hidden, 4 * hidden}, rng, sh);
  fwd_b = Tensor::zeros({4 * hidden});
  bwd_wx = Tensor::randn({embed_dim, 4 * hidden}, rng, sx);
  bwd_wh = Tensor::randn({hidden, 4 * hidden}, rng, sh);
  bwd_b = Tensor::zeros({4 * hidden});
}

namespace {

// One LSTM step; h and c are [H], x is [E]. Gate order: input, forget,
// cell, output.
std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const Tensor& wx, const Tensor& wh, const Tensor& b,
                                    int hidden) {
  Tensor gates = add(add(matmul(reshape(x, {1, x.dim(0)}), wx),
                         matmul(reshape(h, {1, hidden}), wh)),
                     reshape(b, {1, 4 * hidden}));
  Tensor flat = reshape(gates, {4 * hidden});
  Tensor gi = sigmoid(slice1d(flat, 0, hidden));
  Tensor gf = sigmoid(slice1d(flat, hidden, hidden));
  Tensor gg = tanh_op(slice1d(flat, 2 * hidden, hidden));
  Tensor go = sigmoid(slice1d(flat, 3 * hidden, hidden));
  Tensor c_next = add(mul(gf, c), mul(gi, gg));
  Tensor h_next = mul(go, tanh_op(c_next));
  return {h_next, c_next};
}

}  // namespace

EncoderOutput TextEncoder::encode(const std::vector<int>& tokens) const {
  std::vector<int> ids;
  for (int t : tokens) {
    if (t == Vocabulary::kPad) continue;  // padding contributes no columns
    require(t >= 0 && t < vocab_size, "token index out of vocabulary range: " + std::to_string(t));
    ids.push_back(t);
  }
  int T = static_cast<int>(ids.size());
  require(T >= 1, "encode needs at least one non-pad token");
  require(T <= kMaxTokens, "encode supports at most " + std::to_string(kMaxTokens) + " tokens");

  std::vector<Tensor> xs;
  xs.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) xs.push_back(select0(embedding, ids[static_cast<std::size_t>(t)]));

  std::vector<Tensor> fwd_h(static_cast<std::size_t>(T));
  Tensor h = Tensor::zeros({hidden});
  Tensor c = Tensor::zeros({hidden});
  for (int t = 0; t < T; ++t) {
    auto [hn, cn] = lstm_step(xs[static_cast<std::size_t>(t)], h, c, fwd_wx, fwd_wh, fwd_b, hidden);
    h = hn;
    c = cn;
    fwd_h[static_cast<std::size_t>(t)] = h;
  }
  Tensor fwd_last = h;

  std::vector<Tensor> bwd_h(static_cast<std::size_t>(T));
  h = Tensor::zeros({hidden});
  c = Tensor::zeros({hidden});
  for (int t = T - 1; t >= 0; --t) {
    auto [hn, cn] = lstm_step(xs[static_cast<std::size_t>(t)], h, c, bwd_wx, bwd_wh, bwd_b, hidden);
    h = hn;
    c = cn;
    bwd_h[static_cast<std::size_t>(t)] = h;
  }
  Tensor bwd_first = h;  // backward state after consuming the first word

  std::vector<Tensor> columns;
  columns.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    Tensor col = concat({fwd_h[static_cast<std::size_t>(t)], bwd_h[static_cast<std::size_t>(t)]}, 0);
    columns.push_back(reshape(col, {2 * hidden, 1}));
  }
  EncoderOutput out;
  out.word_feats = columns.size() == 1 ? columns[0] : concat(columns, 1);
  out.sentence_feat = concat({fwd_last, bwd_first}, 0);
  return out;
}

void TextEncoder::register_params(ParamStore& store, const std::string& prefix) {
  embedding = store.add(prefix + ".embedding", embedding);
  fwd_wx = store.add(prefix + ".fwd_wx", fwd_wx);
  fwd_wh = store.add(prefix + ".fwd_wh", fwd_wh);
  fwd_b = store.add(prefix + ".fwd_b", fwd_b);
  bwd_wx = store.add(prefix + ".bwd_wx", bwd_wx);
  bwd_wh = store.add(prefix + ".bwd_wh", bwd_wh);
  bwd_b = store.add(prefix + ".bwd_b", bwd_b);
}

// ---------------------------------------------------------------------------
// ImageEncoder
// ---------------------------------------------------------------------------

ImageEncoder::ImageEncoder(Rng& rng) {
  k1 = Tensor::randn({16, 3, 4, 4}, rng, 0.05);
  b1 = Tensor::zeros({16});
  k2 = Tensor::randn({32, 16, 4, 4}, rng, 0.05);
  b2 = Tensor::zeros({32});
  k3 = Tensor::randn({64, 32, 4, 4}, rng, 0.05);
  b3 = Tensor::zeros({64});
  dw = Tensor::randn({1024, 256}, rng, 1.0 / std::sqrt(1024.0));
  db = Tensor::zeros({256});
}

Tensor ImageEncoder::forward(const Tensor& images) const {
  require(images.ndim() == 4 && images.dim(1) == 3 && images.dim(2) == 32 && images.dim(3) == 32,
          "image encoder expects [N x 3 x 32 x 32], got " + shape_str(images.shape()));
  Tensor h = leaky_relu(conv2d(images, k1, b1, 2, 1));
  h = leaky_relu(conv2d(h, k2, b2, 2, 1));
  h = leaky_relu(conv2d(h, k3, b3, 2, 1));
  h = reshape(h, {images.dim(0), 1024});
  return add(matmul(h, dw), db);
}

void ImageEncoder::register_params(ParamStore& store, const std::string& prefix) {
  k1 = store.add(prefix + ".k1", k1);
  b1 = store.add(prefix + ".b1", b1);
  k2 = store.add(prefix + ".k2", k2);
  b2 = store.add(prefix + ".b2", b2);
  k3 = store.add(prefix + ".k3", k3);
  b3 = store.add(prefix + ".b3", b3);
  dw = store.add(prefix + ".dw", dw);
  db = store.add(prefix + ".db", db);
}

// ---------------------------------------------------------------------------
// Matching pretraining
// ---------------------------------------------------------------------------

namespace {

// Rows scaled to unit L2 norm.
Tensor normalize_rows(const Tensor& x) {
  Tensor sq = sum_axis(square(x), 1, /*keepdim=*/true);        // [N x 1]
  Tensor norm = sqrt_op(add_scalar(sq, 1e-12));
  return div(x, norm);
}

// Mean of -log softmax(S, axis)[i, i] over i.
Tensor diagonal_nll(const Tensor& scores, int axis) {
  int n = scores.dim(0);
  Tensor logp = log_op(softmax(scores, axis));
  Tensor acc = Tensor::scalar(0.0);
  for (int i = 0; i < n; ++i) acc = add(acc, slice1d(select0(logp, i), i, 1));
  return scale(acc, -1.0 / static_cast<real>(n));
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  std::vector<Tensor> shaped;
  shaped.reserve(rows.size());
  for (const auto& r : rows) shaped.push_back(reshape(r, {1, r.dim(0)}));
  return shaped.size() == 1 ? shaped[0] : concat(shaped, 0);
}

}  // namespace

MatchingStats matching_eval(const TextEncoder& text_enc, const ImageEncoder& img_enc,
                            const std::vector<MatchingExample>& examples, real /*temperature*/) {
  require(!examples.empty(), "matching_eval needs examples");
  std::vector<Tensor> img_rows, txt_rows;
  for (const auto& ex : examples) {
    Tensor img = reshape(ex.image, {1, 3, 32, 32});
    img_rows.push_back(select0(img_enc.forward(img), 0));
    txt_rows.push_back(text_enc.encode(ex.tokens).sentence_feat);
  }
  Tensor ei = normalize_rows(stack_rows(img_rows));
  Tensor et = normalize_rows(stack_rows(txt_rows));
  Tensor sims = matmul(ei, transpose2d(et));  // [N x N] cosine similarities
  int n = sims.dim(0);
  MatchingStats stats;
  real matched = 0, mismatched = 0;
  int mism_count = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      real v = sims.at({i, j});
      if (i == j) {
        matched += v;
      } else if (examples[static_cast<std::size_t>(i)].scene_id !=
                 examples[static_cast<std::size_t>(j)].scene_id) {
        mismatched += v;
        ++mism_count;
      }
    }
  stats.matched_mean = matched / n;
  stats.mismatched_mean = mism_count > 0 ? mismatched / mism_count : 0.0;
  return stats;
}

MatchingStats pretrain_matching(TextEncoder& text_enc, ImageEncoder& img_enc,
                                const std::vector<MatchingExample>& corpus,
                                const MatchingConfig& cfg) {
  require(static_cast<int>(corpus.size()) >= cfg.batch,
          "matching corpus smaller than batch size");

  // Group caption variants by scene so a batch never contains two captions
  // of the same image.
  std::vector<int> scene_ids;
  std::unordered_map<int, std::vector<std::size_t>> by_scene;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    int sid = corpus[i].scene_id;
    if (!by_scene.count(sid)) scene_ids.push_back(sid);
    by_scene[sid].push_back(i);
  }
  require(static_cast<int>(scene_ids.size()) >= cfg.batch,
          "matching corpus needs at least batch-size distinct scenes");

  Rng rng(cfg.seed);
  std::vector<int> heldout_scenes, train_scenes;
  {
    std::vector<int> shuffled = scene_ids;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    std::size_t n_held = std::max<std::size_t>(
        1, static_cast<std::size_t>(cfg.heldout_fraction * static_cast<real>(shuffled.size())));
    heldout_scenes.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_held));
    train_scenes.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_held), shuffled.end());
  }
  require(static_cast<int>(train_scenes.size()) >= cfg.batch,
          "matching corpus too small after the held-out split");

  ParamStore store;
  text_enc.register_params(store, "enc");
  img_enc.register_params(store, "imgenc");
  store.quantize_f32();
  Adam::Config acfg;
  acfg.lr = cfg.lr;
  Adam opt(store, acfg);

  MatchingStats stats;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = train_scenes;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
    real epoch_loss = 0;
    int batches = 0;
    for (std::size_t start = 0; start + static_cast<std::size_t>(cfg.batch) <= order.size();
         start += static_cast<std::size_t>(cfg.batch)) {
      Tape tape;
      TapeScope scope(tape);
      std::vector<Tensor> img_rows, txt_rows;
      for (int b = 0; b < cfg.batch; ++b) {
        const auto& variants = by_scene[order[start + static_cast<std::size_t>(b)]];
        const auto& ex = corpus[variants[rng.below(variants.size())]];
        img_rows.push_back(select0(img_enc.forward(reshape(ex.image, {1, 3, 32, 32})), 0));
        txt_rows.push_back(text_enc.encode(ex.tokens).sentence_feat);
      }
      Tensor ei = normalize_rows(stack_rows(img_rows));
      Tensor et = normalize_rows(stack_rows(txt_rows));
      Tensor scores = scale(matmul(ei, transpose2d(et)), cfg.temperature);
      Tensor loss = add(diagonal_nll(scores, 1), diagonal_nll(scores, 0));
      epoch_loss += loss.value();
      ++batches;
      opt.zero_grads();
      tape.backward(loss);
      opt.step();
    }
    real avg = batches > 0 ? epoch_loss / batches : 0.0;
    if (epoch == 0) stats.first_epoch_loss = avg;
    stats.final_epoch_loss = avg;
  }

  std::vector<MatchingExample> heldout;
  for (int sid : heldout_scenes) heldout.push_back(corpus[by_scene[sid][0]]);
  MatchingStats held = matching_eval(text_enc, img_enc, heldout);
  stats.matched_mean = held.matched_mean;
  stats.mismatched_mean = held.mismatched_mean;
  return stats;
}

}  // namespace t2i
