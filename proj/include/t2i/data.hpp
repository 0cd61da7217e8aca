#pragma once

#include <array>
#include <string>
#include <vector>

#include "t2i/image_io.hpp"
#include "t2i/rng.hpp"
#include "t2i/tensor.hpp"
#include "t2i/text_encoder.hpp"

namespace t2i {

// Enumerated scene attributes. The class identity is (shape, fg_color):
// 4 shapes x 8 colors = 32 classes.
struct SceneSpec {
  int shape = 0;     // circle, square, triangle, cross
  int fg_color = 0;  // 8 foreground colors
  int bg_color = 0;  // 4 background colors, word-disjoint from foregrounds
  int size = 1;      // small, large
  int position = 0;  // center, left, right, top, bottom

  int class_id() const { return shape * 8 + fg_color; }
  bool operator==(const SceneSpec& o) const = default;
};

extern const std::array<const char*, 4> kShapeNames;
extern const std::array<const char*, 8> kFgColorNames;
extern const std::array<const char*, 4> kBgColorNames;
extern const std::array<const char*, 2> kSizeNames;
extern const std::array<const char*, 5> kPositionNames;
constexpr int kNumClasses = 32;
constexpr std::array<int, 3> kResolutions = {8, 16, 32};

// Deterministic rasterization, values in [-1, 1], no anti-aliasing.
Tensor render(const SceneSpec& spec, int resolution);

// k pairwise-distinct captions, each consistent with the spec. Needs the
// template bank to be large enough for k distinct draws.
std::vector<std::string> make_captions(const SceneSpec& spec, int k, Rng& rng);
int caption_template_count();

struct Scene {
  int id = 0;
  SceneSpec spec;
  std::vector<std::string> captions;
  std::array<Tensor, 3> images;  // 8, 16, 32 px
  bool is_train = true;
};

struct Dataset {
  std::vector<Scene> scenes;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  Vocabulary vocab;  // built over every caption in the corpus

  const Scene& scene(std::size_t i) const { return scenes[i]; }
  std::size_t size() const { return scenes.size(); }
};

struct BuildConfig {
  int n_scenes = 512;
  std::uint64_t seed = 1;
  int captions_per_scene = 5;
};

// Scenes cycle through all 32 classes; the train/test split is
// class-disjoint (24 train / 8 test classes) and chosen so every shape and
// color word still appears in the training split.
Dataset build_dataset(const BuildConfig& cfg);

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// Pluggable source for real caption datasets. Only the synthetic builder is
// shipped; external corpora can implement this to reuse the training stack.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual Dataset load() = 0;
};

// (image, caption) pairs over the training split, for encoder pretraining.
std::vector<MatchingExample> matching_corpus(const Dataset& ds);

}  // namespace t2i
