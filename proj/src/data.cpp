#include "t2i/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

namespace t2i {

namespace fs = std::filesystem;
using nlohmann::json;

const std::array<const char*, 4> kShapeNames = {"circle", "square", "triangle", "cross"};
const std::array<const char*, 8> kFgColorNames = {"red",    "green",  "blue", "yellow",
                                                  "orange", "purple", "pink", "teal"};
const std::array<const char*, 4> kBgColorNames = {"white", "black", "gray", "tan"};
const std::array<const char*, 2> kSizeNames = {"small", "large"};
const std::array<const char*, 5> kPositionNames = {"center", "left", "right", "top", "bottom"};

namespace {

// 8-bit palette anchors; tensors hold u8/127.5 - 1 so a PNG round trip is
// value-exact.
constexpr std::uint8_t kFgRgb[8][3] = {{220, 40, 40},   {40, 180, 60},  {50, 80, 220},
                                       {230, 210, 50},  {240, 140, 30}, {150, 60, 200},
                                       {240, 130, 190}, {40, 190, 190}};
constexpr std::uint8_t kBgRgb[4][3] = {{245, 245, 245},
                                       {15, 15, 15},
                                       {128, 128, 128},
                                       {210, 185, 150}};

real u8_level(std::uint8_t v) { return static_cast<real>(v) / 127.5 - 1.0; }

struct Center {
  real x, y;
};

Center position_center(int position) {
  switch (position) {
    case 1: return {0.30, 0.50};   // left
    case 2: return {0.70, 0.50};   // right
    case 3: return {0.50, 0.30};   // top
    case 4: return {0.50, 0.70};   // bottom
    default: return {0.50, 0.50};  // center
  }
}

bool inside_shape(const SceneSpec& spec, real px, real py, real cx, real cy, real rad) {
  real dx = px - cx, dy = py - cy;
  switch (spec.shape) {
    case 0:  // circle
      return dx * dx + dy * dy <= rad * rad;
    case 1:  // square
      return std::abs(dx) <= rad && std::abs(dy) <= rad;
    case 2: {  // upright triangle, apex at the top
      if (dy < -rad || dy > rad) return false;
      real half_width = (dy + rad) / (2.0 * rad) * rad;
      return std::abs(dx) <= half_width;
    }
    default:  // cross: two overlapping bars
      return (std::abs(dx) <= 0.35 * rad && std::abs(dy) <= rad) ||
             (std::abs(dy) <= 0.35 * rad && std::abs(dx) <= rad);
  }
}

}  // namespace

Tensor render(const SceneSpec& spec, int resolution) {
  require(resolution == 8 || resolution == 16 || resolution == 32,
          "render supports resolutions 8, 16, 32");
  Tensor img({3, resolution, resolution});
  Center c = position_center(spec.position);
  real cx = c.x * resolution;
  real cy = c.y * resolution;
  real rad = (spec.size == 1 ? 0.32 : 0.18) * resolution;
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x) {
      bool fg = inside_shape(spec, x + 0.5, y + 0.5, cx, cy, rad);
      const std::uint8_t* rgb = fg ? kFgRgb[spec.fg_color] : kBgRgb[spec.bg_color];
      for (int ch = 0; ch < 3; ++ch)
        img.data()[(ch * resolution + y) * resolution + x] = u8_level(rgb[ch]);
    }
  return img;
}

// ---------------------------------------------------------------------------
// Captions
// ---------------------------------------------------------------------------

namespace {

// Slots: {size} {color} {shape} {bg} {pos}. Template 0 mentions everything;
// the rest each omit at least one attribute.
const std::vector<const char*> kTemplates = {
    "a {size} {color} {shape} at the {pos} on a {bg} background",
    "a {size} {color} {shape} on a {bg} background",
    "the {shape} is {color}",
    "a {color} {shape} at the {pos}",
    "there is a {size} {shape} colored {color}",
    "a {color} {shape} on a {bg} background",
    "the picture shows a {size} {color} {shape}",
    "a {size} {shape} in {color} at the {pos}",
    "{color} {shape} against a {bg} backdrop",
    "an image of a {color} {shape}",
    "the {bg} background holds a {size} {color} {shape}",
    "a {size} {color} {shape}",
};

std::string fill_template(const std::string& tpl, const SceneSpec& spec) {
  std::string out = tpl;
  auto replace_all = [&out](const std::string& key, const std::string& value) {
    std::size_t pos;
    while ((pos = out.find(key)) != std::string::npos) out.replace(pos, key.size(), value);
  };
  replace_all("{size}", kSizeNames[static_cast<std::size_t>(spec.size)]);
  replace_all("{color}", kFgColorNames[static_cast<std::size_t>(spec.fg_color)]);
  replace_all("{shape}", kShapeNames[static_cast<std::size_t>(spec.shape)]);
  replace_all("{bg}", kBgColorNames[static_cast<std::size_t>(spec.bg_color)]);
  replace_all("{pos}", kPositionNames[static_cast<std::size_t>(spec.position)]);
  return out;
}

}  // namespace

int caption_template_count() { return static_cast<int>(kTemplates.size()); }

std::vector<std::string> make_captions(const SceneSpec& spec, int k, Rng& rng) {
  require(k >= 1 && k <= static_cast<int>(kTemplates.size()),
          "template bank too small for " + std::to_string(k) + " distinct captions");
  std::vector<std::size_t> order(kTemplates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::string> captions;
  for (int i = 0; i < k; ++i)
    captions.push_back(fill_template(kTemplates[order[static_cast<std::size_t>(i)]], spec));
  return captions;
}

// ---------------------------------------------------------------------------
// Dataset construction
// ---------------------------------------------------------------------------

Dataset build_dataset(const BuildConfig& cfg) {
  require(cfg.n_scenes >= 2 * kNumClasses, "need at least " + std::to_string(2 * kNumClasses) +
                                               " scenes for a class-disjoint split");
  Rng rng(cfg.seed);

  // Test classes: one shape knocked out per color, shapes cycled with a
  // seeded offset. Every shape and color word keeps training coverage.
  int offset = static_cast<int>(rng.below(4));
  std::set<int> test_classes;
  for (int color = 0; color < 8; ++color) {
    int shape = (color + offset) % 4;
    test_classes.insert(shape * 8 + color);
  }

  Dataset ds;
  std::vector<std::string> all_captions;
  for (int i = 0; i < cfg.n_scenes; ++i) {
    Scene scene;
    scene.id = i;
    scene.spec.shape = (i % kNumClasses) / 8;
    scene.spec.fg_color = i % 8;
    scene.spec.bg_color = static_cast<int>(rng.below(4));
    scene.spec.size = static_cast<int>(rng.below(2));
    scene.spec.position = static_cast<int>(rng.below(5));
    scene.captions = make_captions(scene.spec, cfg.captions_per_scene, rng);
    for (std::size_t r = 0; r < kResolutions.size(); ++r)
      scene.images[r] = render(scene.spec, kResolutions[r]);
    scene.is_train = test_classes.count(scene.spec.class_id()) == 0;
    for (const auto& c : scene.captions) all_captions.push_back(c);
    ds.scenes.push_back(std::move(scene));
  }
  for (std::size_t i = 0; i < ds.scenes.size(); ++i)
    (ds.scenes[i].is_train ? ds.train_indices : ds.test_indices).push_back(i);
  ds.vocab = Vocabulary::build(all_captions);
  return ds;
}

// ---------------------------------------------------------------------------
// Manifest (JSON lines) + PNG files
// ---------------------------------------------------------------------------

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  require(!ec, "cannot create dataset directory: " + dir);

  std::ofstream manifest(root / "manifest.jsonl", std::ios::trunc);
  require(manifest.good(), "cannot write manifest in " + dir);
  for (const auto& scene : ds.scenes) {
    json rec;
    rec["id"] = scene.id;
    rec["shape"] = kShapeNames[static_cast<std::size_t>(scene.spec.shape)];
    rec["color"] = kFgColorNames[static_cast<std::size_t>(scene.spec.fg_color)];
    rec["background"] = kBgColorNames[static_cast<std::size_t>(scene.spec.bg_color)];
    rec["size"] = kSizeNames[static_cast<std::size_t>(scene.spec.size)];
    rec["position"] = kPositionNames[static_cast<std::size_t>(scene.spec.position)];
    rec["split"] = scene.is_train ? "train" : "test";
    rec["captions"] = scene.captions;
    json paths;
    for (std::size_t r = 0; r < kResolutions.size(); ++r) {
      char name[64];
      std::snprintf(name, sizeof(name), "images/%05d_%d.png", scene.id, kResolutions[r]);
      paths["r" + std::to_string(kResolutions[r])] = name;
      write_png((root / name).string(), tensor_to_image(scene.images[r]));
    }
    rec["images"] = paths;
    manifest << rec.dump() << '\n';
  }
  require(manifest.good(), "manifest write failed in " + dir);
}

namespace {

int name_index(const std::string& name, const char* const* table, int n, const char* what) {
  for (int i = 0; i < n; ++i)
    if (name == table[i]) return i;
  fail(std::string("unknown ") + what + " in manifest: " + name);
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  fs::path root(dir);
  std::ifstream manifest(root / "manifest.jsonl");
  require(manifest.good(), "cannot open manifest: " + (root / "manifest.jsonl").string());

  Dataset ds;
  std::vector<std::string> all_captions;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const std::exception& e) {
      fail("manifest line " + std::to_string(line_no) + " is not valid JSON: " + e.what());
    }
    Scene scene;
    scene.id = rec.at("id").get<int>();
    scene.spec.shape = name_index(rec.at("shape"), kShapeNames.data(), 4, "shape");
    scene.spec.fg_color = name_index(rec.at("color"), kFgColorNames.data(), 8, "color");
    scene.spec.bg_color = name_index(rec.at("background"), kBgColorNames.data(), 4, "background");
    scene.spec.size = name_index(rec.at("size"), kSizeNames.data(), 2, "size");
    scene.spec.position = name_index(rec.at("position"), kPositionNames.data(), 5, "position");
    scene.is_train = rec.at("split").get<std::string>() == "train";
    for (const auto& c : rec.at("captions")) {
      scene.captions.push_back(c.get<std::string>());
      all_captions.push_back(scene.captions.back());
    }
    for (std::size_t r = 0; r < kResolutions.size(); ++r) {
      std::string rel = rec.at("images").at("r" + std::to_string(kResolutions[r]));
      scene.images[r] = image_to_tensor(read_png((root / rel).string()));
    }
    ds.scenes.push_back(std::move(scene));
  }
  require(!ds.scenes.empty(), "manifest has no scenes: " + dir);
  for (std::size_t i = 0; i < ds.scenes.size(); ++i)
    (ds.scenes[i].is_train ? ds.train_indices : ds.test_indices).push_back(i);
  ds.vocab = Vocabulary::build(all_captions);
  return ds;
}

std::vector<MatchingExample> matching_corpus(const Dataset& ds) {
  std::vector<MatchingExample> corpus;
  for (std::size_t i : ds.train_indices) {
    const Scene& scene = ds.scenes[i];
    for (const auto& caption : scene.captions) {
      MatchingExample ex;
      ex.image = scene.images[2];  // 32 px
      ex.tokens = tokenize(caption, ds.vocab);
      ex.scene_id = scene.id;
      corpus.push_back(std::move(ex));
    }
  }
  return corpus;
}

}  // namespace t2i
