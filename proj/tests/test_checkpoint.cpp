#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "t2i/checkpoint.hpp"

using namespace t2i;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "t2i_ckpt_test";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("param store registers, shares storage, and rejects duplicates") {
  ParamStore store;
  Tensor t({2, 2}, {1, 2, 3, 4});
  Tensor& reg = store.add("layer.w", t);
  CHECK(reg.shares_data(t));
  CHECK(reg.trainable());
  CHECK_THROWS(store.add("layer.w", t));
  store.add("layer.stats", Tensor({2}), /*trainable=*/false);
  CHECK(store.trainable_entries().size() == 1);
  CHECK(store.matching("layer.").size() == 2);
}

TEST_CASE("checkpoint save/load/save produces byte-identical files") {
  Rng rng(211);
  ParamStore store;
  store.add("a.w", Tensor::randn({3, 4}, rng));
  store.add("a.b", Tensor::randn({4}, rng));
  store.add("a.stats", Tensor::randn({4}, rng), false);
  store.quantize_f32();

  Checkpoint ckpt;
  ckpt.config_hash = 0xdeadbeefcafe1234ull;
  store_to_checkpoint(store, &ckpt);
  ckpt.blobs.emplace_back("rng.noise", rng.serialize());

  auto dir = temp_dir();
  auto p1 = dir / "one.ckpt";
  auto p2 = dir / "two.ckpt";
  save_checkpoint(p1.string(), ckpt);
  Checkpoint loaded = load_checkpoint(p1.string());
  CHECK(loaded.config_hash == ckpt.config_hash);
  save_checkpoint(p2.string(), loaded);
  CHECK(slurp(p1) == slurp(p2));

  // Values survive the f32 round trip exactly because the store was quantized.
  ParamStore store2;
  store2.add("a.w", Tensor::zeros({3, 4}));
  store2.add("a.b", Tensor::zeros({4}));
  store2.add("a.stats", Tensor::zeros({4}), false);
  checkpoint_to_store(loaded, &store2);
  for (int i = 0; i < 12; ++i)
    CHECK(store2.get("a.w").data()[i] == store.get("a.w").data()[i]);
}

TEST_CASE("checkpoint version mismatch is a hard error") {
  auto dir = temp_dir();
  auto p = dir / "versioned.ckpt";
  Checkpoint ckpt;
  ckpt.tensors.emplace_back("x", Tensor({1}, {1.0}));
  save_checkpoint(p.string(), ckpt);

  // Patch the version field (4 bytes after the magic).
  auto bytes = slurp(p);
  bytes[4] = 99;
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  os.close();
  CHECK_THROWS_WITH_AS(load_checkpoint(p.string()),
                       doctest::Contains("version mismatch"), std::runtime_error);
}

TEST_CASE("loading into a store checks names and shapes") {
  Checkpoint ckpt;
  ckpt.tensors.emplace_back("w", Tensor({2}, {1, 2}));
  ParamStore missing;
  missing.add("other", Tensor({2}));
  CHECK_THROWS(checkpoint_to_store(ckpt, &missing));
  ParamStore wrong_shape;
  wrong_shape.add("w", Tensor({3}));
  CHECK_THROWS(checkpoint_to_store(ckpt, &wrong_shape));
}

TEST_CASE("rng state round-trips through blobs") {
  Rng rng(977);
  rng.normal();
  rng.uniform();
  std::string state = rng.serialize();
  Rng copy;
  copy.deserialize(state);
  for (int i = 0; i < 16; ++i) CHECK(copy.raw() == rng.raw());
}

TEST_CASE("f32 quantization is idempotent") {
  Rng rng(313);
  std::vector<real> v(64);
  for (auto& x : v) x = rng.normal() * 1e-3;
  std::vector<real> once = v;
  quantize_f32(once);
  std::vector<real> twice = once;
  quantize_f32(twice);
  CHECK(once == twice);
}
