#pragma once

#include <cstdint>
#include <string>

#include "t2i/gan.hpp"
#include "t2i/trainer.hpp"

namespace t2i {

// Run settings loaded from a key = value file ('#' starts a comment).
// Unknown keys are rejected; every violation in a file is reported at once.
// Defaults follow the training recipe: alpha 0.1, epsilon 1.0, feature
// length 256, Adam(2e-4, 0.5, 0.999).
struct RunConfig {
  std::uint64_t seed = 1;
  std::string scbn_mode = "word";  // off | sentence | word | both
  real alpha = 0.1;
  real epsilon = 1.0;
  real contrastive_weight = 1.0;
  real adversarial_weight = 1.0;
  std::string contrastive_stages = "d0,d1,d2";
  real intra_ratio = 0.5;
  int batch_pairs = 8;
  int epochs = 2;
  real lr = 2e-4;
  real beta1 = 0.5;
  real beta2 = 0.999;
  bool train_encoder = false;
  bool debug_checks = false;
  int checkpoint_interval = 0;  // steps; 0 = initial + final only
  int sample_interval = 0;      // steps; 0 = no periodic sample grids
  std::string data_dir;
  std::string out_dir = "runs/default";
  std::string encoder_ckpt;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text);

  // Key = value listing in fixed key order; basis of the config hash.
  std::string canonical_text() const;
  std::uint64_t hash() const;

  void validate() const;
  TrainConfig train_config() const;
  GanConfig gan_config() const;
  std::array<bool, 3> stages() const;
};

std::uint64_t fnv1a(const std::string& text);

}  // namespace t2i
