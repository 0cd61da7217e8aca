// Command-line entry point: data generation, encoder pretraining, GAN
// training, sampling, evaluation, and loss-curve plots.
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "t2i/config.hpp"
#include "t2i/data.hpp"
#include "t2i/gan.hpp"
#include "t2i/image_io.hpp"
#include "t2i/metrics.hpp"
#include "t2i/plot.hpp"
#include "t2i/trainer.hpp"

namespace fs = std::filesystem;
using namespace t2i;

namespace {

struct LoadedModel {
  Vocabulary vocab;
  std::unique_ptr<GanModel> model;
  std::unique_ptr<ParamStore> store;
  std::uint64_t config_hash = 0;
};

// Rebuilds a GanModel from a training checkpoint (parameters, vocabulary,
// and the conditioning mode travel inside the file).
LoadedModel load_model(const std::string& ckpt_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  LoadedModel out;
  out.vocab = Vocabulary::deserialize(ckpt.blob("vocab"));
  GanConfig gc;
  gc.scbn_mode = scbn_mode_from_string(ckpt.blob("scbn_mode"));
  Rng dummy(0);
  out.model = std::make_unique<GanModel>(out.vocab.size(), gc, dummy);
  out.store = std::make_unique<ParamStore>();
  out.model->register_params(*out.store);
  checkpoint_to_store(ckpt, out.store.get());
  out.config_hash = ckpt.config_hash;
  return out;
}

std::vector<int> tokenize_warn_unknown(const std::string& text, const Vocabulary& vocab) {
  auto words = clean_tokens(text);
  require(!words.empty(), "text is empty after cleaning: \"" + text + "\"");
  for (const auto& w : words)
    if (!vocab.contains(w))
      std::cerr << "t2i warning: unknown word \"" << w << "\" mapped to <unk>\n";
  return tokenize(text, vocab);
}

OracleClassifier obtain_oracle(const std::string& cache_path, std::uint64_t seed) {
  if (!cache_path.empty() && fs::exists(cache_path)) {
    OracleClassifier oracle = OracleClassifier::load(cache_path);
    require(oracle.validated(), "cached oracle failed its validation gate: " + cache_path);
    std::cerr << "t2i: loaded oracle (held-out accuracy " << oracle.heldout_accuracy() << ")\n";
    return oracle;
  }
  std::cerr << "t2i: training oracle classifier...\n";
  Rng rng(seed);
  OracleClassifier oracle(rng);
  OracleConfig cfg;
  cfg.seed = seed;
  oracle.train(cfg);
  std::cerr << "t2i: oracle held-out accuracy " << oracle.heldout_accuracy() << "\n";
  if (!cache_path.empty()) oracle.save(cache_path);
  return oracle;
}

int cmd_gen_data(int scenes, std::uint64_t seed, const std::string& out, int captions) {
  BuildConfig cfg;
  cfg.n_scenes = scenes;
  cfg.seed = seed;
  cfg.captions_per_scene = captions;
  Dataset ds = build_dataset(cfg);
  save_dataset(ds, out);
  std::cout << "wrote " << ds.scenes.size() << " scenes (" << ds.train_indices.size()
            << " train / " << ds.test_indices.size() << " test) to " << out << "\n";
  return 0;
}

int cmd_pretrain(const std::string& data, const std::string& out, int epochs, int batch,
                 std::uint64_t seed, double lr) {
  require(epochs >= 1, "pretraining needs at least one epoch");
  Dataset ds = load_dataset(data);
  auto corpus = matching_corpus(ds);
  Rng rng(seed);
  TextEncoder enc(ds.vocab.size(), rng);
  ImageEncoder img_enc(rng);
  MatchingConfig cfg;
  cfg.epochs = epochs;
  cfg.batch = batch;
  cfg.seed = seed;
  cfg.lr = lr;
  MatchingStats stats = pretrain_matching(enc, img_enc, corpus, cfg);
  std::cout << "matching loss " << stats.first_epoch_loss << " -> " << stats.final_epoch_loss
            << ", held-out cosine matched " << stats.matched_mean << " vs mismatched "
            << stats.mismatched_mean << " (margin " << stats.margin() << ")\n";

  ParamStore store;
  enc.register_params(store, "enc");
  img_enc.register_params(store, "imgenc");
  store.quantize_f32();
  Checkpoint ckpt;
  store_to_checkpoint(store, &ckpt);
  ckpt.blobs.emplace_back("vocab", ds.vocab.serialize());
  ckpt.blobs.emplace_back("matching.margin", std::to_string(stats.margin()));
  save_checkpoint(out, ckpt);
  std::cout << "wrote encoder checkpoint " << out << "\n";
  return 0;
}

void write_sample_grid(GanModel& model, const Dataset& ds, std::uint64_t z_seed,
                       const std::string& path) {
  const Scene& scene = ds.scenes[ds.train_indices[0]];
  std::vector<int> tokens = tokenize(scene.captions[0], ds.vocab);
  Rng zrng(z_seed);
  Tensor z = Tensor::randn({1, model.cfg.z_dim}, zrng);
  BatchEnc enc = model.encode_batch({tokens});
  GenOutputs out = model.generate(z, enc, NormMode::Eval);
  std::vector<ImageU8> tiles;
  for (int s = 0; s < 3; ++s)
    tiles.push_back(tensor_to_image(select0(out.images[static_cast<std::size_t>(s)], 0)));
  write_png(path, tile_row(tiles));
}

int cmd_train(const std::string& config_path, const std::string& resume) {
  RunConfig rc = RunConfig::from_file(config_path);
  require(!rc.data_dir.empty(), "config must set data_dir");
  require(!rc.encoder_ckpt.empty(), "config must set encoder_ckpt");
  Dataset ds = load_dataset(rc.data_dir);

  Checkpoint enc_ckpt = load_checkpoint(rc.encoder_ckpt);
  require(enc_ckpt.blob("vocab") == ds.vocab.serialize(),
          "encoder checkpoint vocabulary does not match the dataset");

  Rng root(rc.seed);
  Rng init_rng = root.fork(0);
  GanModel model(ds.vocab.size(), rc.gan_config(), init_rng);
  Trainer trainer(model, ds, rc.train_config());

  // Pretrained, frozen text encoder.
  for (auto* e : trainer.params().matching("enc.")) {
    const Tensor& src = enc_ckpt.tensor(e->name);
    require(src.shape() == e->tensor.shape(), "encoder checkpoint shape mismatch: " + e->name);
    std::copy(src.data(), src.data() + src.numel(), e->tensor.data());
  }

  fs::create_directories(fs::path(rc.out_dir) / "samples");
  {
    std::ofstream cfg_copy(fs::path(rc.out_dir) / "config_used.txt");
    cfg_copy << rc.canonical_text();
  }

  bool resumed = false;
  if (!resume.empty()) {
    Checkpoint ckpt = load_checkpoint(resume);
    require(ckpt.config_hash == rc.hash(),
            "resume checkpoint was written under a different config");
    trainer.restore(ckpt);
    resumed = true;
    std::cout << "resumed from " << resume << " at step " << trainer.step_count() << "\n";
  }

  std::string csv_path = (fs::path(rc.out_dir) / "losses.csv").string();
  bool fresh_csv = !resumed || !fs::exists(csv_path);
  std::ofstream csv(csv_path, fresh_csv ? std::ios::trunc : std::ios::app);
  require(csv.good(), "cannot open loss csv: " + csv_path);
  if (fresh_csv) csv << LossReport::csv_header() << "\n";

  auto on_step = [&](const LossReport& r) {
    csv << r.csv_row() << "\n";
    csv.flush();
    if (r.step % 10 == 0 || r.step == 1)
      std::cout << "step " << r.step << "  d_adv " << r.d_adv_total << "  g_adv " << r.g_adv_total
                << "  contr " << r.contr_total << "\n";
    if (rc.sample_interval > 0 && r.step % rc.sample_interval == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "samples/step_%06lld.png",
                    static_cast<long long>(r.step));
      write_sample_grid(model, ds, rc.seed, (fs::path(rc.out_dir) / name).string());
    }
  };
  auto on_ckpt = [&](std::int64_t step) {
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt_%06lld.t2ck", static_cast<long long>(step));
    save_checkpoint((fs::path(rc.out_dir) / name).string(),
                    trainer.make_checkpoint(rc.hash()));
  };

  trainer.train_loop(rc.epochs, on_step, on_ckpt);
  std::cout << "finished at step " << trainer.step_count() << "; outputs in " << rc.out_dir
            << "\n";
  return 0;
}

int cmd_sample(const std::string& ckpt, const std::string& text, std::uint64_t seed,
               const std::string& out) {
  LoadedModel lm = load_model(ckpt);
  std::vector<int> tokens = tokenize_warn_unknown(text, lm.vocab);
  Rng zrng(seed);
  Tensor z = Tensor::randn({1, lm.model->cfg.z_dim}, zrng);
  BatchEnc enc = lm.model->encode_batch({tokens});
  GenOutputs gen = lm.model->generate(z, enc, NormMode::Eval);
  std::vector<ImageU8> tiles;
  for (int s = 0; s < 3; ++s)
    tiles.push_back(tensor_to_image(select0(gen.images[static_cast<std::size_t>(s)], 0)));
  write_png(out, tile_row(tiles));
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& metric, int n,
             std::uint64_t seed, const std::string& oracle_cache) {
  LoadedModel lm = load_model(ckpt);
  Dataset ds = load_dataset(data);
  OracleClassifier oracle = obtain_oracle(oracle_cache, 7);
  nlohmann::json out;
  out["config_hash"] = lm.config_hash;
  Rng rng(seed);
  if (metric == "is") {
    std::vector<std::vector<int>> rows;
    std::vector<std::uint64_t> z_seeds;
    for (int i = 0; i < n; ++i) {
      const Scene& scene = ds.scenes[ds.test_indices[static_cast<std::size_t>(i) %
                                                     ds.test_indices.size()]];
      rows.push_back(
          tokenize_warn_unknown(scene.captions[rng.below(scene.captions.size())], lm.vocab));
      z_seeds.push_back(rng.raw());
    }
    Tensor images = generate_images32(*lm.model, rows, z_seeds);
    int splits = std::max(1, std::min(10, n / 10));
    auto [mean, stdev] = inception_score(images, oracle, splits);
    out["metric"] = "is";
    out["mean"] = mean;
    out["std"] = stdev;
    out["n_images"] = n;
    out["n_splits"] = splits;
  } else {
    auto pairs = make_eval_pairs(ds, lm.vocab, /*use_test_split=*/true, n, rng);
    ConsistencyResult res = consistency_ratio(*lm.model, pairs, oracle);
    out["metric"] = "consistency";
    out["ratio"] = res.ratio;
    out["intra_mean"] = res.intra_mean;
    out["inter_mean"] = res.inter_mean;
    out["n_pairs"] = n;
  }
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_plot(const std::vector<std::string>& runs, const std::string& out) {
  std::vector<Series> series;
  for (const auto& path : runs) {
    CsvTable table = parse_loss_csv(path);
    std::string stem = fs::path(path).filename().string();
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      if (table.columns[c] == "step") continue;
      Series s;
      s.label = runs.size() == 1 ? table.columns[c] : stem + ":" + table.columns[c];
      for (const auto& row : table.rows) s.values.push_back(row[c]);
      series.push_back(std::move(s));
    }
  }
  ImageU8 img = render_series_plot(series);
  write_png(out, img);
  for (std::size_t i = 0; i < series.size(); ++i) {
    auto rgb = plot_color(i);
    std::cout << "legend: " << series[i].label << " = rgb(" << int(rgb[0]) << "," << int(rgb[1])
              << "," << int(rgb[2]) << ")\n";
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale text-to-image GAN workbench"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "build the synthetic shapes dataset");
  int gen_scenes = 512;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  int gen_captions = 5;
  gen->add_option("--scenes", gen_scenes, "number of scenes");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--captions", gen_captions, "captions per scene");

  auto* pre = app.add_subcommand("pretrain-encoder", "matching-pretrain the text encoder");
  std::string pre_data, pre_out;
  int pre_epochs = 12, pre_batch = 16;
  std::uint64_t pre_seed = 1;
  double pre_lr = 2e-3;
  pre->add_option("--data", pre_data, "dataset directory")->required();
  pre->add_option("--out", pre_out, "output checkpoint path")->required();
  pre->add_option("--epochs", pre_epochs, "pretraining epochs");
  pre->add_option("--batch", pre_batch, "batch size");
  pre->add_option("--seed", pre_seed, "seed");
  pre->add_option("--lr", pre_lr, "learning rate");

  auto* train = app.add_subcommand("train", "run the paired training loop");
  std::string train_config, train_resume;
  train->add_option("--config", train_config, "run config file")->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");

  auto* sample = app.add_subcommand("sample", "generate a three-stage grid for a caption");
  std::string s_ckpt, s_text, s_out;
  std::uint64_t s_seed = 1;
  sample->add_option("--ckpt", s_ckpt, "training checkpoint")->required();
  sample->add_option("--text", s_text, "caption text")->required();
  sample->add_option("--seed", s_seed, "noise seed");
  sample->add_option("--out", s_out, "output png path")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string e_ckpt, e_data, e_metric, e_oracle;
  int e_n = 96;
  std::uint64_t e_seed = 1;
  eval->add_option("--ckpt", e_ckpt, "training checkpoint")->required();
  eval->add_option("--data", e_data, "dataset directory")->required();
  eval->add_option("--metric", e_metric, "metric name")
      ->required()
      ->check(CLI::IsMember({"is", "consistency"}));
  eval->add_option("--n", e_n, "images or pairs to evaluate");
  eval->add_option("--seed", e_seed, "evaluation seed");
  eval->add_option("--oracle-cache", e_oracle, "oracle checkpoint cache path");

  auto* plot = app.add_subcommand("plot", "render loss curves from csv logs");
  std::vector<std::string> p_runs;
  std::string p_out;
  plot->add_option("--runs", p_runs, "loss csv files")->required()->expected(-1);
  plot->add_option("--out", p_out, "output png path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_scenes, gen_seed, gen_out, gen_captions);
    if (pre->parsed()) return cmd_pretrain(pre_data, pre_out, pre_epochs, pre_batch, pre_seed, pre_lr);
    if (train->parsed()) return cmd_train(train_config, train_resume);
    if (sample->parsed()) return cmd_sample(s_ckpt, s_text, s_seed, s_out);
    if (eval->parsed()) return cmd_eval(e_ckpt, e_data, e_metric, e_n, e_seed, e_oracle);
    if (plot->parsed()) return cmd_plot(p_runs, p_out);
  } catch (const std::exception& e) {
    std::cerr << "t2i error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
