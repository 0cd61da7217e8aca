#include "t2i/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

namespace t2i {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct Parser {
  RunConfig cfg;
  std::vector<std::string> errors;

  bool parse_real(const std::string& v, real* out) {
    try {
      std::size_t used = 0;
      *out = std::stod(v, &used);
      return used == v.size();
    } catch (...) {
      return false;
    }
  }
  bool parse_int(const std::string& v, int* out) {
    try {
      std::size_t used = 0;
      *out = std::stoi(v, &used);
      return used == v.size();
    } catch (...) {
      return false;
    }
  }
  bool parse_u64(const std::string& v, std::uint64_t* out) {
    try {
      std::size_t used = 0;
      *out = std::stoull(v, &used);
      return used == v.size();
    } catch (...) {
      return false;
    }
  }
  bool parse_bool(const std::string& v, bool* out) {
    if (v == "true" || v == "1") {
      *out = true;
      return true;
    }
    if (v == "false" || v == "0") {
      *out = false;
      return true;
    }
    return false;
  }

  void apply(const std::string& key, const std::string& value, int line) {
    auto bad = [&](const char* what) {
      errors.push_back("line " + std::to_string(line) + ": " + key + " expects " + what +
                       ", got \"" + value + "\"");
    };
    if (key == "seed") {
      if (!parse_u64(value, &cfg.seed)) bad("an unsigned integer");
    } else if (key == "scbn_mode") {
      if (value != "off" && value != "sentence" && value != "word" && value != "both")
        bad("off|sentence|word|both");
      else
        cfg.scbn_mode = value;
    } else if (key == "alpha") {
      if (!parse_real(value, &cfg.alpha)) bad("a real");
    } else if (key == "epsilon") {
      if (!parse_real(value, &cfg.epsilon)) bad("a real");
    } else if (key == "contrastive_weight") {
      if (!parse_real(value, &cfg.contrastive_weight)) bad("a real");
    } else if (key == "adversarial_weight") {
      if (!parse_real(value, &cfg.adversarial_weight)) bad("a real");
    } else if (key == "contrastive_stages") {
      cfg.contrastive_stages = value;
    } else if (key == "intra_ratio") {
      if (!parse_real(value, &cfg.intra_ratio)) bad("a real");
    } else if (key == "batch_pairs") {
      if (!parse_int(value, &cfg.batch_pairs)) bad("an integer");
    } else if (key == "epochs") {
      if (!parse_int(value, &cfg.epochs)) bad("an integer");
    } else if (key == "lr") {
      if (!parse_real(value, &cfg.lr)) bad("a real");
    } else if (key == "beta1") {
      if (!parse_real(value, &cfg.beta1)) bad("a real");
    } else if (key == "beta2") {
      if (!parse_real(value, &cfg.beta2)) bad("a real");
    } else if (key == "train_encoder") {
      if (!parse_bool(value, &cfg.train_encoder)) bad("true|false");
    } else if (key == "debug_checks") {
      if (!parse_bool(value, &cfg.debug_checks)) bad("true|false");
    } else if (key == "checkpoint_interval") {
      if (!parse_int(value, &cfg.checkpoint_interval)) bad("an integer");
    } else if (key == "sample_interval") {
      if (!parse_int(value, &cfg.sample_interval)) bad("an integer");
    } else if (key == "data_dir") {
      cfg.data_dir = value;
    } else if (key == "out_dir") {
      cfg.out_dir = value;
    } else if (key == "encoder_ckpt") {
      cfg.encoder_ckpt = value;
    } else {
      errors.push_back("line " + std::to_string(line) + ": unknown key \"" + key + "\"");
    }
  }
};

}  // namespace

RunConfig RunConfig::from_text(const std::string& text) {
  Parser parser;
  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    std::string line = raw;
    std::size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      parser.errors.push_back("line " + std::to_string(line_no) + ": expected key = value");
      continue;
    }
    parser.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no);
  }
  if (!parser.errors.empty()) {
    std::string joined = "invalid config:";
    for (const auto& e : parser.errors) joined += "\n  " + e;
    fail(joined);
  }
  parser.cfg.validate();
  return parser.cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "cannot open config file: " + path);
  std::stringstream buffer;
  buffer << is.rdbuf();
  return from_text(buffer.str());
}

std::array<bool, 3> RunConfig::stages() const {
  std::array<bool, 3> out = {false, false, false};
  std::string rest = contrastive_stages;
  while (!rest.empty()) {
    std::size_t comma = rest.find(',');
    std::string tok = trim(comma == std::string::npos ? rest : rest.substr(0, comma));
    rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
    if (tok.empty()) continue;
    if (tok == "d0")
      out[0] = true;
    else if (tok == "d1")
      out[1] = true;
    else if (tok == "d2")
      out[2] = true;
    else
      fail("contrastive_stages expects a comma list of d0,d1,d2; got \"" + tok + "\"");
  }
  return out;
}

void RunConfig::validate() const {
  std::vector<std::string> errors;
  if (!(alpha > 0 && alpha < epsilon))
    errors.push_back("alpha must satisfy 0 < alpha < epsilon");
  if (intra_ratio < 0 || intra_ratio > 1) errors.push_back("intra_ratio must lie in [0, 1]");
  if (batch_pairs < 2) errors.push_back("batch_pairs must be at least 2");
  if (epochs < 0) errors.push_back("epochs must be non-negative");
  if (lr < 0) errors.push_back("lr must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
    errors.push_back("beta1/beta2 must lie in [0, 1)");
  if (contrastive_weight < 0 || adversarial_weight < 0)
    errors.push_back("loss weights must be non-negative");
  try {
    stages();
  } catch (const std::exception& e) {
    errors.push_back(e.what());
  }
  if (!errors.empty()) {
    std::string joined = "invalid config:";
    for (const auto& e : errors) joined += "\n  " + e;
    fail(joined);
  }
}

std::string RunConfig::canonical_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "seed = " << seed << '\n';
  os << "scbn_mode = " << scbn_mode << '\n';
  os << "alpha = " << alpha << '\n';
  os << "epsilon = " << epsilon << '\n';
  os << "contrastive_weight = " << contrastive_weight << '\n';
  os << "adversarial_weight = " << adversarial_weight << '\n';
  auto st = stages();
  os << "contrastive_stages = ";
  bool first = true;
  for (int s = 0; s < 3; ++s)
    if (st[static_cast<std::size_t>(s)]) {
      os << (first ? "" : ",") << "d" << s;
      first = false;
    }
  os << '\n';
  os << "intra_ratio = " << intra_ratio << '\n';
  os << "batch_pairs = " << batch_pairs << '\n';
  os << "epochs = " << epochs << '\n';
  os << "lr = " << lr << '\n';
  os << "beta1 = " << beta1 << '\n';
  os << "beta2 = " << beta2 << '\n';
  os << "train_encoder = " << (train_encoder ? "true" : "false") << '\n';
  os << "debug_checks = " << (debug_checks ? "true" : "false") << '\n';
  os << "checkpoint_interval = " << checkpoint_interval << '\n';
  os << "sample_interval = " << sample_interval << '\n';
  os << "data_dir = " << data_dir << '\n';
  os << "out_dir = " << out_dir << '\n';
  os << "encoder_ckpt = " << encoder_ckpt << '\n';
  return os.str();
}

std::uint64_t RunConfig::hash() const { return fnv1a(canonical_text()); }

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.loss.alpha = alpha;
  tc.loss.epsilon = epsilon;
  tc.loss.contrastive_stages = stages();
  tc.loss.contrastive_weight = contrastive_weight;
  tc.loss.adversarial_weight = adversarial_weight;
  tc.loss.intra_ratio = intra_ratio;
  tc.batch_pairs = batch_pairs;
  tc.lr = lr;
  tc.beta1 = beta1;
  tc.beta2 = beta2;
  tc.epochs = epochs;
  tc.seed = seed;
  tc.train_encoder = train_encoder;
  tc.debug_checks = debug_checks;
  tc.checkpoint_interval = checkpoint_interval;
  return tc;
}

GanConfig RunConfig::gan_config() const {
  GanConfig gc;
  gc.scbn_mode = scbn_mode_from_string(scbn_mode);
  return gc;
}

}  // namespace t2i
