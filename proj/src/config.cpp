// Copyright 2026 The fedbat Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedbat/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace fedbat {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno), "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
    kv[section.empty() ? key : section + "." + key] = value;
  }
  return kv;
}

class Extractor {
 public:
  explicit Extractor(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) {
    used_.insert(key);
    return kv_.count(key) > 0;
  }
  std::string str(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }
  long integer(const std::string& key, long fallback) {
    used_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const long v = std::stol(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError(key, "expected an integer, got '" + it->second + "'");
    }
  }
  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    used_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError(key, "expected an unsigned integer, got '" + it->second + "'");
    }
  }
  double real(const std::string& key, double fallback) {
    used_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError(key, "expected a real number, got '" + it->second + "'");
    }
  }
  bool boolean(const std::string& key, bool fallback) {
    used_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError(key, "expected true/false, got '" + it->second + "'");
  }
  std::vector<int> int_list(const std::string& key, std::vector<int> fallback) {
    used_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<int> out;
    std::istringstream s(it->second);
    std::string item;
    while (std::getline(s, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        out.push_back(std::stoi(item));
      } catch (...) {
        throw ConfigError(key, "expected a comma-separated integer list");
      }
    }
    if (out.empty()) throw ConfigError(key, "list must not be empty");
    return out;
  }
  void reject_unknown() const {
    for (const auto& [key, value] : kv_)
      if (!used_.count(key)) throw ConfigError(key, "unknown key");
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> used_;
};

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (rounds < 0) throw ConfigError("experiment.rounds", "must be >= 0");
  if (n_clients < 1) throw ConfigError("experiment.clients", "must be >= 1");
  if (clients_per_round < 1 || clients_per_round > n_clients)
    throw ConfigError("experiment.clients_per_round", "must be in [1, clients]");
  if (local_epochs < 0) throw ConfigError("experiment.local_epochs", "must be >= 0");
  if (local_epochs == 0 && local_steps < 1)
    throw ConfigError("experiment.local_steps", "must be >= 1");
  if (batch_size < 1) throw ConfigError("experiment.batch_size", "must be >= 1");
  if (lr < 0.0) throw ConfigError("experiment.lr", "must be >= 0");
  if (warmup_ratio < 0.0 || warmup_ratio > 1.0)
    throw ConfigError("experiment.warmup_ratio", "must be in [0, 1]");
  if (rho < 0.0) throw ConfigError("experiment.rho", "must be >= 0");
  if (eval_every < 1) throw ConfigError("experiment.eval_every", "must be >= 1");
  if (algorithm == CodecKind::kFedBat && local_epochs == 0 &&
      static_cast<int>(warmup_ratio * local_steps) >= local_steps)
    throw ConfigError("experiment.warmup_ratio",
                      "fedbat needs at least one binarization-aware step");
  if (!(codec.alpha > 0.0)) throw ConfigError("codec.alpha", "must be > 0");
  if (codec.sigma < 0.0) throw ConfigError("codec.sigma", "must be >= 0");

  if (dataset.kind == "blobs") {
    if (dataset.classes < 2) throw ConfigError("dataset.classes", "must be >= 2");
    if (dataset.dim < 1) throw ConfigError("dataset.dim", "must be >= 1");
    if (dataset.n < dataset.classes)
      throw ConfigError("dataset.n", "must be >= classes");
    if (dataset.spread < 0.0) throw ConfigError("dataset.spread", "must be >= 0");
    if (dataset.test_n < 1) throw ConfigError("dataset.test_n", "must be >= 1");
  } else if (dataset.kind == "idx") {
    if (dataset.train_images.empty())
      throw ConfigError("dataset.train_images", "missing required field");
    if (dataset.train_labels.empty())
      throw ConfigError("dataset.train_labels", "missing required field");
    if (dataset.test_images.empty())
      throw ConfigError("dataset.test_images", "missing required field");
    if (dataset.test_labels.empty())
      throw ConfigError("dataset.test_labels", "missing required field");
  } else {
    throw ConfigError("dataset.kind", "must be 'blobs' or 'idx'");
  }

  if (partition_scheme != "iid" && partition_scheme != "dirichlet" &&
      partition_scheme != "label-shard")
    throw ConfigError("partition.scheme", "must be iid, dirichlet or label-shard");
  if (partition_scheme == "dirichlet" && !(dirichlet_beta > 0.0))
    throw ConfigError("partition.beta", "must be > 0");
  if (partition_scheme == "label-shard" && labels_per_client < 1)
    throw ConfigError("partition.labels_per_client", "must be >= 1");

  if (model.kind != "logreg" && model.kind != "mlp")
    throw ConfigError("model.kind", "must be 'logreg' or 'mlp'");
  for (int h : model.hidden)
    if (h < 1) throw ConfigError("model.hidden", "layer widths must be >= 1");
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides) {
  auto kv = parse_kv(text);
  for (const auto& o : overrides) apply_override(kv, o);
  Extractor ex(std::move(kv));

  ExperimentConfig cfg;
  if (!ex.has("experiment.algorithm"))
    throw ConfigError("experiment.algorithm", "missing required field");
  try {
    cfg.algorithm = codec_from_string(ex.str("experiment.algorithm", ""));
  } catch (const ArgumentError& e) {
    throw ConfigError("experiment.algorithm", e.what());
  }
  cfg.seed = ex.u64("experiment.seed", cfg.seed);
  cfg.rounds = static_cast<int>(ex.integer("experiment.rounds", cfg.rounds));
  cfg.n_clients = static_cast<int>(ex.integer("experiment.clients", cfg.n_clients));
  cfg.clients_per_round =
      static_cast<int>(ex.integer("experiment.clients_per_round", cfg.clients_per_round));
  cfg.local_steps = static_cast<int>(ex.integer("experiment.local_steps", cfg.local_steps));
  cfg.local_epochs = static_cast<int>(ex.integer("experiment.local_epochs", cfg.local_epochs));
  cfg.batch_size = static_cast<int>(ex.integer("experiment.batch_size", cfg.batch_size));
  cfg.lr = ex.real("experiment.lr", cfg.lr);
  cfg.warmup_ratio = ex.real("experiment.warmup_ratio", cfg.warmup_ratio);
  cfg.rho = ex.real("experiment.rho", cfg.rho);
  cfg.eval_every = static_cast<int>(ex.integer("experiment.eval_every", cfg.eval_every));
  cfg.out_dir = ex.str("experiment.out_dir", cfg.out_dir);
  cfg.dump_messages = ex.boolean("experiment.dump_messages", cfg.dump_messages);

  cfg.codec = default_codec_params(cfg.algorithm);
  cfg.codec.alpha = ex.real("codec.alpha", cfg.codec.alpha);
  cfg.codec.sigma = ex.real("codec.sigma", cfg.codec.sigma);

  cfg.dataset.kind = ex.str("dataset.kind", cfg.dataset.kind);
  cfg.dataset.n = ex.integer("dataset.n", cfg.dataset.n);
  cfg.dataset.dim = static_cast<int>(ex.integer("dataset.dim", cfg.dataset.dim));
  cfg.dataset.classes = static_cast<int>(ex.integer("dataset.classes", cfg.dataset.classes));
  cfg.dataset.spread = ex.real("dataset.spread", cfg.dataset.spread);
  cfg.dataset.test_n = ex.integer("dataset.test_n", cfg.dataset.test_n);
  cfg.dataset.train_images = ex.str("dataset.train_images", "");
  cfg.dataset.train_labels = ex.str("dataset.train_labels", "");
  cfg.dataset.test_images = ex.str("dataset.test_images", "");
  cfg.dataset.test_labels = ex.str("dataset.test_labels", "");

  cfg.partition_scheme = ex.str("partition.scheme", cfg.partition_scheme);
  cfg.dirichlet_beta = ex.real("partition.beta", cfg.dirichlet_beta);
  cfg.labels_per_client =
      static_cast<int>(ex.integer("partition.labels_per_client", cfg.labels_per_client));

  cfg.model.kind = ex.str("model.kind", cfg.model.kind);
  cfg.model.hidden = ex.int_list("model.hidden", cfg.model.hidden);

  ex.reject_unknown();
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
  return parse_config_text(text, {});
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void apply_override(std::map<std::string, std::string>& kv,
                    const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError(assignment, "override must look like section.key=value");
  kv[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

std::string echo_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[experiment]\n";
  out << "algorithm = " << to_string(cfg.algorithm) << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "rounds = " << cfg.rounds << "\n";
  out << "clients = " << cfg.n_clients << "\n";
  out << "clients_per_round = " << cfg.clients_per_round << "\n";
  out << "local_steps = " << cfg.local_steps << "\n";
  out << "local_epochs = " << cfg.local_epochs << "\n";
  out << "batch_size = " << cfg.batch_size << "\n";
  out << "lr = " << fmt_real(cfg.lr) << "\n";
  out << "warmup_ratio = " << fmt_real(cfg.warmup_ratio) << "\n";
  out << "rho = " << fmt_real(cfg.rho) << "\n";
  out << "eval_every = " << cfg.eval_every << "\n";
  out << "out_dir = " << cfg.out_dir << "\n";
  out << "dump_messages = " << (cfg.dump_messages ? "true" : "false") << "\n";
  out << "\n[codec]\n";
  out << "alpha = " << fmt_real(cfg.codec.alpha) << "\n";
  out << "sigma = " << fmt_real(cfg.codec.sigma) << "\n";
  out << "\n[dataset]\n";
  out << "kind = " << cfg.dataset.kind << "\n";
  if (cfg.dataset.kind == "blobs") {
    out << "n = " << cfg.dataset.n << "\n";
    out << "dim = " << cfg.dataset.dim << "\n";
    out << "classes = " << cfg.dataset.classes << "\n";
    out << "spread = " << fmt_real(cfg.dataset.spread) << "\n";
    out << "test_n = " << cfg.dataset.test_n << "\n";
  } else {
    out << "train_images = " << cfg.dataset.train_images << "\n";
    out << "train_labels = " << cfg.dataset.train_labels << "\n";
    out << "test_images = " << cfg.dataset.test_images << "\n";
    out << "test_labels = " << cfg.dataset.test_labels << "\n";
  }
  out << "\n[partition]\n";
  out << "scheme = " << cfg.partition_scheme << "\n";
  out << "beta = " << fmt_real(cfg.dirichlet_beta) << "\n";
  out << "labels_per_client = " << cfg.labels_per_client << "\n";
  out << "\n[model]\n";
  out << "kind = " << cfg.model.kind << "\n";
  out << "hidden = ";
  for (std::size_t i = 0; i < cfg.model.hidden.size(); ++i)
    out << (i ? "," : "") << cfg.model.hidden[i];
  out << "\n";
  return out.str();
}

}  // namespace fedbat
