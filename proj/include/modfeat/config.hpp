/*
 * Copyright 2026 The modfeat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MODFEAT_CONFIG_HPP
#define MODFEAT_CONFIG_HPP

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "modfeat/data/csv.hpp"
#include "modfeat/data/dataset.hpp"
#include "modfeat/data/split.hpp"
#include "modfeat/trainer.hpp"

namespace modfeat {

struct ConfigKey {
  const char* section;
  const char* key;
  const char* default_value;
};

/// Every accepted key with its default. Order is the order of the resolved file.
inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys = {
      {"data", "source", "synthetic"},
      {"data", "csv_path", ""},
      {"data", "num_classes", "7"},
      {"data", "num_domains", "4"},
      {"data", "signal_dim", "16"},
      {"data", "noise_dim", "16"},
      {"data", "samples_per_class_per_domain", "150"},
      {"data", "class_sep", "3"},
      {"data", "domain_shift", "6"},
      {"data", "domain_jitter", "0.1"},
      {"data", "data_seed", "0"},
      {"data", "target_domain", "rotate"},
      {"data", "labels_per_class", "10"},
      {"model", "hidden_dims", "64,64"},
      {"model", "feature_dim", "32"},
      {"model", "dropout_p", "0.05"},
      {"model", "normalize_features", "true"},
      {"train", "mode", "fm"},
      {"train", "seeds", ""},
      {"train", "epochs", "20"},
      {"train", "lr_main", "0.03"},
      {"train", "lr_modulator", "0.03"},
      {"train", "momentum", "0.9"},
      {"train", "tau", "0.75"},
      {"train", "baseline_tau", "0.95"},
      {"train", "mc_samples", "5"},
      {"train", "beta", "1"},
      {"train", "gamma", "0.5"},
      {"train", "detach_col_max", "false"},
      {"train", "per_domain_labeled", "16"},
      {"train", "per_domain_unlabeled", "16"},
      {"train", "weak_sigma", "0.05"},
      {"train", "strong_sigma", "0.25"},
      {"train", "mask_fraction", "0.15"},
      {"output", "dir", "runs/default"},
      {"output", "checkpoint", "true"},
      {"output", "dump_sar", "false"},
      {"output", "dump_modulator", "false"},
      {"output", "dump_pseudo_labels", "false"},
  };
  return keys;
}

/// Flat sectioned key/value configuration. Values are kept as strings until
/// `resolve` converts them; unknown keys are rejected on input.
class RawConfig {
 public:
  RawConfig() {
    for (const auto& k : config_schema()) values_[full_key(k)] = k.default_value;
  }

  static RawConfig from_stream(std::istream& in) {
    RawConfig cfg;
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw ConfigError("config: key '" + section + "' outside a section");
      for (const auto& [key, value] : body) cfg.set(section + "." + key, value.get_value<std::string>());
    }
    return cfg;
  }

  static RawConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    return from_stream(in);
  }

  /// Accepts `section.key` or a bare key that is unique across sections.
  void set(const std::string& key, const std::string& value) {
    values_.at(canonical(key)) = value;
  }

  bool has_key(const std::string& key) const {
    try {
      canonical(key);
      return true;
    } catch (const ConfigError&) {
      return false;
    }
  }

  const std::string& get(const std::string& key) const { return values_.at(canonical(key)); }

  void write(std::ostream& out) const {
    std::string section;
    for (const auto& k : config_schema()) {
      if (section != k.section) {
        if (!section.empty()) out << '\n';
        section = k.section;
        out << '[' << section << "]\n";
      }
      out << k.key << " = " << values_.at(full_key(k)) << '\n';
    }
  }

 private:
  static std::string full_key(const ConfigKey& k) { return std::string(k.section) + "." + k.key; }

  std::string canonical(const std::string& key) const {
    if (values_.count(key)) return key;
    std::optional<std::string> match;
    for (const auto& k : config_schema()) {
      if (key == k.key) {
        if (match) throw ConfigError("config: key '" + key + "' is ambiguous, qualify it with a section");
        match = full_key(k);
      }
    }
    if (!match) throw ConfigError("config: unknown key '" + key + "'");
    return *match;
  }

  std::map<std::string, std::string> values_;
};

struct OutputOptions {
  std::string dir = "runs/default";
  bool checkpoint = true;
  bool dump_sar = false;
  bool dump_modulator = false;
  bool dump_pseudo_labels = false;
};

/// Fully typed run configuration.
struct RunConfig {
  std::string source = "synthetic";
  std::string csv_path;
  SyntheticParams synthetic;
  std::optional<int> target_domain;  // nullopt: seed mod num_domains
  std::size_t labels_per_class = 10;
  TrainConfig train;
  std::vector<std::uint64_t> seeds;
  OutputOptions output;
  RawConfig raw;

  SplitPlan plan_for(std::uint64_t seed, int num_domains) const {
    SplitPlan p;
    p.target_domain = target_domain ? *target_domain : static_cast<int>(seed % static_cast<std::uint64_t>(num_domains));
    p.labels_per_class = labels_per_class;
    p.seed = seed;
    return p;
  }

  DomainDataset load_dataset() const {
    if (source == "csv") return load_csv(csv_path);
    return generate_synthetic(synthetic);
  }
};

namespace detail {

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  T v{};
  if (!parse_number(text, v)) throw ConfigError("config: invalid value '" + text + "' for " + key);
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config: invalid boolean '" + text + "' for " + key);
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  if (text.empty()) return out;
  for (auto part : split_commas(text)) {
    while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
    while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
    out.push_back(parse_value<T>(key, std::string(part)));
  }
  return out;
}

}  // namespace detail

/// Converts and validates every value. Seeds fall back to MODFEAT_SEED, then 0.
inline RunConfig resolve(RawConfig raw) {
  using detail::parse_bool;
  using detail::parse_value;
  auto g = [&](const char* k) -> const std::string& { return raw.get(k); };

  if (raw.get("train.seeds").empty()) {
    const char* env = std::getenv("MODFEAT_SEED");
    raw.set("train.seeds", env != nullptr && *env != '\0' ? env : "0");
  }

  RunConfig rc;
  rc.source = g("data.source");
  if (rc.source != "synthetic" && rc.source != "csv") throw ConfigError("config: data.source must be synthetic or csv");
  rc.csv_path = g("data.csv_path");
  if (rc.source == "csv" && rc.csv_path.empty()) throw ConfigError("config: data.csv_path is required for csv data");

  auto& s = rc.synthetic;
  s.num_classes = parse_value<int>("num_classes", g("data.num_classes"));
  s.num_domains = parse_value<int>("num_domains", g("data.num_domains"));
  s.signal_dim = parse_value<std::size_t>("signal_dim", g("data.signal_dim"));
  s.noise_dim = parse_value<std::size_t>("noise_dim", g("data.noise_dim"));
  s.samples_per_class_per_domain = parse_value<std::size_t>("samples_per_class_per_domain", g("data.samples_per_class_per_domain"));
  s.class_sep = parse_value<double>("class_sep", g("data.class_sep"));
  s.domain_shift = parse_value<double>("domain_shift", g("data.domain_shift"));
  s.domain_jitter = parse_value<double>("domain_jitter", g("data.domain_jitter"));
  s.seed = parse_value<std::uint64_t>("data_seed", g("data.data_seed"));
  if (g("data.target_domain") != "rotate") rc.target_domain = parse_value<int>("target_domain", g("data.target_domain"));
  rc.labels_per_class = parse_value<std::size_t>("labels_per_class", g("data.labels_per_class"));

  auto& t = rc.train;
  t.hidden_dims = detail::parse_list<std::size_t>("hidden_dims", g("model.hidden_dims"));
  t.feature_dim = parse_value<std::size_t>("feature_dim", g("model.feature_dim"));
  t.dropout_p = parse_value<double>("dropout_p", g("model.dropout_p"));
  t.normalize_features = parse_bool("normalize_features", g("model.normalize_features"));
  try {
    t.mode = parse_method(g("train.mode"));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  t.epochs = parse_value<std::size_t>("epochs", g("train.epochs"));
  t.lr_main = parse_value<double>("lr_main", g("train.lr_main"));
  t.lr_modulator = parse_value<double>("lr_modulator", g("train.lr_modulator"));
  t.momentum = parse_value<double>("momentum", g("train.momentum"));
  t.tau = parse_value<double>("tau", g("train.tau"));
  t.baseline_tau = parse_value<double>("baseline_tau", g("train.baseline_tau"));
  t.mc_samples = parse_value<std::size_t>("mc_samples", g("train.mc_samples"));
  t.beta = parse_value<double>("beta", g("train.beta"));
  t.gamma = parse_value<double>("gamma", g("train.gamma"));
  t.detach_col_max = parse_bool("detach_col_max", g("train.detach_col_max"));
  t.per_domain_labeled = parse_value<std::size_t>("per_domain_labeled", g("train.per_domain_labeled"));
  t.per_domain_unlabeled = parse_value<std::size_t>("per_domain_unlabeled", g("train.per_domain_unlabeled"));
  t.augment.weak_sigma = parse_value<double>("weak_sigma", g("train.weak_sigma"));
  t.augment.strong_sigma = parse_value<double>("strong_sigma", g("train.strong_sigma"));
  t.augment.mask_fraction = parse_value<double>("mask_fraction", g("train.mask_fraction"));
  t.validate();

  rc.seeds = detail::parse_list<std::uint64_t>("seeds", g("train.seeds"));
  if (rc.seeds.empty()) throw ConfigError("config: train.seeds is empty");

  rc.output.dir = g("output.dir");
  rc.output.checkpoint = parse_bool("checkpoint", g("output.checkpoint"));
  rc.output.dump_sar = parse_bool("dump_sar", g("output.dump_sar"));
  rc.output.dump_modulator = parse_bool("dump_modulator", g("output.dump_modulator"));
  rc.output.dump_pseudo_labels = parse_bool("dump_pseudo_labels", g("output.dump_pseudo_labels"));
  rc.raw = std::move(raw);
  return rc;
}

}  // namespace modfeat

#endif  // MODFEAT_CONFIG_HPP
