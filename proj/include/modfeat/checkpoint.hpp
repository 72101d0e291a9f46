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

#ifndef MODFEAT_CHECKPOINT_HPP
#define MODFEAT_CHECKPOINT_HPP

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "modfeat/model.hpp"

namespace modfeat {

/// Text checkpoint: a header of key/value lines, then one `array <name> <rows>
/// <cols>` block per parameter and per SAR bank matrix. Values are written as
/// hexadecimal floats so load(save(x)) is bit-exact.
struct Checkpoint {
  Model model;
  SarBank bank;
  Method mode = Method::fm;
};

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::string hex_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
  return std::string(buf, ptr);
}

inline double parse_hex_double(const std::string& s) {
  double v = 0.0;
  std::string_view text = s;
  bool neg = false;
  if (!text.empty() && text.front() == '-') {
    neg = true;
    text.remove_prefix(1);
  }
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v, std::chars_format::hex);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw SchemaError("checkpoint: bad number '" + s + "'");
  return neg ? -v : v;
}

inline void write_array(std::ostream& out, const std::string& name, const Array2& a) {
  out << "array " << name << ' ' << a.rows() << ' ' << a.cols() << '\n';
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out << (c ? " " : "") << hex_double(a(r, c));
    out << '\n';
  }
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, Checkpoint& ck) {
  const auto& ecfg = ck.model.extractor.config();
  out << "modfeat-checkpoint " << kCheckpointVersion << '\n';
  out << "mode " << to_string(ck.mode) << '\n';
  out << "num_classes " << ck.model.num_classes() << '\n';
  out << "input_dim " << ecfg.input_dim << '\n';
  out << "hidden_dims";
  for (auto h : ecfg.hidden_dims) out << ' ' << h;
  out << '\n';
  out << "feature_dim " << ecfg.feature_dim << '\n';
  out << "dropout_p " << detail::hex_double(ecfg.dropout_p) << '\n';
  out << "normalize_features " << (ecfg.normalize_features ? 1 : 0) << '\n';
  out << "bank_epoch " << ck.bank.epoch << '\n';
  for (Parameter* p : ck.model.parameters()) detail::write_array(out, p->name, p->value);
  detail::write_array(out, "bank.prototypes", ck.bank.prototypes);
  detail::write_array(out, "bank.similarity", ck.bank.similarity);
  detail::write_array(out, "bank.sar", ck.bank.sar);
  out << "end\n";
}

inline Checkpoint load_checkpoint(std::istream& in) {
  std::string line;
  auto next_line = [&]() -> std::istringstream {
    if (!std::getline(in, line)) throw SchemaError("checkpoint: unexpected end of file");
    return std::istringstream(line);
  };

  std::string key;
  int version = 0;
  {
    auto ls = next_line();
    ls >> key >> version;
    if (key != "modfeat-checkpoint") throw SchemaError("checkpoint: not a modfeat checkpoint");
    if (version != kCheckpointVersion) throw SchemaError("checkpoint: unsupported version " + std::to_string(version));
  }

  Checkpoint ck;
  ExtractorConfig ecfg;
  ecfg.hidden_dims.clear();
  std::size_t num_classes = 0;
  int bank_epoch = 0;
  std::map<std::string, Array2> arrays;

  while (true) {
    auto ls = next_line();
    ls >> key;
    if (key == "end") break;
    if (key == "mode") {
      std::string m;
      ls >> m;
      ck.mode = parse_method(m);
    } else if (key == "num_classes") {
      ls >> num_classes;
    } else if (key == "input_dim") {
      ls >> ecfg.input_dim;
    } else if (key == "hidden_dims") {
      std::size_t h;
      while (ls >> h) ecfg.hidden_dims.push_back(h);
    } else if (key == "feature_dim") {
      ls >> ecfg.feature_dim;
    } else if (key == "dropout_p") {
      std::string v;
      ls >> v;
      ecfg.dropout_p = detail::parse_hex_double(v);
    } else if (key == "normalize_features") {
      int flag = 0;
      ls >> flag;
      ecfg.normalize_features = flag != 0;
    } else if (key == "bank_epoch") {
      ls >> bank_epoch;
    } else if (key == "array") {
      std::string name;
      std::size_t rows = 0, cols = 0;
      ls >> name >> rows >> cols;
      Array2 a(rows, cols);
      for (std::size_t r = 0; r < rows; ++r) {
        auto row = next_line();
        std::string tok;
        for (std::size_t c = 0; c < cols; ++c) {
          if (!(row >> tok)) throw SchemaError("checkpoint: short row in " + name);
          a(r, c) = detail::parse_hex_double(tok);
        }
      }
      arrays[name] = std::move(a);
    } else {
      throw SchemaError("checkpoint: unknown key '" + key + "'");
    }
  }

  Rng dummy(0);
  ck.model = Model::init(ecfg, num_classes, dummy);
  auto take = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw SchemaError("checkpoint: missing array " + name);
    if (it->second.rows() != rows || it->second.cols() != cols) {
      throw SchemaError("checkpoint: array " + name + " has shape " + it->second.shape_string());
    }
    return it->second;
  };
  for (Parameter* p : ck.model.parameters()) {
    p->value = take(p->name, p->value.rows(), p->value.cols());
    p->zero_grad();
  }
  const std::size_t f = ecfg.feature_dim;
  ck.bank.prototypes = take("bank.prototypes", num_classes, f);
  ck.bank.similarity = take("bank.similarity", num_classes, num_classes);
  ck.bank.sar = take("bank.sar", num_classes, f);
  ck.bank.epoch = bank_epoch;
  return ck;
}

inline void save_checkpoint(const std::string& path, Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("checkpoint: cannot write " + path);
  save_checkpoint(out, ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("checkpoint: cannot open " + path);
  return load_checkpoint(in);
}

}  // namespace modfeat

#endif  // MODFEAT_CHECKPOINT_HPP
