#pragma once

// Training configuration: dimensions, limits, optimizer settings and
// ablation switches, with the `paper` and `tiny` presets and a flat
// key = value config-file parser (unknown keys are errors).

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "triplenet/tensor.hpp"

namespace triplenet {

struct AblationFlags {
  bool no_tam = false;               // drop triple attention and the query matching columns
  bool no_triple_attention = false;  // A_tri: match raw representations
  bool no_query = false;             // drop the standalone query path
  bool no_A_CR = false;
  bool no_A_QR = false;
  bool no_A_CQ = false;
  bool no_M_CR = false;
  bool no_M_QR = false;
  bool no_char = false;
  bool no_word = false;
  bool no_utterance = false;
  bool no_context = false;

  bool any() const {
    return no_tam || no_triple_attention || no_query || no_A_CR || no_A_QR || no_A_CQ ||
           no_M_CR || no_M_QR || no_char || no_word || no_utterance || no_context;
  }
};

inline const std::vector<std::string>& ablation_flag_names() {
  static const std::vector<std::string> names = {
      "no_tam",  "no_triple_attention", "no_query", "no_A_CR", "no_A_QR", "no_A_CQ",
      "no_M_CR", "no_M_QR",             "no_char",  "no_word", "no_utterance", "no_context"};
  return names;
}

inline bool* ablation_flag_by_name(AblationFlags& f, const std::string& name) {
  static const std::map<std::string, bool AblationFlags::*> table = {
      {"no_tam", &AblationFlags::no_tam},
      {"no_triple_attention", &AblationFlags::no_triple_attention},
      {"no_query", &AblationFlags::no_query},
      {"no_A_CR", &AblationFlags::no_A_CR},
      {"no_A_QR", &AblationFlags::no_A_QR},
      {"no_A_CQ", &AblationFlags::no_A_CQ},
      {"no_M_CR", &AblationFlags::no_M_CR},
      {"no_M_QR", &AblationFlags::no_M_QR},
      {"no_char", &AblationFlags::no_char},
      {"no_word", &AblationFlags::no_word},
      {"no_utterance", &AblationFlags::no_utterance},
      {"no_context", &AblationFlags::no_context}};
  auto it = table.find(name);
  return it == table.end() ? nullptr : &(f.*(it->second));
}

struct TrainConfig {
  // dimensions
  size_t emb_dim = 200;
  size_t char_emb_dim = 50;
  size_t conv_filters = 200;
  size_t conv_window = 3;
  size_t word_hidden = 200;
  size_t ctx_hidden = 200;
  size_t attn_dim = 200;
  size_t fusion_hidden = 50;
  // limits
  size_t max_turns = 12;
  size_t max_words = 50;
  size_t max_chars = 16;
  // optimizer (Adamax)
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // loop
  size_t batch_size = 64;
  size_t max_steps = 2000;
  size_t eval_interval = 50;
  size_t patience = 3;
  bool early_stopping = true;
  uint64_t seed = 1;
  size_t min_count = 1;
  size_t candidates = 2;  // evaluation group size
  AblationFlags flags;

  static TrainConfig paper() { return TrainConfig{}; }

  static TrainConfig tiny() {
    TrainConfig c;
    c.emb_dim = 16;
    c.char_emb_dim = 8;
    c.conv_filters = 8;
    c.conv_window = 3;
    c.word_hidden = 8;
    c.ctx_hidden = 8;
    c.attn_dim = 16;
    c.fusion_hidden = 8;
    c.max_turns = 4;
    c.max_words = 8;
    c.max_chars = 6;
    c.batch_size = 16;
    return c;
  }

  size_t word_feature_dim() const { return 2 * word_hidden; }
  size_t level_dim_char() const { return conv_filters; }

  void validate() const {
    check(word_hidden == ctx_hidden, "config",
          "word_hidden and ctx_hidden must match so utterance- and context-level "
          "sequences are comparable");
    check(max_turns > 0 && max_words > 0 && max_chars > 0, "config", "limits must be positive");
    check(!(flags.no_char && flags.no_word && flags.no_utterance && flags.no_context),
          "config", "at least one representation level must remain");
    bool ctx_cols = !flags.no_M_CR;
    bool q_cols = !(flags.no_M_QR || flags.no_query || flags.no_tam);
    check(ctx_cols || q_cols, "config", "all matching columns removed; nothing to fuse");
  }
};

namespace detail {

struct ConfigField {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

inline uint64_t parse_u64(const std::string& key, const std::string& v) {
  size_t pos = 0;
  uint64_t out = std::stoull(v, &pos);
  if (pos != v.size()) tensor_error("config", "bad integer for " + key + ": '" + v + "'");
  return out;
}

inline double parse_f64(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double out = std::stod(v, &pos);
  if (pos != v.size()) tensor_error("config", "bad real for " + key + ": '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  tensor_error("config", "bad boolean for " + key + ": '" + v + "'");
}

inline const std::map<std::string, ConfigField>& config_fields() {
  static const std::map<std::string, ConfigField> fields = [] {
    std::map<std::string, ConfigField> f;
    auto add_size = [&](const std::string& k, size_t TrainConfig::* m) {
      f[k] = {[k, m](TrainConfig& c, const std::string& v) { c.*m = size_t(parse_u64(k, v)); },
              [m](const TrainConfig& c) { return std::to_string(c.*m); }};
    };
    auto add_f64 = [&](const std::string& k, double TrainConfig::* m) {
      f[k] = {[k, m](TrainConfig& c, const std::string& v) { c.*m = parse_f64(k, v); },
              [m](const TrainConfig& c) {
                std::ostringstream os;
                os.precision(17);
                os << c.*m;
                return os.str();
              }};
    };
    add_size("emb_dim", &TrainConfig::emb_dim);
    add_size("char_emb_dim", &TrainConfig::char_emb_dim);
    add_size("conv_filters", &TrainConfig::conv_filters);
    add_size("conv_window", &TrainConfig::conv_window);
    add_size("word_hidden", &TrainConfig::word_hidden);
    add_size("ctx_hidden", &TrainConfig::ctx_hidden);
    add_size("attn_dim", &TrainConfig::attn_dim);
    add_size("fusion_hidden", &TrainConfig::fusion_hidden);
    add_size("max_turns", &TrainConfig::max_turns);
    add_size("max_words", &TrainConfig::max_words);
    add_size("max_chars", &TrainConfig::max_chars);
    add_f64("lr", &TrainConfig::lr);
    add_f64("beta1", &TrainConfig::beta1);
    add_f64("beta2", &TrainConfig::beta2);
    add_f64("epsilon", &TrainConfig::epsilon);
    add_size("batch_size", &TrainConfig::batch_size);
    add_size("max_steps", &TrainConfig::max_steps);
    add_size("eval_interval", &TrainConfig::eval_interval);
    add_size("patience", &TrainConfig::patience);
    add_size("min_count", &TrainConfig::min_count);
    add_size("candidates", &TrainConfig::candidates);
    f["early_stopping"] = {
        [](TrainConfig& c, const std::string& v) {
          c.early_stopping = parse_bool("early_stopping", v);
        },
        [](const TrainConfig& c) { return c.early_stopping ? "true" : "false"; }};
    f["seed"] = {[](TrainConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
                 [](const TrainConfig& c) { return std::to_string(c.seed); }};
    for (const auto& name : ablation_flag_names()) {
      f[name] = {[name](TrainConfig& c, const std::string& v) {
                   *ablation_flag_by_name(c.flags, name) = parse_bool(name, v);
                 },
                 [name](const TrainConfig& c) {
                   auto flags = c.flags;
                   return *ablation_flag_by_name(flags, name) ? "true" : "false";
                 }};
    }
    return f;
  }();
  return fields;
}

}  // namespace detail

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline void apply_config_line(TrainConfig& cfg, const std::string& key,
                              const std::string& value) {
  auto& fields = detail::config_fields();
  auto it = fields.find(key);
  if (it == fields.end()) tensor_error("config", "unknown key '" + key + "'");
  it->second.set(cfg, value);
}

inline void parse_config_text(TrainConfig& cfg, std::istream& in) {
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      tensor_error("config", "line " + std::to_string(lineno) + ": expected key = value");
    apply_config_line(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

inline void load_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) tensor_error("config", "cannot open " + path);
  parse_config_text(cfg, in);
}

inline std::string serialize_config(const TrainConfig& cfg) {
  std::string out;
  for (auto& [key, field] : detail::config_fields())
    out += key + " = " + field.get(cfg) + "\n";
  return out;
}

inline TrainConfig preset_by_name(const std::string& name) {
  if (name == "paper") return TrainConfig::paper();
  if (name == "tiny") return TrainConfig::tiny();
  tensor_error("config", "unknown preset '" + name + "' (expected paper|tiny)");
}

}  // namespace triplenet
