// Copyright 2026 The prosparse Authors
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

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "prosparse/autodiff/nn.hpp"
#include "prosparse/autodiff/ops.hpp"
#include "prosparse/autodiff/optim.hpp"
#include "prosparse/config.hpp"
#include "prosparse/corpus.hpp"
#include "prosparse/error.hpp"
#include "prosparse/prosody.hpp"
#include "prosparse/treeops.hpp"

namespace prosparse {

using ad::Tensor;

struct FeatureFlags {
  bool pause = false;
  bool duration = false;
  bool cnn = false;

  bool any() const { return pause || duration || cnn; }
  friend bool operator==(const FeatureFlags&, const FeatureFlags&) = default;
};

/// "pause,duration,cnn" / "none".
inline std::string to_string(const FeatureFlags& f) {
  std::string out;
  auto add = [&](const char* name) { out += out.empty() ? name : std::string(",") + name; };
  if (f.pause) add("pause");
  if (f.duration) add("duration");
  if (f.cnn) add("cnn");
  return out.empty() ? "none" : out;
}

inline FeatureFlags parse_feature_flags(std::string_view s) {
  FeatureFlags f;
  for (auto part : text::split(s, ',')) {
    part = text::trim(part);
    if (part.empty() || part == "none" || part == "text") continue;
    if (part == "pause") f.pause = true;
    else if (part == "duration") f.duration = true;
    else if (part == "cnn") f.cnn = true;
    else throw ConfigError("unknown feature '" + std::string(part) + "' in features");
  }
  return f;
}

enum class AttentionKind { kContent, kLocation };

struct ModelConfig {
  std::size_t hidden = 256;
  std::size_t layers = 3;
  std::size_t word_embed_dim = 512;
  std::size_t output_embed_dim = 512;
  std::size_t pause_embed_dim = 32;
  std::vector<std::size_t> cnn_filter_widths = {10, 25, 50};
  std::size_t cnn_filters = 16;
  std::size_t location_filters = 5;
  std::size_t location_width = 40;
  double dropout = 0.3;
  FeatureFlags features;
  AttentionKind attention = AttentionKind::kLocation;
  double context = 0.25;  // seconds of frame context around each word for the CNN
  double init_scale = 0.1;
  std::uint64_t init_seed = 1;

  /// Encoder input width: word embedding plus the enabled feature blocks.
  std::size_t input_width() const {
    std::size_t w = word_embed_dim;
    if (features.pause) w += 2 * pause_embed_dim;
    if (features.duration) w += 1;
    if (features.cnn) w += cnn_filter_widths.size() * cnn_filters;
    return w;
  }

  std::size_t max_filter_width() const {
    if (!features.cnn || cnn_filter_widths.empty()) return 1;
    return *std::max_element(cnn_filter_widths.begin(), cnn_filter_widths.end());
  }

  ProsodyOptions prosody_options() const { return {context, max_filter_width()}; }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(hidden, "hidden");
    positive(layers, "layers");
    positive(word_embed_dim, "word_embed_dim");
    positive(output_embed_dim, "output_embed_dim");
    if (features.pause) positive(pause_embed_dim, "pause_embed_dim");
    if (features.cnn) {
      positive(cnn_filters, "cnn_filters");
      if (cnn_filter_widths.empty()) throw ConfigError("cnn_filter_widths must be nonempty");
      for (auto w : cnn_filter_widths) positive(w, "cnn_filter_widths");
    }
    if (attention == AttentionKind::kLocation) {
      positive(location_filters, "location_filters");
      positive(location_width, "location_width");
    }
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must be in [0, 1)");
    if (!(context >= 0)) throw ConfigError("context must be nonnegative");
    if (!(init_scale > 0)) throw ConfigError("init_scale must be positive");
  }

  static ModelConfig from(const KeyValueConfig& kv) { return from(kv, ModelConfig()); }

  static ModelConfig from(const KeyValueConfig& kv, ModelConfig base) {
    ModelConfig c = std::move(base);
    c.hidden = kv.get_size("hidden", c.hidden);
    c.layers = kv.get_size("layers", c.layers);
    c.word_embed_dim = kv.get_size("word_embed_dim", c.word_embed_dim);
    c.output_embed_dim = kv.get_size("output_embed_dim", c.output_embed_dim);
    c.pause_embed_dim = kv.get_size("pause_embed_dim", c.pause_embed_dim);
    c.cnn_filter_widths = kv.get_size_list("cnn_filter_widths", c.cnn_filter_widths);
    c.cnn_filters = kv.get_size("cnn_filters", c.cnn_filters);
    c.location_filters = kv.get_size("location_filters", c.location_filters);
    c.location_width = kv.get_size("location_width", c.location_width);
    c.dropout = kv.get_double("dropout", c.dropout);
    if (auto f = kv.get("features")) c.features = parse_feature_flags(*f);
    if (auto a = kv.get("attention")) {
      if (*a == "location") c.attention = AttentionKind::kLocation;
      else if (*a == "content") c.attention = AttentionKind::kContent;
      else throw ConfigError("attention must be 'location' or 'content'");
    }
    c.context = kv.get_double("context", c.context);
    c.init_scale = kv.get_double("init_scale", c.init_scale);
    c.init_seed = kv.get_size("init_seed", c.init_seed);
    c.validate();
    return c;
  }

  KeyValueConfig to_kv() const {
    KeyValueConfig kv;
    kv.set("hidden", std::to_string(hidden));
    kv.set("layers", std::to_string(layers));
    kv.set("word_embed_dim", std::to_string(word_embed_dim));
    kv.set("output_embed_dim", std::to_string(output_embed_dim));
    kv.set("pause_embed_dim", std::to_string(pause_embed_dim));
    std::string widths;
    for (std::size_t i = 0; i < cnn_filter_widths.size(); ++i)
      widths += (i ? "," : "") + std::to_string(cnn_filter_widths[i]);
    kv.set("cnn_filter_widths", widths);
    kv.set("cnn_filters", std::to_string(cnn_filters));
    kv.set("location_filters", std::to_string(location_filters));
    kv.set("location_width", std::to_string(location_width));
    kv.set("dropout", text::fmt(dropout));
    kv.set("features", to_string(features));
    kv.set("attention", attention == AttentionKind::kLocation ? "location" : "content");
    kv.set("context", text::fmt(context));
    kv.set("init_scale", text::fmt(init_scale));
    kv.set("init_seed", std::to_string(init_seed));
    return kv;
  }
};

inline const std::vector<std::string>& model_config_keys() {
  static const std::vector<std::string> keys = {
      "hidden",           "layers",        "word_embed_dim", "output_embed_dim", "pause_embed_dim",
      "cnn_filter_widths", "cnn_filters",  "location_filters", "location_width", "dropout",
      "features",         "attention",     "context",        "init_scale",       "init_seed"};
  return keys;
}

/// Closed string <-> id map.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> items) : items_(std::move(items)) {
    for (std::size_t i = 0; i < items_.size(); ++i)
      if (!index_.emplace(items_[i], i).second) throw VocabularyError("duplicate vocabulary item " + items_[i]);
  }

  std::optional<std::size_t> find(const std::string& s) const {
    auto it = index_.find(s);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  const std::string& item(std::size_t id) const { return items_.at(id); }
  std::size_t size() const { return items_.size(); }
  const std::vector<std::string>& items() const { return items_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.items_ == b.items_; }

 private:
  std::vector<std::string> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::string_view kUnknownWord = "<unk>";
inline constexpr std::string_view kStartSymbol = "<s>";
inline constexpr std::string_view kEndSymbol = "</s>";
inline constexpr std::size_t kUnknownWordId = 0;
inline constexpr std::size_t kStartId = 0;
inline constexpr std::size_t kEndId = 1;

/// <unk> followed by the sorted training words.
inline Vocabulary build_word_vocabulary(const std::vector<std::vector<std::string>>& sentences) {
  std::set<std::string> words;
  for (const auto& s : sentences) words.insert(s.begin(), s.end());
  words.erase(std::string(kUnknownWord));
  std::vector<std::string> items{std::string(kUnknownWord)};
  items.insert(items.end(), words.begin(), words.end());
  return Vocabulary(std::move(items));
}

/// <s>, </s>, ")", "XX", then every "(L" seen in training, sorted.
inline Vocabulary build_symbol_vocabulary(const std::vector<Tree>& trees) {
  std::set<std::string> opens;
  for (const auto& t : trees)
    for (const auto& s : linearize(t).symbols)
      if (is_open_symbol(s)) opens.insert(s);
  std::vector<std::string> items{std::string(kStartSymbol), std::string(kEndSymbol), std::string(kCloseSymbol),
                                 std::string(kPreterminalSymbol)};
  items.insert(items.end(), opens.begin(), opens.end());
  return Vocabulary(std::move(items));
}

/// Words plus optional per-word acoustics, as fed to the encoder.
struct ParserInput {
  std::vector<std::string> tokens;
  std::optional<std::vector<ProsodicInput>> prosody;
};

struct RunMode {
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

/// Top-layer encoder outputs. `h` is [hidden x T] with column i aligned to
/// input position i even though the input is read right to left.
struct EncoderState {
  Tensor h;
  Tensor keys;  // W1 h, [hidden x T]
  std::vector<ad::LstmState> final_state;
  std::size_t length() const { return h.cols(); }
};

struct Attention {
  Tensor scores;    // u_t, [1 x T]
  Tensor weights;   // alpha_t, [1 x T]
  Tensor context;   // c_t, [hidden x 1]
  Tensor location;  // f_t, [k x T]; undefined for content attention
};

struct DecoderState {
  std::vector<ad::LstmState> layers;
  Tensor alpha_prev;    // [1 x T]
  Tensor context_prev;  // [hidden x 1]
};

struct DecodeStep {
  Tensor logits;  // [V x 1]
  Tensor d;       // top decoder output d_t
  Attention attention;
  DecoderState state;
};

/// Attention encoder-decoder parser over word-level inputs.
class Seq2SeqParser {
 public:
  Seq2SeqParser(ModelConfig config, Vocabulary words, Vocabulary symbols)
      : config_(std::move(config)), words_(std::move(words)), symbols_(std::move(symbols)) {
    config_.validate();
    if (words_.size() == 0 || words_.item(kUnknownWordId) != kUnknownWord)
      throw VocabularyError("word vocabulary must start with <unk>");
    if (symbols_.size() < 4 || symbols_.item(kStartId) != kStartSymbol || symbols_.item(kEndId) != kEndSymbol)
      throw VocabularyError("symbol vocabulary must start with <s>, </s>");
    allocate();
    initialize(config_.init_seed);
  }

  // Layer weight handles alias entries of params_, so copies would share
  // storage with the original.
  Seq2SeqParser(const Seq2SeqParser&) = delete;
  Seq2SeqParser& operator=(const Seq2SeqParser&) = delete;
  Seq2SeqParser(Seq2SeqParser&&) = default;
  Seq2SeqParser& operator=(Seq2SeqParser&&) = default;

  const ModelConfig& config() const { return config_; }
  const Vocabulary& words() const { return words_; }
  const Vocabulary& symbols() const { return symbols_; }
  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

  /// Uniform(-init_scale, init_scale) weights, zero biases, forget-gate
  /// biases at 1.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-config_.init_scale, config_.init_scale);
    for (const auto& [name, t] : params_.entries()) {
      Tensor p = t;
      auto v = p.values();
      bool bias = name.ends_with(".b") || name.ends_with(".bias") || name.ends_with(".b_a") || name.ends_with(".b_s");
      if (bias) {
        std::fill(v.begin(), v.end(), 0.0);
        if (name.starts_with("encoder.") || name.starts_with("decoder."))
          std::fill(v.begin() + static_cast<std::ptrdiff_t>(config_.hidden),
                    v.begin() + static_cast<std::ptrdiff_t>(2 * config_.hidden), 1.0);
      } else {
        for (auto& x : v) x = u(rng);
      }
    }
  }

  std::size_t word_id(const std::string& w) const { return words_.find(w).value_or(kUnknownWordId); }

  /// Gold symbol ids with the end marker appended.
  std::vector<std::size_t> target_ids(const LinearParse& parse) const {
    std::vector<std::size_t> ids;
    ids.reserve(parse.symbols.size() + 1);
    for (const auto& s : parse.symbols) {
      auto id = symbols_.find(s);
      if (!id) throw VocabularyError("parse symbol '" + s + "' is not in the output vocabulary");
      ids.push_back(*id);
    }
    ids.push_back(kEndId);
    return ids;
  }

  /// m*N max-pooled filter responses, width-major then filter order.
  Tensor acoustic_cnn(const Matrix& frames) const {
    Tensor input = Tensor::from(frames.rows, frames.cols, frames.data);
    std::vector<Tensor> parts;
    for (std::size_t w : config_.cnn_filter_widths)
      parts.push_back(ad::conv1d_maxpool(input, params_.get(cnn_name(w, "filters")), params_.get(cnn_name(w, "bias"))));
    return ad::concat_rows(parts);
  }

  /// x_i = [e_i; p_pre; p_post; delta_i; s_i] with disabled blocks omitted.
  Tensor assemble_input(std::size_t word, const ProsodicInput* prosody) const {
    std::vector<Tensor> parts{ad::embedding(params_.get("embed.word"), word)};
    if (config_.features.any() && prosody == nullptr)
      throw ContractViolation("prosodic input missing for a model with acoustic features; use the text model");
    if (config_.features.pause) {
      Tensor table = params_.get("embed.pause");
      parts.push_back(ad::embedding(table, static_cast<std::size_t>(prosody->pause_pre)));
      parts.push_back(ad::embedding(table, static_cast<std::size_t>(prosody->pause_post)));
    }
    if (config_.features.duration) parts.push_back(Tensor::scalar(prosody->delta));
    if (config_.features.cnn) parts.push_back(acoustic_cnn(prosody->frames));
    return parts.size() == 1 ? parts.front() : ad::concat_rows(parts);
  }

  std::vector<Tensor> embed_inputs(const ParserInput& in) const {
    if (in.tokens.empty()) throw ContractViolation("empty sentence");
    if (config_.features.any() && (!in.prosody || in.prosody->size() != in.tokens.size()))
      throw ContractViolation("prosodic inputs missing or misaligned for a model with acoustic features");
    std::vector<Tensor> xs;
    xs.reserve(in.tokens.size());
    for (std::size_t i = 0; i < in.tokens.size(); ++i)
      xs.push_back(assemble_input(word_id(in.tokens[i]), config_.features.any() ? &(*in.prosody)[i] : nullptr));
    return xs;
  }

  /// Stacked LSTM over x_T ... x_1.
  EncoderState encode(const std::vector<Tensor>& xs, RunMode mode = {}) const {
    if (xs.empty()) throw ContractViolation("encode: empty input");
    const std::size_t n = xs.size(), H = config_.hidden;
    std::vector<ad::LstmState> state(config_.layers, {Tensor::zeros(H, 1), Tensor::zeros(H, 1)});
    std::vector<Tensor> top(n);
    for (std::size_t step = 0; step < n; ++step) {
      const std::size_t pos = n - 1 - step;
      Tensor input = xs[pos];
      for (std::size_t l = 0; l < config_.layers; ++l) {
        state[l] = ad::lstm_cell(input, state[l], encoder_[l]);
        input = drop(state[l].h, mode);
      }
      top[pos] = input;
    }
    EncoderState enc;
    enc.h = ad::stack_columns(top);
    enc.keys = ad::matmul(params_.get("attention.W1"), enc.h);
    enc.final_state = std::move(state);
    return enc;
  }

  Attention attend_content(const EncoderState& enc, const Tensor& d) const {
    Tensor query = ad::affine(params_.get("attention.W2"), d, params_.get("attention.b_a"));
    return finish_attention(enc, ad::add_col(enc.keys, query), Tensor());
  }

  Attention attend_location(const EncoderState& enc, const Tensor& d, const Tensor& alpha_prev) const {
    if (alpha_prev.size() != enc.length())
      throw ShapeError("attend_location: previous weights " + alpha_prev.shape() + " for " +
                       std::to_string(enc.length()) + " positions");
    Tensor query = ad::affine(params_.get("attention.W2"), d, params_.get("attention.b_a"));
    Tensor f = ad::conv1d_same(alpha_prev, params_.get("attention.F"));
    Tensor pre = ad::add(ad::add_col(enc.keys, query), ad::matmul(params_.get("attention.W_f"), f));
    return finish_attention(enc, pre, f);
  }

  /// Encoder final state, uniform alpha_0 and zero c_0.
  DecoderState initial_decoder_state(const EncoderState& enc) const {
    const std::size_t n = enc.length();
    return {enc.final_state, Tensor::from(1, n, std::vector<double>(n, 1.0 / static_cast<double>(n))),
            Tensor::zeros(config_.hidden, 1)};
  }

  DecodeStep decode_step(std::size_t prev_symbol, const DecoderState& state, const EncoderState& enc,
                         RunMode mode = {}) const {
    Tensor input = ad::concat_rows({ad::embedding(params_.get("embed.symbol"), prev_symbol), state.context_prev});
    DecodeStep out;
    out.state.layers.resize(config_.layers);
    for (std::size_t l = 0; l < config_.layers; ++l) {
      out.state.layers[l] = ad::lstm_cell(input, state.layers[l], decoder_[l]);
      input = drop(out.state.layers[l].h, mode);
    }
    out.d = input;
    out.attention = config_.attention == AttentionKind::kLocation ? attend_location(enc, out.d, state.alpha_prev)
                                                                   : attend_content(enc, out.d);
    out.state.alpha_prev = out.attention.weights;
    out.state.context_prev = out.attention.context;
    out.logits = ad::affine(params_.get("output.W_s"), ad::concat_rows({out.attention.context, out.d}),
                            params_.get("output.b_s"));
    return out;
  }

  /// Sum over steps of -log P(y_t | h, y_<t) under teacher forcing,
  /// including the end marker.
  Tensor sequence_loss(const ParserInput& in, const std::vector<std::size_t>& gold, RunMode mode = {}) const {
    EncoderState enc = encode(embed_inputs(in), mode);
    DecoderState state = initial_decoder_state(enc);
    std::vector<Tensor> terms;
    terms.reserve(gold.size());
    std::size_t prev = kStartId;
    for (std::size_t target : gold) {
      DecodeStep step = decode_step(prev, state, enc, mode);
      terms.push_back(ad::cross_entropy(step.logits, target));
      state = std::move(step.state);
      prev = target;
    }
    return ad::sum_scalars(terms);
  }

  static std::string cnn_name(std::size_t width, const char* what) {
    return "cnn.w" + std::to_string(width) + "." + what;
  }

 private:
  void allocate() {
    const std::size_t H = config_.hidden;
    params_.add("embed.word", words_.size(), config_.word_embed_dim);
    if (config_.features.pause) params_.add("embed.pause", kNumPauseCategories, config_.pause_embed_dim);
    if (config_.features.cnn)
      for (std::size_t w : config_.cnn_filter_widths) {
        if (params_.contains(cnn_name(w, "filters"))) throw ConfigError("cnn_filter_widths has a repeated width");
        params_.add(cnn_name(w, "filters"), config_.cnn_filters, w * kFrameFeatures);
        params_.add(cnn_name(w, "bias"), config_.cnn_filters, 1);
      }
    std::size_t in = config_.input_width();
    for (std::size_t l = 0; l < config_.layers; ++l) {
      std::string p = "encoder.l" + std::to_string(l);
      encoder_.push_back({params_.add(p + ".W", 4 * H, (l == 0 ? in : H) + H), params_.add(p + ".b", 4 * H, 1)});
    }
    params_.add("embed.symbol", symbols_.size(), config_.output_embed_dim);
    for (std::size_t l = 0; l < config_.layers; ++l) {
      std::string p = "decoder.l" + std::to_string(l);
      std::size_t width = l == 0 ? config_.output_embed_dim + H : H;
      decoder_.push_back({params_.add(p + ".W", 4 * H, width + H), params_.add(p + ".b", 4 * H, 1)});
    }
    params_.add("attention.W1", H, H);
    params_.add("attention.W2", H, H);
    params_.add("attention.b_a", H, 1);
    params_.add("attention.v", 1, H);
    if (config_.attention == AttentionKind::kLocation) {
      params_.add("attention.F", config_.location_filters, config_.location_width);
      params_.add("attention.W_f", H, config_.location_filters);
    }
    params_.add("output.W_s", symbols_.size(), 2 * H);
    params_.add("output.b_s", symbols_.size(), 1);
  }

  Tensor drop(const Tensor& x, const RunMode& mode) const {
    if (!mode.training || config_.dropout == 0.0) return x;
    if (mode.rng == nullptr) throw ContractViolation("training mode needs a random generator");
    return ad::dropout(x, config_.dropout, true, *mode.rng);
  }

  Attention finish_attention(const EncoderState& enc, const Tensor& pre, Tensor location) const {
    Attention a;
    a.scores = ad::matmul(params_.get("attention.v"), ad::tanh(pre));
    a.weights = ad::softmax(a.scores);
    a.context = ad::matmul(enc.h, ad::reshape(a.weights, enc.length(), 1));
    a.location = std::move(location);
    return a;
  }

  ModelConfig config_;
  Vocabulary words_;
  Vocabulary symbols_;
  ad::ParameterStore params_;
  std::vector<ad::LstmWeights> encoder_;
  std::vector<ad::LstmWeights> decoder_;
};

/// Routes an example to the encoder input for `model`: acoustics are
/// attached only when the model uses them.
inline ParserInput make_parser_input(const Example& ex, const Seq2SeqParser& model, const DurationLexicon& lexicon) {
  ParserInput in;
  in.tokens = ex.utterance.tokens;
  if (model.config().features.any())
    in.prosody = build_prosodic_inputs(ex, lexicon, model.config().prosody_options());
  return in;
}

}  // namespace prosparse
