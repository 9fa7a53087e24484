// Copyright 2026 The uasr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "uasr/model.h"

#include <cmath>
#include <stdexcept>

#include "uasr/lengths.h"

namespace uasr {

using nlohmann::json;

void ModelConfig::Validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("ModelConfig: ") + what);
  };
  need(feat_dim >= 1 && d_model >= 1 && n_heads >= 1 && d_ff >= 1 &&
           n_enc_layers >= 1 && n_dec_layers >= 1 && vocab_size >= 1,
       "all dimensions must be >= 1");
  need(d_model % n_heads == 0, "d_model must be divisible by n_heads");
  need(conv_kernel >= 1, "conv_kernel must be >= 1");
  need(dropout >= 0 && dropout < 1, "dropout must lie in [0, 1)");
  need(label_smoothing >= 0 && label_smoothing < 1,
       "label_smoothing must lie in [0, 1)");
}

json ModelConfig::ToJson() const {
  return {{"feat_dim", feat_dim},         {"d_model", d_model},
          {"n_heads", n_heads},           {"d_ff", d_ff},
          {"n_enc_layers", n_enc_layers}, {"n_dec_layers", n_dec_layers},
          {"conv_kernel", conv_kernel},   {"vocab_size", vocab_size},
          {"dropout", dropout},           {"label_smoothing", label_smoothing}};
}

ModelConfig ModelConfig::FromJson(const json& j) {
  ModelConfig c;
  c.feat_dim = j.at("feat_dim").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.n_enc_layers = j.at("n_enc_layers").get<int>();
  c.n_dec_layers = j.at("n_dec_layers").get<int>();
  c.conv_kernel = j.at("conv_kernel").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.label_smoothing = j.at("label_smoothing").get<double>();
  c.Validate();
  return c;
}

std::vector<ParamSpec> ParameterSpecs(const ModelConfig& c) {
  c.Validate();
  using K = ParamSpec::Kind;
  std::vector<ParamSpec> specs;
  const int d = c.d_model;
  auto linear = [&](const std::string& p, int in, int out) {
    specs.push_back({p + ".weight", {in, out}, K::kWeight, in, out});
    specs.push_back({p + ".bias", {out}, K::kBias});
  };
  auto norm = [&](const std::string& p) {
    specs.push_back({p + ".gamma", {d}, K::kGain});
    specs.push_back({p + ".beta", {d}, K::kBias});
  };
  auto attention = [&](const std::string& p) {
    norm(p + ".norm");
    linear(p + ".query", d, d);
    linear(p + ".key", d, d);
    linear(p + ".value", d, d);
    linear(p + ".out", d, d);
  };
  auto ffn = [&](const std::string& p) {
    norm(p + ".norm");
    linear(p + ".w1", d, c.d_ff);
    linear(p + ".w2", c.d_ff, d);
  };

  specs.push_back({"encoder.subsample.conv1.weight", {3, c.feat_dim, d},
                   K::kWeight, 3 * c.feat_dim, 3 * d});
  specs.push_back({"encoder.subsample.conv1.bias", {d}, K::kBias});
  specs.push_back({"encoder.subsample.conv2.weight", {3, d, d}, K::kWeight,
                   3 * d, 3 * d});
  specs.push_back({"encoder.subsample.conv2.bias", {d}, K::kBias});
  linear("encoder.subsample.out", d, d);
  for (int l = 0; l < c.n_enc_layers; ++l) {
    const std::string p = "encoder.layers." + std::to_string(l);
    ffn(p + ".ffn1");
    attention(p + ".self_attn");
    norm(p + ".conv.norm");
    linear(p + ".conv.pointwise1", d, 2 * d);
    specs.push_back({p + ".conv.depthwise.weight", {c.conv_kernel, d},
                     K::kWeight, c.conv_kernel, c.conv_kernel});
    specs.push_back({p + ".conv.depthwise.bias", {d}, K::kBias});
    linear(p + ".conv.pointwise2", d, d);
    ffn(p + ".ffn2");
    norm(p + ".final_norm");
  }
  linear("ctc", d, c.vocab_size + 1);
  specs.push_back({"decoder.embed", {c.vocab_size + 2, d}, K::kEmbedding});
  for (int l = 0; l < c.n_dec_layers; ++l) {
    const std::string p = "decoder.layers." + std::to_string(l);
    attention(p + ".self_attn");
    attention(p + ".cross_attn");
    ffn(p + ".ffn");
  }
  norm("decoder.final_norm");
  linear("decoder.out", d, c.vocab_size + 2);
  return specs;
}

template <typename T>
Parameters<T> InitParams(uint64_t seed, const ModelConfig& config,
                         bool requires_grad) {
  std::mt19937_64 rng(seed);
  Parameters<T> params;
  for (const auto& spec : ParameterSpecs(config)) {
    std::vector<T> v(NumElements(spec.shape), T(0));
    switch (spec.kind) {
      case ParamSpec::Kind::kWeight: {
        const double bound = std::sqrt(6.0 / (spec.fan_in + spec.fan_out));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& x : v) x = static_cast<T>(u(rng));
        break;
      }
      case ParamSpec::Kind::kEmbedding: {
        std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(config.d_model));
        for (auto& x : v) x = static_cast<T>(n(rng));
        break;
      }
      case ParamSpec::Kind::kGain:
        std::fill(v.begin(), v.end(), T(1));
        break;
      case ParamSpec::Kind::kBias:
        break;
    }
    params.emplace(spec.name,
                   Tensor<T>::FromData(spec.shape, std::move(v), requires_grad));
  }
  return params;
}

template <typename To, typename From>
Parameters<To> CastParams(const Parameters<From>& params, bool requires_grad) {
  Parameters<To> out;
  for (const auto& [name, t] : params) {
    std::vector<To> v(t.data().begin(), t.data().end());
    out.emplace(name, Tensor<To>::FromData(t.shape(), std::move(v),
                                           requires_grad));
  }
  return out;
}

template <typename T>
void CheckParams(const Parameters<T>& params, const ModelConfig& config) {
  const auto specs = ParameterSpecs(config);
  if (specs.size() != params.size())
    throw std::invalid_argument("parameter set does not match model config");
  for (const auto& spec : specs) {
    auto it = params.find(spec.name);
    if (it == params.end())
      throw std::invalid_argument("missing parameter " + spec.name);
    if (it->second.shape() != spec.shape)
      throw std::invalid_argument("parameter " + spec.name + " has shape " +
                                  ShapeString(it->second.shape()) +
                                  ", expected " + ShapeString(spec.shape));
  }
}

std::vector<double> PositionEncoding(int length, int d) {
  std::vector<double> pe(static_cast<size_t>(length) * d);
  for (int t = 0; t < length; ++t)
    for (int i = 0; i < d; i += 2) {
      const double angle = t / std::pow(10000.0, static_cast<double>(i) / d);
      pe[t * d + i] = std::sin(angle);
      if (i + 1 < d) pe[t * d + i + 1] = std::cos(angle);
    }
  return pe;
}

namespace {

template <typename T>
class Layers {
 public:
  Layers(const Parameters<T>& p, const ModelConfig& c, const ForwardOptions& o)
      : params_(p), config_(c), options_(o) {}

  const Tensor<T>& P(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end())
      throw std::invalid_argument("missing parameter " + name);
    if (options_.param_trace != nullptr)
      options_.param_trace->push_back(it->second.node());
    return it->second;
  }

  Tensor<T> Linear(const Tensor<T>& x, const std::string& p) const {
    return AddRowVector(MatMul(x, P(p + ".weight")), P(p + ".bias"));
  }

  Tensor<T> Norm(const Tensor<T>& x, const std::string& p) const {
    return LayerNorm(x, P(p + ".gamma"), P(p + ".beta"));
  }

  Tensor<T> Drop(const Tensor<T>& x) const {
    if (options_.dropout_rng == nullptr || config_.dropout == 0) return x;
    return Dropout(x, static_cast<T>(config_.dropout), *options_.dropout_rng);
  }

  Tensor<T> FeedForward(const Tensor<T>& x, const std::string& p) const {
    return Drop(Linear(Swish(Linear(Norm(x, p + ".norm"), p + ".w1")),
                       p + ".w2"));
  }

  // Pre-norm multi-head attention; keys/values come from memory when given.
  Tensor<T> Attention(const Tensor<T>& x, const Tensor<T>* memory,
                      const AttentionMask& mask, const std::string& p) const {
    const Tensor<T> q_in = Norm(x, p + ".norm");
    const Tensor<T>& kv_in = memory ? *memory : q_in;
    const Tensor<T> q = Linear(q_in, p + ".query");
    const Tensor<T> k = Linear(kv_in, p + ".key");
    const Tensor<T> v = Linear(kv_in, p + ".value");
    const int heads = config_.n_heads;
    const int dk = config_.d_model / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dk));
    std::vector<Tensor<T>> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      auto qh = SliceCols(q, h * dk, dk);
      auto kh = SliceCols(k, h * dk, dk);
      auto vh = SliceCols(v, h * dk, dk);
      auto scores = Scale(MatMul(qh, Transpose(kh)), scale);
      outs.push_back(MatMul(MaskedSoftmax(scores, mask), vh));
    }
    return Drop(Linear(heads == 1 ? outs[0] : ConcatCols(outs), p + ".out"));
  }

  Tensor<T> ConvModule(const Tensor<T>& x, const std::string& p) const {
    auto y = Glu(Linear(Norm(x, p + ".norm"), p + ".pointwise1"));
    y = AddRowVector(DepthwiseCausalConv1d(y, P(p + ".depthwise.weight")),
                     P(p + ".depthwise.bias"));
    return Drop(Linear(Swish(y), p + ".pointwise2"));
  }

  Tensor<T> AddPositions(const Tensor<T>& x) const {
    auto pe = PositionEncoding(x.rows(), x.cols());
    return Add(x, Tensor<T>::FromData(x.shape(),
                                      std::vector<T>(pe.begin(), pe.end())));
  }

 private:
  const Parameters<T>& params_;
  const ModelConfig& config_;
  const ForwardOptions& options_;
};

}  // namespace

template <typename T>
Tensor<T> FramesTensor(const Utterance& u) {
  return Tensor<T>::FromData({u.num_frames, u.feat_dim},
                             std::vector<T>(u.frames.begin(), u.frames.end()));
}

template <typename T>
EncoderOutput<T> Encode(const Tensor<T>& frames, ChunkSetting chunk,
                        const Parameters<T>& params, const ModelConfig& config,
                        const ForwardOptions& options) {
  if (frames.ndim() != 2 || frames.cols() != config.feat_dim)
    throw std::invalid_argument("Encode: frames must be T x feat_dim");
  const int length = SubsampledLength(frames.rows());
  Layers<T> L(params, config, options);
  const std::string s = "encoder.subsample.";
  auto x = Relu(AddRowVector(Conv1d(frames, L.P(s + "conv1.weight"), 2,
                                    PaddingMode::kNone),
                             L.P(s + "conv1.bias")));
  x = Relu(AddRowVector(
      Conv1d(x, L.P(s + "conv2.weight"), 2, PaddingMode::kNone),
      L.P(s + "conv2.bias")));
  x = L.Drop(L.AddPositions(L.Linear(x, s + "out")));
  const AttentionMask mask = MaskFor(length, chunk);
  const T half = T(0.5);
  for (int l = 0; l < config.n_enc_layers; ++l) {
    const std::string p = "encoder.layers." + std::to_string(l);
    x = Add(x, Scale(L.FeedForward(x, p + ".ffn1"), half));
    x = Add(x, L.Attention(x, nullptr, mask, p + ".self_attn"));
    x = Add(x, L.ConvModule(x, p + ".conv"));
    x = Add(x, Scale(L.FeedForward(x, p + ".ffn2"), half));
    x = L.Norm(x, p + ".final_norm");
  }
  return {x, length};
}

template <typename T>
Tensor<T> CtcHead(const EncoderOutput<T>& enc, const Parameters<T>& params) {
  return LogSoftmax(AddRowVector(MatMul(enc.hidden, params.at("ctc.weight")),
                                 params.at("ctc.bias")));
}

template <typename T>
Tensor<T> DecoderForward(const EncoderOutput<T>& enc,
                         std::span<const int> prev_tokens,
                         const Parameters<T>& params, const ModelConfig& config,
                         const ForwardOptions& options) {
  if (prev_tokens.empty())
    throw std::invalid_argument("DecoderForward: empty token prefix");
  const int dim = config.vocab_size + 2;
  for (int t : prev_tokens)
    if (t < 0 || t >= dim)
      throw std::out_of_range("decoder token id " + std::to_string(t) +
                              " out of range");
  Layers<T> L(params, config, options);
  const int len = static_cast<int>(prev_tokens.size());
  auto x = Scale(Embedding(L.P("decoder.embed"), prev_tokens),
                 static_cast<T>(std::sqrt(static_cast<double>(config.d_model))));
  x = L.Drop(L.AddPositions(x));
  const AttentionMask causal = ChunkMask(len, 1);
  const AttentionMask cross(len, enc.length, true);
  for (int l = 0; l < config.n_dec_layers; ++l) {
    const std::string p = "decoder.layers." + std::to_string(l);
    x = Add(x, L.Attention(x, nullptr, causal, p + ".self_attn"));
    x = Add(x, L.Attention(x, &enc.hidden, cross, p + ".cross_attn"));
    x = Add(x, L.FeedForward(x, p + ".ffn"));
  }
  return L.Linear(L.Norm(x, "decoder.final_norm"), "decoder.out");
}

#define UASR_INSTANTIATE(T)                                                    template Parameters<T> InitParams<T>(uint64_t, const ModelConfig&, bool);    template void CheckParams(const Parameters<T>&, const ModelConfig&);         template Tensor<T> FramesTensor<T>(const Utterance&);                        template EncoderOutput<T> Encode(const Tensor<T>&, ChunkSetting,                                              const Parameters<T>&, const ModelConfig&,                                    const ForwardOptions&);                     template Tensor<T> CtcHead(const EncoderOutput<T>&, const Parameters<T>&);   template Tensor<T> DecoderForward(const EncoderOutput<T>&,                                                     std::span<const int>,                                                        const Parameters<T>&,                                                        const ModelConfig&, const ForwardOptions&);

UASR_INSTANTIATE(float)
UASR_INSTANTIATE(double)
#undef UASR_INSTANTIATE

template Parameters<float> CastParams<float, double>(const Parameters<double>&,
                                                     bool);
template Parameters<double> CastParams<double, float>(const Parameters<float>&,
                                                      bool);
template Parameters<float> CastParams<float, float>(const Parameters<float>&,
                                                    bool);
template Parameters<double> CastParams<double, double>(
    const Parameters<double>&, bool);

}  // namespace uasr
