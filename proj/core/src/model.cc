// Copyright 2026 The poet Authors. All Rights Reserved.
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

#include "poet/model.h"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "poet/error.h"
#include "poet/ops.h"

namespace poet {

using ad::Shape;
using ad::Tensor;
using ad::Var;

ModelConfig ModelConfig::Reference() { return ModelConfig{}; }

ModelConfig ModelConfig::Desk() {
  ModelConfig c;
  c.d_model = 64;
  c.enc_layers = 2;
  c.dec_layers = 2;
  c.heads = 4;
  c.num_queries = 8;
  c.num_keypoints = 5;
  c.image_channels = 5;
  c.backbone_channels = {16, 32, 64};
  c.backbone_strides = {2, 2, 2};
  c.ffn_hidden = 64;
  c.dim_feedforward = 128;
  return c;
}

int ModelConfig::total_stride() const {
  int s = 1;
  for (int v : backbone_strides) s *= v;
  return s;
}

void ModelConfig::Validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, msg); };
  if (d_model <= 0 || heads <= 0) fail("d_model and heads must be positive");
  if (d_model % heads != 0) {
    throw Error(ErrorCode::kBadDModel, "d_model " + std::to_string(d_model) +
                                           " is not divisible by heads " + std::to_string(heads));
  }
  if (d_model % 4 != 0) {
    throw Error(ErrorCode::kBadDModel, "d_model must be a multiple of 4 for the positional encoding");
  }
  if (enc_layers < 0 || dec_layers < 1) fail("need enc_layers >= 0 and dec_layers >= 1");
  if (num_queries < 1) fail("num_queries must be >= 1");
  if (num_keypoints < 1) fail("num_keypoints must be >= 1");
  if (image_channels < 1) fail("image_channels must be >= 1");
  if (backbone_channels.empty() || backbone_channels.size() != backbone_strides.size()) {
    fail("backbone_channels and backbone_strides must be non-empty and of equal length");
  }
  for (size_t i = 0; i < backbone_channels.size(); ++i) {
    if (backbone_channels[i] < 1 || backbone_strides[i] < 1) fail("backbone entries must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (ffn_hidden < 1 || dim_feedforward < 1) fail("hidden widths must be >= 1");
}

int ParameterStore::Add(std::string name, Tensor value, ParamGroup group, bool decay) {
  params_.push_back({std::move(name), std::move(value), group, decay});
  return static_cast<int>(params_.size() - 1);
}

int64_t ParameterStore::NumScalars() const {
  int64_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

std::vector<NamedTensor> ParameterStore::ToNamed() const {
  std::vector<NamedTensor> out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) out.push_back({p.name, p.value});
  return out;
}

void ParameterStore::LoadNamed(const std::vector<NamedTensor>& tensors) {
  for (Parameter& p : params_) {
    const NamedTensor* t = FindTensor(tensors, p.name);
    if (!t) throw Error(ErrorCode::kMissingField, "checkpoint lacks parameter " + p.name);
    if (t->value.shape() != p.value.shape()) {
      throw Error(ErrorCode::kShapeMismatch, p.name + ": checkpoint " +
                                                 ad::ShapeString(t->value.shape()) +
                                                 " vs model " + ad::ShapeString(p.value.shape()));
    }
    p.value = t->value;
  }
}

Tensor PositionalEncoding(int hf, int wf, int d_model) {
  if (d_model <= 0 || d_model % 4 != 0) {
    throw Error(ErrorCode::kBadDModel,
                "positional encoding needs d_model divisible by 4, got " + std::to_string(d_model));
  }
  constexpr double kTemperature = 10000.0;
  const int per_axis = d_model / 2;
  Tensor enc({static_cast<int64_t>(hf) * wf, d_model});
  for (int r = 0; r < hf; ++r) {
    for (int c = 0; c < wf; ++c) {
      const int64_t token = static_cast<int64_t>(r) * wf + c;
      const double pos[2] = {(r + 0.5) / hf * 2.0 * std::numbers::pi,
                             (c + 0.5) / wf * 2.0 * std::numbers::pi};
      for (int axis = 0; axis < 2; ++axis) {
        for (int j = 0; j < per_axis; ++j) {
          const double freq = std::pow(kTemperature, 2.0 * (j / 2) / per_axis);
          const double arg = pos[axis] / freq;
          enc.at(token, axis * per_axis + j) = (j % 2 == 0) ? std::sin(arg) : std::cos(arg);
        }
      }
    }
  }
  return enc;
}

namespace {

Tensor XavierUniform(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data()) v = rng.Uniform(-bound, bound);
  return t;
}

}  // namespace

PoetModel::PoetModel(ModelConfig config, uint64_t seed) : config_(std::move(config)) {
  config_.Validate();
  Rng rng(seed);
  const int d = config_.d_model;
  const int k = config_.num_keypoints;

  auto linear = [&](const std::string& name, int in, int out, ParamGroup group) {
    LinearIdx idx;
    idx.weight = store_.Add(name + ".weight", XavierUniform({in, out}, in, out, rng), group, true);
    idx.bias = store_.Add(name + ".bias", Tensor({out}), group, false);
    return idx;
  };
  auto norm = [&](const std::string& name) {
    NormIdx idx;
    idx.gain = store_.Add(name + ".gain", Tensor::Full({d}, 1.0), ParamGroup::kTransformer, false);
    idx.bias = store_.Add(name + ".bias", Tensor({d}), ParamGroup::kTransformer, false);
    return idx;
  };
  auto conv = [&](const std::string& name, int in, int out, int kernel, int stride, int padding) {
    ConvIdx idx;
    const int64_t area = static_cast<int64_t>(kernel) * kernel;
    idx.weight = store_.Add(name + ".weight",
                            XavierUniform({out, in, kernel, kernel}, in * area, out * area, rng),
                            ParamGroup::kBackbone, true);
    idx.bias = store_.Add(name + ".bias", Tensor({out}), ParamGroup::kBackbone, false);
    idx.stride = stride;
    idx.padding = padding;
    return idx;
  };
  auto attention = [&](const std::string& name) {
    AttentionIdx idx;
    idx.q = linear(name + ".q", d, d, ParamGroup::kTransformer);
    idx.k = linear(name + ".k", d, d, ParamGroup::kTransformer);
    idx.v = linear(name + ".v", d, d, ParamGroup::kTransformer);
    idx.out = linear(name + ".out", d, d, ParamGroup::kTransformer);
    return idx;
  };

  int in_channels = config_.image_channels;
  for (size_t s = 0; s < config_.backbone_channels.size(); ++s) {
    layout_.backbone.push_back(conv("backbone.stage" + std::to_string(s), in_channels,
                                    config_.backbone_channels[s], 3, config_.backbone_strides[s],
                                    1));
    in_channels = config_.backbone_channels[s];
  }
  layout_.projection = conv("backbone.projection", in_channels, d, 1, 1, 0);
  layout_.feature_norm = norm("backbone.norm");
  for (int idx : {layout_.feature_norm.gain, layout_.feature_norm.bias}) {
    store_[idx].group = ParamGroup::kBackbone;
  }

  for (int l = 0; l < config_.enc_layers; ++l) {
    const std::string name = "encoder.layer" + std::to_string(l);
    EncoderIdx e;
    e.self_attn = attention(name + ".self_attn");
    e.ffn1 = linear(name + ".ffn1", d, config_.dim_feedforward, ParamGroup::kTransformer);
    e.ffn2 = linear(name + ".ffn2", config_.dim_feedforward, d, ParamGroup::kTransformer);
    e.norm1 = norm(name + ".norm1");
    e.norm2 = norm(name + ".norm2");
    layout_.encoder.push_back(e);
  }
  for (int l = 0; l < config_.dec_layers; ++l) {
    const std::string name = "decoder.layer" + std::to_string(l);
    DecoderIdx dl;
    dl.self_attn = attention(name + ".self_attn");
    dl.cross_attn = attention(name + ".cross_attn");
    dl.ffn1 = linear(name + ".ffn1", d, config_.dim_feedforward, ParamGroup::kTransformer);
    dl.ffn2 = linear(name + ".ffn2", config_.dim_feedforward, d, ParamGroup::kTransformer);
    dl.norm1 = norm(name + ".norm1");
    dl.norm2 = norm(name + ".norm2");
    dl.norm3 = norm(name + ".norm3");
    layout_.decoder.push_back(dl);
  }
  layout_.decoder_norm = norm("decoder.norm");
  layout_.queries = store_.Add(
      "queries", XavierUniform({config_.num_queries, d}, config_.num_queries, d, rng),
      ParamGroup::kTransformer, true);
  const int h = config_.ffn_hidden;
  layout_.head1 = linear("head.mlp1", d, h, ParamGroup::kTransformer);
  layout_.head2 = linear("head.mlp2", h, h, ParamGroup::kTransformer);
  layout_.head3 = linear("head.mlp3", h, 2 + 3 * k, ParamGroup::kTransformer);
  layout_.class_head = linear("head.class", d, 2, ParamGroup::kTransformer);
}

std::vector<Var> PoetModel::Bind(ad::Tape& tape, bool requires_grad) const {
  std::vector<Var> vars;
  vars.reserve(store_.size());
  for (const Parameter& p : store_.all()) vars.push_back(tape.Parameter(p.value, requires_grad));
  return vars;
}

Var PoetModel::Linear(const std::vector<Var>& p, const LinearIdx& idx, const Var& x) const {
  return ad::AddRowVector(ad::MatMul(x, p[static_cast<size_t>(idx.weight)]),
                          p[static_cast<size_t>(idx.bias)]);
}

Var PoetModel::Norm(const std::vector<Var>& p, const NormIdx& idx, const Var& x) const {
  return ad::LayerNorm(x, p[static_cast<size_t>(idx.gain)], p[static_cast<size_t>(idx.bias)]);
}

Var PoetModel::Attention(const std::vector<Var>& p, const AttentionIdx& idx, const Var& query,
                         const Var& key, const Var& value, bool train, Rng& rng) const {
  const int heads = config_.heads;
  const int64_t head_dim = config_.d_model / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Var q = Linear(p, idx.q, query);
  Var k = Linear(p, idx.k, key);
  Var v = Linear(p, idx.v, value);
  std::vector<Var> outputs;
  outputs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const int64_t begin = h * head_dim, end = (h + 1) * head_dim;
    Var qh = ad::Slice(q, 1, begin, end);
    Var kh = ad::Slice(k, 1, begin, end);
    Var vh = ad::Slice(v, 1, begin, end);
    Var weights = ad::Softmax(ad::Scale(ad::MatMulTransposed(qh, kh), scale), 1);
    weights = ad::Dropout(weights, config_.dropout, train, rng);
    outputs.push_back(ad::MatMul(weights, vh));
  }
  Var merged = heads == 1 ? outputs[0] : ad::Concat(outputs, 1);
  return Linear(p, idx.out, merged);
}

Var PoetModel::FeedForward(const std::vector<Var>& p, const LinearIdx& a, const LinearIdx& b,
                           const Var& x, bool train, Rng& rng) const {
  Var hidden = ad::Dropout(ad::Relu(Linear(p, a, x)), config_.dropout, train, rng);
  return Linear(p, b, hidden);
}

Var PoetModel::Backbone(const std::vector<Var>& p, const Var& image) const {
  const Shape& shape = image.shape();
  if (shape.size() != 3 || shape[0] != config_.image_channels) {
    throw Error(ErrorCode::kShapeMismatch, "backbone expects [" +
                                               std::to_string(config_.image_channels) +
                                               " x H x W], got " + ad::ShapeString(shape));
  }
  const int stride = config_.total_stride();
  if (shape[1] % stride != 0 || shape[2] % stride != 0) {
    throw Error(ErrorCode::kIndivisibleInput, "image " + ad::ShapeString(shape) +
                                                  " is not divisible by stride " +
                                                  std::to_string(stride));
  }
  Var x = image;
  for (const ConvIdx& c : layout_.backbone) {
    x = ad::Relu(ad::Conv2d(x, p[static_cast<size_t>(c.weight)], p[static_cast<size_t>(c.bias)],
                            c.stride, c.padding));
  }
  const ConvIdx& proj = layout_.projection;
  x = ad::Conv2d(x, p[static_cast<size_t>(proj.weight)], p[static_cast<size_t>(proj.bias)],
                 proj.stride, proj.padding);
  const int64_t d = x.shape()[0];
  const int64_t positions = x.shape()[1] * x.shape()[2];
  // Per-token channel normalization brings the sparse conv responses to the
  // scale of the positional encoding.
  return Norm(p, layout_.feature_norm, ad::Transpose(ad::Reshape(x, {d, positions})));
}

std::vector<Var> PoetModel::Transformer(const std::vector<Var>& p, const Var& features,
                                        const Tensor& pos_enc, const Var& queries, bool train,
                                        Rng& rng) const {
  ad::Tape& tape = *features.tape();
  if (features.shape().size() != 2 || features.shape()[1] != config_.d_model ||
      pos_enc.shape() != features.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "features " + ad::ShapeString(features.shape()) +
                                               " vs positional encoding " +
                                               ad::ShapeString(pos_enc.shape()));
  }
  if (queries.shape().size() != 2 || queries.shape()[1] != config_.d_model) {
    throw Error(ErrorCode::kShapeMismatch, "queries " + ad::ShapeString(queries.shape()));
  }
  const double rate = config_.dropout;
  Var pos = tape.Constant(pos_enc);

  // The encoding enters the encoder input itself, so values carry position,
  // and is added again to queries and keys of every attention layer.
  Var memory = ad::Add(features, pos);
  for (const EncoderIdx& e : layout_.encoder) {
    Var qk = ad::Add(memory, pos);
    Var attended = Attention(p, e.self_attn, qk, qk, memory, train, rng);
    memory = Norm(p, e.norm1, ad::Add(memory, ad::Dropout(attended, rate, train, rng)));
    Var ff = FeedForward(p, e.ffn1, e.ffn2, memory, train, rng);
    memory = Norm(p, e.norm2, ad::Add(memory, ad::Dropout(ff, rate, train, rng)));
  }

  Var memory_keys = ad::Add(memory, pos);
  Var tgt = tape.Constant(Tensor(queries.shape()));
  std::vector<Var> per_layer;
  for (const DecoderIdx& dl : layout_.decoder) {
    Var qk = ad::Add(tgt, queries);
    Var self = Attention(p, dl.self_attn, qk, qk, tgt, train, rng);
    tgt = Norm(p, dl.norm1, ad::Add(tgt, ad::Dropout(self, rate, train, rng)));
    Var cross = Attention(p, dl.cross_attn, ad::Add(tgt, queries), memory_keys, memory, train, rng);
    tgt = Norm(p, dl.norm2, ad::Add(tgt, ad::Dropout(cross, rate, train, rng)));
    Var ff = FeedForward(p, dl.ffn1, dl.ffn2, tgt, train, rng);
    tgt = Norm(p, dl.norm3, ad::Add(tgt, ad::Dropout(ff, rate, train, rng)));
    per_layer.push_back(Norm(p, layout_.decoder_norm, tgt));
  }
  return per_layer;
}

PredictionVars PoetModel::Head(const std::vector<Var>& p, const Var& embeddings) const {
  const int64_t k = config_.num_keypoints;
  Var h = ad::Relu(Linear(p, layout_.head1, embeddings));
  h = ad::Relu(Linear(p, layout_.head2, h));
  Var out = Linear(p, layout_.head3, h);

  PredictionVars pred;
  pred.centers = ad::Sigmoid(ad::Slice(out, 1, 0, 2));
  pred.offsets = ad::Slice(out, 1, 2, 2 + 2 * k);
  // One score per keypoint, duplicated per coordinate.
  Var scores = ad::Sigmoid(ad::Slice(out, 1, 2 + 2 * k, 2 + 3 * k));
  std::vector<int> dup(static_cast<size_t>(2 * k));
  for (int i = 0; i < 2 * k; ++i) dup[static_cast<size_t>(i)] = i / 2;
  pred.visibilities = ad::Transpose(ad::GatherRows(ad::Transpose(scores), dup));
  pred.class_logits = Linear(p, layout_.class_head, embeddings);
  return pred;
}

ForwardOutput PoetModel::Forward(ad::Tape& tape, const std::vector<Var>& p, const Tensor& image,
                                 bool train, Rng& rng) const {
  Var tokens = Backbone(p, tape.Constant(image));
  const int stride = config_.total_stride();
  const int hf = static_cast<int>(image.dim(1)) / stride;
  const int wf = static_cast<int>(image.dim(2)) / stride;
  const Tensor pos = PositionalEncoding(hf, wf, config_.d_model);
  std::vector<Var> embeddings =
      Transformer(p, tokens, pos, p[static_cast<size_t>(layout_.queries)], train, rng);
  ForwardOutput out;
  for (const Var& e : embeddings) out.per_layer.push_back(Head(p, e));
  return out;
}

std::vector<PredictionTensors> PoetModel::Predict(const Tensor& image) const {
  ad::Tape tape;
  std::vector<Var> p = Bind(tape, false);
  Rng unused(0);
  ForwardOutput out = Forward(tape, p, image, false, unused);
  std::vector<PredictionTensors> result;
  for (const PredictionVars& layer : out.per_layer) result.push_back(ValuesOf(layer));
  return result;
}

Tensor BackboneForward(const PoetModel& model, const Tensor& images) {
  if (images.rank() != 4) {
    throw Error(ErrorCode::kShapeMismatch, "expected [B x C x H x W], got " +
                                               ad::ShapeString(images.shape()));
  }
  const int64_t batch = images.dim(0);
  const int64_t per_image = images.size() / (batch > 0 ? batch : 1);
  const Shape sample_shape = {images.dim(1), images.dim(2), images.dim(3)};
  const int stride = model.config().total_stride();
  const int64_t hf = images.dim(2) / stride, wf = images.dim(3) / stride;
  const int64_t d = model.config().d_model;
  Tensor out({batch, d, hf, wf});
  for (int64_t b = 0; b < batch; ++b) {
    ad::Tape tape;
    std::vector<Var> p = model.Bind(tape, false);
    std::vector<double> sample(images.data().begin() + b * per_image,
                               images.data().begin() + (b + 1) * per_image);
    Var tokens = model.Backbone(p, tape.Constant(Tensor(sample_shape, std::move(sample))));
    const Tensor& t = tokens.value();  // [hf*wf x d]
    for (int64_t c = 0; c < d; ++c) {
      for (int64_t pos = 0; pos < hf * wf; ++pos) {
        out[((b * d) + c) * hf * wf + pos] = t.at(pos, c);
      }
    }
  }
  return out;
}

}  // namespace poet
