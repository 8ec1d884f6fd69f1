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

#ifndef POET_MODEL_H_
#define POET_MODEL_H_

#include <cstdint>
#include <string>
#include <vector>

#include "poet/checkpoint.h"
#include "poet/loss.h"
#include "poet/random.h"
#include "poet/tape.h"
#include "poet/tensor.h"

namespace poet {

struct ModelConfig {
  int d_model = 256;
  int enc_layers = 6;
  int dec_layers = 6;
  int heads = 8;
  int num_queries = 25;
  int num_keypoints = 17;
  int image_channels = 3;
  // One 3x3 conv + ReLU stage per entry; the last stage width is the
  // backbone feature depth that the 1x1 projection maps to d_model.
  std::vector<int> backbone_channels = {64, 128, 256};
  std::vector<int> backbone_strides = {2, 2, 2};
  double dropout = 0.1;
  // Width of the prediction head's hidden layers.
  int ffn_hidden = 256;
  // Width of the transformer feed-forward blocks.
  int dim_feedforward = 2048;

  static ModelConfig Reference();
  static ModelConfig Desk();

  int total_stride() const;
  // Throws kInvalidConfig / kBadDModel.
  void Validate() const;
};

enum class ParamGroup { kBackbone, kTransformer };

struct Parameter {
  std::string name;
  ad::Tensor value;
  ParamGroup group = ParamGroup::kTransformer;
  // Biases and normalization gains are excluded from weight decay.
  bool decay = true;
};

class ParameterStore {
 public:
  int Add(std::string name, ad::Tensor value, ParamGroup group, bool decay);

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  size_t size() const { return params_.size(); }
  const Parameter& operator[](int i) const { return params_[static_cast<size_t>(i)]; }
  Parameter& operator[](int i) { return params_[static_cast<size_t>(i)]; }
  int64_t NumScalars() const;

  std::vector<NamedTensor> ToNamed() const;
  // Every stored parameter must be present with an identical shape.
  void LoadNamed(const std::vector<NamedTensor>& tensors);

 private:
  std::vector<Parameter> params_;
};

// Fixed 2-D sinusoidal encoding [hf * wf x d_model]: the first half of the
// channels encodes the row, the second half the column; within each half,
// even channels hold sines and odd channels cosines of geometrically spaced
// frequencies. Throws kBadDModel unless d_model is a positive multiple of 4.
ad::Tensor PositionalEncoding(int hf, int wf, int d_model);

// Per-decoder-layer predictions; the last entry is the model output.
struct ForwardOutput {
  std::vector<PredictionVars> per_layer;

  const PredictionVars& final() const { return per_layer.back(); }
};

class PoetModel {
 public:
  // Xavier-uniform weights and query embeddings, zero biases, unit norm
  // gains; deterministic in `seed`.
  PoetModel(ModelConfig config, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  // Registers every parameter as a tape leaf, in store order.
  std::vector<ad::Var> Bind(ad::Tape& tape, bool requires_grad) const;

  // image [C x H x W] -> feature tokens [(H/S)(W/S) x d_model]. Throws
  // kIndivisibleInput unless H and W are multiples of the total stride.
  ad::Var Backbone(const std::vector<ad::Var>& p, const ad::Var& image) const;

  // Returns the normalized embeddings [N x d_model] of every decoder layer.
  std::vector<ad::Var> Transformer(const std::vector<ad::Var>& p, const ad::Var& features,
                                   const ad::Tensor& pos_enc, const ad::Var& queries, bool train,
                                   Rng& rng) const;

  PredictionVars Head(const std::vector<ad::Var>& p, const ad::Var& embeddings) const;

  ForwardOutput Forward(ad::Tape& tape, const std::vector<ad::Var>& p, const ad::Tensor& image,
                        bool train, Rng& rng) const;

  // Eval-mode forward without gradient recording; one entry per decoder layer.
  std::vector<PredictionTensors> Predict(const ad::Tensor& image) const;

  // Index of the object query embedding matrix [N x d_model] in the store.
  int query_param() const { return layout_.queries; }

 private:
  struct LinearIdx {
    int weight = -1;
    int bias = -1;
  };
  struct NormIdx {
    int gain = -1;
    int bias = -1;
  };
  struct ConvIdx {
    int weight = -1;
    int bias = -1;
    int stride = 1;
    int padding = 0;
  };
  struct AttentionIdx {
    LinearIdx q, k, v, out;
  };
  struct EncoderIdx {
    AttentionIdx self_attn;
    LinearIdx ffn1, ffn2;
    NormIdx norm1, norm2;
  };
  struct DecoderIdx {
    AttentionIdx self_attn, cross_attn;
    LinearIdx ffn1, ffn2;
    NormIdx norm1, norm2, norm3;
  };
  struct Layout {
    std::vector<ConvIdx> backbone;
    ConvIdx projection;
    NormIdx feature_norm;
    std::vector<EncoderIdx> encoder;
    std::vector<DecoderIdx> decoder;
    NormIdx decoder_norm;
    int queries = -1;
    LinearIdx head1, head2, head3, class_head;
  };

  ad::Var Linear(const std::vector<ad::Var>& p, const LinearIdx& idx, const ad::Var& x) const;
  ad::Var Norm(const std::vector<ad::Var>& p, const NormIdx& idx, const ad::Var& x) const;
  ad::Var Attention(const std::vector<ad::Var>& p, const AttentionIdx& idx, const ad::Var& query,
                    const ad::Var& key, const ad::Var& value, bool train, Rng& rng) const;
  ad::Var FeedForward(const std::vector<ad::Var>& p, const LinearIdx& a, const LinearIdx& b,
                      const ad::Var& x, bool train, Rng& rng) const;

  ModelConfig config_;
  ParameterStore store_;
  Layout layout_;
};

// Runs the backbone on a batch [B x C x H x W] one sample at a time and
// returns [B x d_model x H/S x W/S].
ad::Tensor BackboneForward(const PoetModel& model, const ad::Tensor& images);

}  // namespace poet

#endif  // POET_MODEL_H_
