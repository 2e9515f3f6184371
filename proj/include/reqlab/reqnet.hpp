// Copyright 2026 The ReqLab Authors
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

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "reqlab/baseline.hpp"

namespace reqlab {

inline constexpr int kEmbedDim = kSubcarriersPerRb * kSymbolsPerSlot;   // 168

struct ModelConfig {
    std::string preset{"paper"};
    int t_steps{4};
    int e_z{kEmbedDim};
    int coarse_width{36};      // base width of the CoarseNet U-Net (scales w, 2w, 4w)
    int rm_width{6};           // base width of the Fusion-CNN and decoder U-Nets
    int attn_heads{4};
    int coarse_in_channels{8};
    int dec_in_channels{8};
    int max_tile_rb{kMaxRb};   // rows of the intra-PRG positional table
    std::uint64_t seed{0};

    static ModelConfig paper();
    /// Widths divided by four, floored at 4 channels.
    static ModelConfig desk();
    static ModelConfig from_preset(const std::string& name);
    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

/// Decomposed likelihood feedback of one slot.
struct LikelihoodFeedback {
    ToneGrid delta_y;   // [n_rx, F, 14], zero off the mask
    PilotGrid x;        // [n_layers, F, 14]
    DmrsMask mask;
    double sigma{0.0};

    /// Gradient of the Gaussian log-likelihood w.r.t. conj-free h_{j,k}:
    /// delta_y_j x_k^* / sigma^2 (the Re/Im parts are the partial derivatives
    /// w.r.t. Re/Im h_{j,k}).
    cplx gradient(int j, int k, int f, int t) const;
};

/// delta_y_j = y_j - sum_k h_{j,k} x_k on the mask.
LikelihoodFeedback lm_gradient(const ToneGrid& y, const PilotGrid& x, const DmrsMask& mask,
                               const ChannelGrid& h_hat, double sigma);
LikelihoodFeedback lm_gradient(const Observation& obs, const ChannelGrid& h_hat);

/// sum over masked REs and rx of -|delta_y|^2 / (2 sigma^2).
double log_likelihood(const ToneGrid& y, const PilotGrid& x, const DmrsMask& mask, const ChannelGrid& h_hat,
                      double sigma);

/// Tensors for M slots sharing one layout. Streams are ordered s = j * L + k
/// and the flattened batch axis is ((m * N + n) * S + s).
struct ModelBatch {
    int m{0};
    int n_prg{0};
    int n_rx{0};
    int n_layers{0};
    int tile_rb{0};

    torch::Tensor y;          // [M, N, Nr, 2, H, 14]
    torch::Tensor x;          // [M, N, L, 2, H, 14]
    torch::Tensor mask;       // [M, N, 1, H, 14]
    torch::Tensor sigma;      // [M] reported noise std fed to the model
    torch::Tensor rb_valid;   // [N, tile_rb] bool, false on padded RBs
    torch::Tensor re_valid;   // [N, 1, H, 1] float
    torch::Tensor g_true;     // [M, N, Nr, L, 2, H, 14]
    torch::Tensor snr_db;     // [M] float64, genie SNR
    torch::Tensor amp;        // [M] float64, power amplification c

    int n_streams() const { return n_rx * n_layers; }
    int height() const { return tile_rb * kSubcarriersPerRb; }
    /// Number of real REs (without padding) per slot.
    std::int64_t n_re() const;
};

/// Packs observations that share one layout; short PRGs are zero padded to the tile.
ModelBatch pack_batch(std::span<const Observation> obs, torch::Dtype dtype = torch::kFloat32);

/// Stream tensor [M*N*S, C, H, 14] back to the per-slot grid of slot `m`.
ChannelGrid unpack_estimate(const torch::Tensor& h, const ModelBatch& batch, const GridLayout& layout, int m);

/// Layer axis of x and g_true reordered: out layer p = in layer perm[p].
ModelBatch permute_batch_layers(const ModelBatch& batch, std::span<const int> perm);

/// Stream tensor [M*N*S, C, H, W] with layers permuted like permute_batch_layers.
torch::Tensor permute_stream_layers(const torch::Tensor& t, const ModelBatch& batch, std::span<const int> perm);

// -- building blocks ---------------------------------------------------------

/// phi(conv_f(x)) * sigmoid(conv_g(x)) with phi = ELU.
class GatedConv2dImpl : public torch::nn::Module {
public:
    GatedConv2dImpl(int in_ch, int out_ch, int kernel = 3);
    torch::Tensor forward(const torch::Tensor& x);

private:
    int out_ch_;
    torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(GatedConv2d);

/// Three-scale gated-conv U-Net, widths (w, 2w, 4w), 1x1 head. Convolutions
/// see one PRG tile of one stream; zero padding keeps tiles independent.
class UNetImpl : public torch::nn::Module {
public:
    UNetImpl(int in_ch, int out_ch, int width, bool zero_head);
    torch::Tensor forward(const torch::Tensor& x);

private:
    GatedConv2d e1a_{nullptr}, e1b_{nullptr}, e2a_{nullptr}, e2b_{nullptr}, e3a_{nullptr}, e3b_{nullptr};
    GatedConv2d d2a_{nullptr}, d2b_{nullptr}, d1a_{nullptr}, d1b_{nullptr};
    torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(UNet);

/// Pre-norm multi-head self-attention with a residual connection.
class AttentionBlockImpl : public torch::nn::Module {
public:
    AttentionBlockImpl(int dim, int heads);
    /// x: [B, T, E]; key_valid: optional [B, T] bool, false keys are ignored.
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& key_valid = {},
                          const torch::Tensor& pos = {});

private:
    int heads_;
    torch::nn::LayerNorm norm_{nullptr};
    torch::nn::Linear qkv_{nullptr}, out_{nullptr};
};
TORCH_MODULE(AttentionBlock);

class MlpBlockImpl : public torch::nn::Module {
public:
    explicit MlpBlockImpl(int dim);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::LayerNorm norm_{nullptr};
    torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(MlpBlock);

/// Stream-shaped state passed between modules.
struct StreamState {
    torch::Tensor z;       // [B, 1, H, 14]
    torch::Tensor h_hat;   // [B, 2, H, 14]
};

/// Decomposed feedback per stream: Re/Im delta_y_j, Re/Im x_k, mask -> [B, 5, H, 14].
torch::Tensor likelihood_features(const ModelBatch& batch, const torch::Tensor& h_hat);

class CoarseNetImpl : public torch::nn::Module {
public:
    explicit CoarseNetImpl(const ModelConfig& cfg);
    /// Input features [B, 8, H, 14].
    StreamState forward(const torch::Tensor& features, const torch::Tensor& re_valid);

private:
    UNet unet_{nullptr};
};
TORCH_MODULE(CoarseNet);

/// CoarseNet input: Re/Im y_j, Re/Im x_k, Re/Im y_j x_k^*, mask, sigma.
torch::Tensor coarse_features(const ModelBatch& batch);

class EncoderImpl : public torch::nn::Module {
public:
    explicit EncoderImpl(const ModelConfig& cfg);
    torch::Tensor forward(const ModelBatch& batch, const torch::Tensor& z, const torch::Tensor& h_hat,
                          const torch::Tensor& feedback);

    AttentionBlock intra{nullptr}, inter{nullptr}, cross{nullptr};
    MlpBlock mlp{nullptr};
    UNet fusion{nullptr};
    torch::Tensor pos;   // [max_tile_rb, E]
};
TORCH_MODULE(Encoder);

class DecoderImpl : public torch::nn::Module {
public:
    explicit DecoderImpl(const ModelConfig& cfg);
    /// Additive refinement of h_hat; the zero-initialized head makes the
    /// untrained decoder an identity on h_hat.
    torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& h_hat, const torch::Tensor& feedback);

private:
    UNet unet_{nullptr};
};
TORCH_MODULE(Decoder);

class RefinementModuleImpl : public torch::nn::Module {
public:
    explicit RefinementModuleImpl(const ModelConfig& cfg);
    StreamState forward(const ModelBatch& batch, const StreamState& state);

    Encoder encoder{nullptr};
    Decoder decoder{nullptr};
};
TORCH_MODULE(RefinementModule);

struct ForwardResult {
    std::vector<torch::Tensor> h_hat;   // T+1 tensors [B, 2, H, 14]
    std::vector<torch::Tensor> z;       // T+1 latents [B, 1, H, 14]
};

class ReQuestNetImpl : public torch::nn::Module {
public:
    explicit ReQuestNetImpl(const ModelConfig& cfg);
    ForwardResult forward(const ModelBatch& batch);

    const ModelConfig& config() const { return cfg_; }
    CoarseNet coarse{nullptr};
    torch::nn::ModuleList modules{nullptr};

private:
    ModelConfig cfg_;
};
TORCH_MODULE(ReQuestNet);

/// Deterministic construction: parameters drawn from the config seed.
ReQuestNet make_model(const ModelConfig& cfg, torch::Dtype dtype = torch::kFloat32);

std::int64_t parameter_count(const torch::nn::Module& m);

/// Estimate sequence of one slot, per module output.
std::vector<ChannelGrid> requestnet_forward(ReQuestNet& net, const Observation& obs);

/// Estimator over Observations (last estimate), evaluation mode, no grad.
Estimator requestnet_estimator(ReQuestNet net);

// -- checkpoints -------------------------------------------------------------

struct CheckpointMeta {
    ModelConfig model;
    std::int64_t step{0};
    std::string manifest_hash;
    std::string extra_json{"{}"};   // trainer state (scheduler, rng counters)
};

/// Atomic write (temporary file then rename). `optimizer` may be null.
void save_checkpoint(const std::filesystem::path& path, ReQuestNet& net, const CheckpointMeta& meta,
                     torch::optim::Optimizer* optimizer = nullptr);

/// Reads the metadata only.
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

/// Loads parameters into `net`; throws std::runtime_error naming the tensor on
/// any missing entry or shape mismatch.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, ReQuestNet& net,
                               torch::optim::Optimizer* optimizer = nullptr);

/// Builds a model from the stored config and loads it.
ReQuestNet load_model(const std::filesystem::path& path, torch::Dtype dtype = torch::kFloat32);

}  // namespace reqlab
