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

#include "reqlab/reqnet.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace reqlab {

namespace F = torch::nn::functional;
using torch::indexing::Slice;

// -- config ------------------------------------------------------------------

ModelConfig ModelConfig::paper()
{
    return ModelConfig{};
}

ModelConfig ModelConfig::desk()
{
    ModelConfig c;
    c.preset = "desk";
    c.t_steps = 2;
    c.coarse_width = std::max(4, c.coarse_width / 4);
    c.rm_width = std::max(4, c.rm_width / 4);
    return c;
}

ModelConfig ModelConfig::from_preset(const std::string& name)
{
    if (name == "paper")
        return paper();
    if (name == "desk")
        return desk();
    throw ConfigError("model.preset must be paper or desk, got '" + name + "'");
}

void ModelConfig::validate() const
{
    if (e_z != kEmbedDim)
        throw ConfigError("model.e_z must equal 12 * 14 = 168");
    if (coarse_in_channels != 8 || dec_in_channels != 8)
        throw ConfigError("model input channel counts are fixed at 8");
    if (t_steps < 0)
        throw ConfigError("model.t_steps must be non-negative");
    if (coarse_width < 1 || rm_width < 1)
        throw ConfigError("model widths must be positive");
    if (attn_heads < 1 || e_z % attn_heads != 0)
        throw ConfigError("model.attn_heads must divide 168");
    if (max_tile_rb < 1)
        throw ConfigError("model.max_tile_rb must be positive");
}

std::string ModelConfig::to_json() const
{
    nlohmann::json j{{"preset", preset},         {"t_steps", t_steps},
                     {"e_z", e_z},               {"coarse_width", coarse_width},
                     {"rm_width", rm_width},     {"attn_heads", attn_heads},
                     {"coarse_in_channels", coarse_in_channels},
                     {"dec_in_channels", dec_in_channels},
                     {"max_tile_rb", max_tile_rb}, {"seed", seed}};
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text)
{
    const auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.preset = j.at("preset").get<std::string>();
    c.t_steps = j.at("t_steps").get<int>();
    c.e_z = j.at("e_z").get<int>();
    c.coarse_width = j.at("coarse_width").get<int>();
    c.rm_width = j.at("rm_width").get<int>();
    c.attn_heads = j.at("attn_heads").get<int>();
    c.coarse_in_channels = j.at("coarse_in_channels").get<int>();
    c.dec_in_channels = j.at("dec_in_channels").get<int>();
    c.max_tile_rb = j.at("max_tile_rb").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

// -- likelihood module (plain arrays) ------------------------------------------

cplx LikelihoodFeedback::gradient(int j, int k, int f, int t) const
{
    return delta_y(j, f, t) * std::conj(x(k, f, t)) / (sigma * sigma);
}

LikelihoodFeedback lm_gradient(const ToneGrid& y, const PilotGrid& x, const DmrsMask& mask,
                               const ChannelGrid& h_hat, double sigma)
{
    const int n_sc = mask.n_subcarriers;
    if (y.n_subcarriers() != n_sc || x.n_subcarriers() != n_sc || h_hat.n_subcarriers() != n_sc ||
        h_hat.n_rx() != y.n_ports() || h_hat.n_cols() != x.n_ports())
        throw std::invalid_argument("lm_gradient: shapes disagree");
    LikelihoodFeedback fb{ToneGrid(y.n_ports(), n_sc), x, mask, sigma};
    for (int j = 0; j < y.n_ports(); ++j)
        for (int f = 0; f < n_sc; ++f)
            for (int t = 0; t < kSymbolsPerSlot; ++t) {
                if (!mask.at(f, t))
                    continue;
                cplx r = y(j, f, t);
                for (int k = 0; k < x.n_ports(); ++k)
                    r -= h_hat(j, k, f, t) * x(k, f, t);
                fb.delta_y(j, f, t) = r;
            }
    return fb;
}

LikelihoodFeedback lm_gradient(const Observation& obs, const ChannelGrid& h_hat)
{
    return lm_gradient(obs.y, obs.x, obs.layout.mask, h_hat, obs.sigma);
}

double log_likelihood(const ToneGrid& y, const PilotGrid& x, const DmrsMask& mask, const ChannelGrid& h_hat,
                      double sigma)
{
    const auto fb = lm_gradient(y, x, mask, h_hat, sigma);
    double acc = 0.0;
    for (const auto& v : fb.delta_y.values())
        acc += std::norm(v);
    return -acc / (2.0 * sigma * sigma);
}

// -- batching ------------------------------------------------------------------

std::int64_t ModelBatch::n_re() const
{
    return static_cast<std::int64_t>(re_valid.sum().item<double>()) * kSymbolsPerSlot;
}

namespace {

void check_same_layout(const Observation& a, const Observation& b)
{
    const auto& la = a.layout;
    const auto& lb = b.layout;
    if (la.carrier.n_rb != lb.carrier.n_rb || la.prg.bundle_size != lb.prg.bundle_size ||
        la.mask.mask != lb.mask.mask || a.n_rx() != b.n_rx() || a.n_layers() != b.n_layers())
        throw std::invalid_argument("pack_batch: observations in one batch must share the grid layout");
}

}  // namespace

ModelBatch pack_batch(std::span<const Observation> obs, torch::Dtype dtype)
{
    if (obs.empty())
        throw std::invalid_argument("pack_batch: empty batch");
    for (const auto& o : obs)
        check_same_layout(obs.front(), o);
    const GridLayout& layout = obs.front().layout;
    ModelBatch b;
    b.m = static_cast<int>(obs.size());
    b.n_prg = layout.n_prg();
    b.n_rx = obs.front().n_rx();
    b.n_layers = obs.front().n_layers();
    b.tile_rb = layout.tile_rb();
    const int h = b.height();
    const int w = kSymbolsPerSlot;
    const int n = b.n_prg, nr = b.n_rx, nl = b.n_layers, m = b.m;

    std::vector<double> y(static_cast<std::size_t>(m) * n * nr * 2 * h * w, 0.0);
    std::vector<double> x(static_cast<std::size_t>(m) * n * nl * 2 * h * w, 0.0);
    std::vector<double> mk(static_cast<std::size_t>(m) * n * h * w, 0.0);
    std::vector<double> g(static_cast<std::size_t>(m) * n * nr * nl * 2 * h * w, 0.0);
    std::vector<double> sigma(static_cast<std::size_t>(m)), snr(static_cast<std::size_t>(m)), amp(static_cast<std::size_t>(m));
    std::vector<std::uint8_t> rb_valid(static_cast<std::size_t>(n) * b.tile_rb, 0);
    std::vector<double> re_valid(static_cast<std::size_t>(n) * h, 0.0);

    for (int p = 0; p < n; ++p) {
        const auto& span = layout.spans[static_cast<std::size_t>(p)];
        for (int r = 0; r < span.n_rb; ++r)
            rb_valid[static_cast<std::size_t>(p * b.tile_rb + r)] = 1;
        for (int r = 0; r < span.n_rb * kSubcarriersPerRb; ++r)
            re_valid[static_cast<std::size_t>(p * h + r)] = 1.0;
    }

    for (int s = 0; s < m; ++s) {
        const Observation& o = obs[static_cast<std::size_t>(s)];
        sigma[static_cast<std::size_t>(s)] = o.sigma_reported;
        snr[static_cast<std::size_t>(s)] = o.snr_db;
        amp[static_cast<std::size_t>(s)] = o.amp;
        for (int p = 0; p < n; ++p) {
            const auto& span = layout.spans[static_cast<std::size_t>(p)];
            const int f0 = span.start_rb * kSubcarriersPerRb;
            for (int r = 0; r < span.n_rb * kSubcarriersPerRb; ++r) {
                const int f = f0 + r;
                for (int t = 0; t < w; ++t) {
                    const auto pix = static_cast<std::size_t>(r * w + t);
                    const auto hw = static_cast<std::size_t>(h * w);
                    mk[(static_cast<std::size_t>(s) * n + p) * hw + pix] = layout.mask.at(f, t) ? 1.0 : 0.0;
                    for (int j = 0; j < nr; ++j) {
                        const auto base = ((static_cast<std::size_t>(s) * n + p) * nr + j) * 2 * hw;
                        y[base + pix] = o.y(j, f, t).real();
                        y[base + hw + pix] = o.y(j, f, t).imag();
                    }
                    for (int k = 0; k < nl; ++k) {
                        const auto base = ((static_cast<std::size_t>(s) * n + p) * nl + k) * 2 * hw;
                        x[base + pix] = o.x(k, f, t).real();
                        x[base + hw + pix] = o.x(k, f, t).imag();
                    }
                    for (int j = 0; j < nr; ++j)
                        for (int k = 0; k < nl; ++k) {
                            const auto base = (((static_cast<std::size_t>(s) * n + p) * nr + j) * nl + k) * 2 * hw;
                            g[base + pix] = o.g_true(j, k, f, t).real();
                            g[base + hw + pix] = o.g_true(j, k, f, t).imag();
                        }
                }
            }
        }
    }

    const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto make = [&](std::vector<double>& v, std::vector<std::int64_t> shape) {
        return torch::from_blob(v.data(), shape, opts).clone().to(dtype);
    };
    b.y = make(y, {m, n, nr, 2, h, w});
    b.x = make(x, {m, n, nl, 2, h, w});
    b.mask = make(mk, {m, n, 1, h, w});
    b.g_true = make(g, {m, n, nr, nl, 2, h, w});
    b.sigma = make(sigma, {m});
    b.snr_db = make(snr, {m}).to(torch::kFloat64);
    b.amp = make(amp, {m}).to(torch::kFloat64);
    b.rb_valid = torch::from_blob(rb_valid.data(), {n, b.tile_rb}, torch::kUInt8).clone().to(torch::kBool);
    b.re_valid = make(re_valid, {n, 1, h, 1});
    return b;
}

ChannelGrid unpack_estimate(const torch::Tensor& h, const ModelBatch& batch, const GridLayout& layout, int m)
{
    const auto t = h.detach().to(torch::kFloat64).contiguous();
    const int S = batch.n_streams();
    const int H = batch.height();
    if (t.dim() != 4 || t.size(0) != static_cast<std::int64_t>(batch.m) * batch.n_prg * S || t.size(1) != 2 ||
        t.size(2) != H || t.size(3) != kSymbolsPerSlot)
        throw std::invalid_argument("unpack_estimate: tensor shape does not match the batch");
    const auto acc = t.accessor<double, 4>();
    ChannelGrid g(batch.n_rx, batch.n_layers, layout.n_subcarriers());
    for (int p = 0; p < batch.n_prg; ++p) {
        const auto& span = layout.spans[static_cast<std::size_t>(p)];
        for (int j = 0; j < batch.n_rx; ++j)
            for (int k = 0; k < batch.n_layers; ++k) {
                const std::int64_t idx = (static_cast<std::int64_t>(m) * batch.n_prg + p) * S + j * batch.n_layers + k;
                for (int r = 0; r < span.n_rb * kSubcarriersPerRb; ++r)
                    for (int tt = 0; tt < kSymbolsPerSlot; ++tt)
                        g(j, k, span.start_rb * kSubcarriersPerRb + r, tt) = {acc[idx][0][r][tt], acc[idx][1][r][tt]};
            }
    }
    return g;
}

ModelBatch permute_batch_layers(const ModelBatch& batch, std::span<const int> perm)
{
    check_permutation(perm, batch.n_layers);
    const auto idx = torch::tensor(std::vector<std::int64_t>(perm.begin(), perm.end()), torch::kLong);
    ModelBatch out = batch;
    out.x = batch.x.index_select(2, idx);
    out.g_true = batch.g_true.index_select(3, idx);
    return out;
}

torch::Tensor permute_stream_layers(const torch::Tensor& t, const ModelBatch& batch, std::span<const int> perm)
{
    check_permutation(perm, batch.n_layers);
    const auto idx = torch::tensor(std::vector<std::int64_t>(perm.begin(), perm.end()), torch::kLong);
    auto shape = t.sizes().vec();
    std::vector<std::int64_t> split{batch.m, batch.n_prg, batch.n_rx, batch.n_layers};
    split.insert(split.end(), shape.begin() + 1, shape.end());
    return t.reshape(split).index_select(3, idx).reshape(shape);
}

// -- building blocks -------------------------------------------------------------

constexpr double kFeatureGain = 3.0;

GatedConv2dImpl::GatedConv2dImpl(int in_ch, int out_ch, int kernel) : out_ch_(out_ch)
{
    conv_ = register_module(
        "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, 2 * out_ch, kernel).padding(kernel / 2)));
    // Default fan-in uniform init shrinks activations through the gates;
    // keep the feature half at gain kFeatureGain, the gate half at unit gain.
    torch::NoGradGuard ng;
    const double std0 = 1.0 / std::sqrt(static_cast<double>(in_ch * kernel * kernel));
    conv_->weight.narrow(0, 0, out_ch).normal_(0.0, kFeatureGain * std0);
    conv_->weight.narrow(0, out_ch, out_ch).normal_(0.0, std0);
}

torch::Tensor GatedConv2dImpl::forward(const torch::Tensor& x)
{
    const auto both = conv_->forward(x);
    return F::elu(both.narrow(1, 0, out_ch_)) * torch::sigmoid(both.narrow(1, out_ch_, out_ch_));
}

UNetImpl::UNetImpl(int in_ch, int out_ch, int width, bool zero_head)
{
    const int w1 = width, w2 = 2 * width, w3 = 4 * width;
    e1a_ = register_module("e1a", GatedConv2d(in_ch, w1));
    e1b_ = register_module("e1b", GatedConv2d(w1, w1));
    e2a_ = register_module("e2a", GatedConv2d(w1, w2));
    e2b_ = register_module("e2b", GatedConv2d(w2, w2));
    e3a_ = register_module("e3a", GatedConv2d(w2, w3));
    e3b_ = register_module("e3b", GatedConv2d(w3, w3));
    d2a_ = register_module("d2a", GatedConv2d(w3 + w2, w2));
    d2b_ = register_module("d2b", GatedConv2d(w2, w2));
    d1a_ = register_module("d1a", GatedConv2d(w2 + w1, w1));
    d1b_ = register_module("d1b", GatedConv2d(w1, w1));
    head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(w1, out_ch, 1)));
    if (zero_head) {
        torch::NoGradGuard ng;
        head_->weight.zero_();
        head_->bias.zero_();
    }
}

namespace {

torch::Tensor down(const torch::Tensor& x)
{
    return F::avg_pool2d(x, F::AvgPool2dFuncOptions(2).stride(2).ceil_mode(true));
}

torch::Tensor up_to(const torch::Tensor& x, const torch::Tensor& like)
{
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<std::int64_t>{like.size(2), like.size(3)})
                                 .mode(torch::kNearest));
}

}  // namespace

torch::Tensor UNetImpl::forward(const torch::Tensor& x)
{
    const auto e1 = e1b_(e1a_(x));
    const auto e2 = e2b_(e2a_(down(e1)));
    const auto e3 = e3b_(e3a_(down(e2)));
    const auto d2 = d2b_(d2a_(torch::cat({up_to(e3, e2), e2}, 1)));
    const auto d1 = d1b_(d1a_(torch::cat({up_to(d2, e1), e1}, 1)));
    return head_(d1);
}

AttentionBlockImpl::AttentionBlockImpl(int dim, int heads) : heads_(heads)
{
    norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    qkv_ = register_module("qkv", torch::nn::Linear(dim, 3 * dim));
    out_ = register_module("out", torch::nn::Linear(dim, dim));
}

torch::Tensor AttentionBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& key_valid,
                                          const torch::Tensor& pos)
{
    const auto B = x.size(0), T = x.size(1), E = x.size(2);
    const auto hd = E / heads_;
    auto u = norm_(x);
    if (pos.defined())
        u = u + pos;
    const auto qkv = qkv_(u).view({B, T, 3, heads_, hd}).permute({2, 0, 3, 1, 4});   // [3, B, h, T, d]
    const auto q = qkv[0], k = qkv[1], v = qkv[2];
    auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(hd));
    if (key_valid.defined())
        scores = scores.masked_fill(key_valid.logical_not().view({B, 1, 1, T}), -std::numeric_limits<double>::infinity());
    const auto att = torch::softmax(scores, -1);
    const auto o = torch::matmul(att, v).permute({0, 2, 1, 3}).reshape({B, T, E});
    return x + out_(o);
}

MlpBlockImpl::MlpBlockImpl(int dim)
{
    norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    fc1_ = register_module("fc1", torch::nn::Linear(dim, 4 * dim));
    fc2_ = register_module("fc2", torch::nn::Linear(4 * dim, dim));
}

torch::Tensor MlpBlockImpl::forward(const torch::Tensor& x)
{
    return x + fc2_(F::gelu(fc1_(norm_(x))));
}

// -- feature assembly ------------------------------------------------------------

namespace {

// [N, 1, H, 1] validity broadcast to the stream batch [M*N*S, 1, H, 1].
torch::Tensor stream_re_valid(const ModelBatch& b)
{
    return b.re_valid.unsqueeze(0).unsqueeze(2)
        .expand({b.m, b.n_prg, b.n_streams(), 1, b.height(), 1})
        .reshape({-1, 1, b.height(), 1});
}

torch::Tensor stream_rb_valid(const ModelBatch& b)
{
    return b.rb_valid.unsqueeze(0).unsqueeze(2).expand({b.m, b.n_prg, b.n_streams(), b.tile_rb}).reshape({-1, b.tile_rb});
}

// Complex product of paired channels along dimension `d`.
std::pair<torch::Tensor, torch::Tensor> cmul(const torch::Tensor& ar, const torch::Tensor& ai, const torch::Tensor& br,
                                             const torch::Tensor& bi)
{
    return {ar * br - ai * bi, ar * bi + ai * br};
}

}  // namespace

torch::Tensor coarse_features(const ModelBatch& b)
{
    const auto M = b.m, N = b.n_prg, R = b.n_rx, L = b.n_layers, H = b.height(), W = kSymbolsPerSlot;
    const auto y = b.y.unsqueeze(3).expand({M, N, R, L, 2, H, W});
    const auto x = b.x.unsqueeze(2).expand({M, N, R, L, 2, H, W});
    const auto yr = y.select(4, 0), yi = y.select(4, 1), xr = x.select(4, 0), xi = x.select(4, 1);
    // y x^*
    const auto lr = yr * xr + yi * xi;
    const auto li = yi * xr - yr * xi;
    const auto mask = b.mask.view({M, N, 1, 1, 1, H, W}).expand({M, N, R, L, 1, H, W});
    const auto valid = b.re_valid.view({1, N, 1, 1, 1, H, 1});
    const auto sig = (b.sigma.view({M, 1, 1, 1, 1, 1, 1}) * valid).expand({M, N, R, L, 1, H, W});
    return torch::cat({y, x, lr.unsqueeze(4), li.unsqueeze(4), mask, sig}, 4).reshape({-1, 8, H, W});
}

torch::Tensor likelihood_features(const ModelBatch& b, const torch::Tensor& h_hat)
{
    const auto M = b.m, N = b.n_prg, R = b.n_rx, L = b.n_layers, H = b.height(), W = kSymbolsPerSlot;
    const auto h = h_hat.view({M, N, R, L, 2, H, W});
    const auto x = b.x.unsqueeze(2);   // [M, N, 1, L, 2, H, W]
    const auto [pr, pi] = cmul(h.select(4, 0), h.select(4, 1), x.select(4, 0), x.select(4, 1));
    const auto mask = b.mask;          // [M, N, 1, H, W]
    const auto dr = (b.y.select(3, 0) - pr.sum(3)) * mask;
    const auto di = (b.y.select(3, 1) - pi.sum(3)) * mask;
    const auto dy = torch::stack({dr, di}, 3).unsqueeze(3).expand({M, N, R, L, 2, H, W});
    const auto xs = b.x.unsqueeze(2).expand({M, N, R, L, 2, H, W});
    const auto ms = mask.view({M, N, 1, 1, 1, H, W}).expand({M, N, R, L, 1, H, W});
    return torch::cat({dy, xs, ms}, 4).reshape({-1, 5, H, W});
}

// -- modules ----------------------------------------------------------------------

CoarseNetImpl::CoarseNetImpl(const ModelConfig& cfg)
{
    unet_ = register_module("unet", UNet(cfg.coarse_in_channels, 3, cfg.coarse_width, false));
}

StreamState CoarseNetImpl::forward(const torch::Tensor& features, const torch::Tensor& re_valid)
{
    const auto out = unet_(features) * re_valid;
    return {out.narrow(1, 2, 1), out.narrow(1, 0, 2)};
}

EncoderImpl::EncoderImpl(const ModelConfig& cfg)
{
    fusion = register_module("fusion", UNet(8, 1, cfg.rm_width, false));
    intra = register_module("intra", AttentionBlock(cfg.e_z, cfg.attn_heads));
    inter = register_module("inter", AttentionBlock(cfg.e_z, cfg.attn_heads));
    cross = register_module("cross", AttentionBlock(cfg.e_z, cfg.attn_heads));
    mlp = register_module("mlp", MlpBlock(cfg.e_z));
    pos = register_parameter("pos", torch::randn({cfg.max_tile_rb, cfg.e_z}) * 0.02);
}

torch::Tensor EncoderImpl::forward(const ModelBatch& b, const torch::Tensor& z, const torch::Tensor& h_hat,
                                   const torch::Tensor& feedback)
{
    const auto M = b.m, N = b.n_prg, S = b.n_streams(), T = b.tile_rb, H = b.height();
    const auto E = static_cast<std::int64_t>(kEmbedDim);
    if (T > pos.size(0))
        throw std::invalid_argument("encoder: PRG tile of " + std::to_string(T) + " RBs exceeds the positional table");
    const auto re_valid = stream_re_valid(b);
    const auto rb_valid = stream_rb_valid(b);                // [B, T]
    const auto rb_f = rb_valid.to(z.scalar_type()).unsqueeze(-1);

    const auto fused = fusion(torch::cat({z, h_hat, feedback}, 1)) * re_valid;
    auto e = fused.reshape({-1, T, E});                       // one token per RB

    // Intra-PRG: tokens are the RBs of one PRG tile.
    e = intra(e, rb_valid, pos.narrow(0, 0, T).unsqueeze(0)) * rb_f;

    // Inter-PRG: mean over valid RBs, attention across PRGs, broadcast back.
    const auto counts = rb_f.sum(1);                          // [B, 1]
    const auto pooled = (e.sum(1) / counts).view({M, N, S, E}).permute({0, 2, 1, 3}).reshape({M * S, N, E});
    const auto mixed = inter(pooled) - pooled;
    e = (e + mixed.view({M, S, N, E}).permute({0, 2, 1, 3}).reshape({-1, 1, E})) * rb_f;

    // Cross-MIMO: tokens are the streams sharing one RB.
    auto c = e.view({M, N, S, T, E}).permute({0, 1, 3, 2, 4}).reshape({M * N * T, S, E});
    c = cross(c);
    e = c.view({M, N, T, S, E}).permute({0, 1, 3, 2, 4}).reshape({-1, T, E}) * rb_f;

    e = mlp(e) * rb_f;
    return z + e.reshape({-1, 1, H, kSymbolsPerSlot});
}

DecoderImpl::DecoderImpl(const ModelConfig& cfg)
{
    unet_ = register_module("unet", UNet(cfg.dec_in_channels, 2, cfg.rm_width, true));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& z, const torch::Tensor& h_hat, const torch::Tensor& feedback)
{
    return h_hat + unet_(torch::cat({z, h_hat, feedback}, 1));
}

RefinementModuleImpl::RefinementModuleImpl(const ModelConfig& cfg)
{
    encoder = register_module("encoder", Encoder(cfg));
    decoder = register_module("decoder", Decoder(cfg));
}

StreamState RefinementModuleImpl::forward(const ModelBatch& b, const StreamState& state)
{
    const auto re_valid = stream_re_valid(b);
    const auto fb = likelihood_features(b, state.h_hat);
    const auto z = encoder(b, state.z, state.h_hat, fb) * re_valid;
    const auto h = decoder(z, state.h_hat, fb) * re_valid;
    return {z, h};
}

ReQuestNetImpl::ReQuestNetImpl(const ModelConfig& cfg) : cfg_(cfg)
{
    cfg.validate();
    coarse = register_module("coarse", CoarseNet(cfg));
    modules = register_module("refine", torch::nn::ModuleList());
    for (int t = 0; t < cfg.t_steps; ++t)
        modules->push_back(RefinementModule(cfg));
}

ForwardResult ReQuestNetImpl::forward(const ModelBatch& b)
{
    const auto re_valid = stream_re_valid(b);
    ForwardResult r;
    StreamState s = coarse(coarse_features(b), re_valid);
    r.h_hat.push_back(s.h_hat);
    r.z.push_back(s.z);
    for (const auto& m : *modules) {
        s = m->as<RefinementModuleImpl>()->forward(b, s);
        r.h_hat.push_back(s.h_hat);
        r.z.push_back(s.z);
    }
    return r;
}

ReQuestNet make_model(const ModelConfig& cfg, torch::Dtype dtype)
{
    cfg.validate();
    torch::manual_seed(derive_seed(cfg.seed, SeedStream::init));
    ReQuestNet net(cfg);
    net->to(dtype);
    return net;
}

std::int64_t parameter_count(const torch::nn::Module& m)
{
    std::int64_t n = 0;
    for (const auto& p : m.parameters())
        n += p.numel();
    return n;
}

std::vector<ChannelGrid> requestnet_forward(ReQuestNet& net, const Observation& obs)
{
    torch::NoGradGuard ng;
    const auto dtype = net->parameters().front().scalar_type();
    const auto batch = pack_batch(std::span<const Observation>(&obs, 1), dtype);
    const auto r = net->forward(batch);
    std::vector<ChannelGrid> out;
    for (const auto& h : r.h_hat)
        out.push_back(unpack_estimate(h, batch, obs.layout, 0));
    return out;
}

Estimator requestnet_estimator(ReQuestNet net)
{
    return [net](const Observation& obs) mutable {
        net->eval();
        auto seq = requestnet_forward(net, obs);
        return EstimateGrid{std::move(seq.back()), "requestnet"};
    };
}

// -- checkpoints ------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, ReQuestNet& net, const CheckpointMeta& meta,
                     torch::optim::Optimizer* optimizer)
{
    torch::serialize::OutputArchive ar;
    for (const auto& p : net->named_parameters())
        ar.write("param/" + p.key(), p.value().detach());
    ar.write("meta/config", c10::IValue(meta.model.to_json()));
    ar.write("meta/step", c10::IValue(meta.step));
    ar.write("meta/manifest_hash", c10::IValue(meta.manifest_hash));
    ar.write("meta/extra", c10::IValue(meta.extra_json));
    if (optimizer) {
        torch::serialize::OutputArchive opt;
        optimizer->save(opt);
        ar.write("optimizer", opt);
    }
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    ar.save_to(tmp);
    std::filesystem::rename(tmp, path);
}

namespace {

CheckpointMeta read_meta(torch::serialize::InputArchive& ar)
{
    CheckpointMeta m;
    c10::IValue v;
    ar.read("meta/config", v);
    m.model = ModelConfig::from_json(v.toStringRef());
    ar.read("meta/step", v);
    m.step = v.toInt();
    ar.read("meta/manifest_hash", v);
    m.manifest_hash = v.toStringRef();
    ar.read("meta/extra", v);
    m.extra_json = v.toStringRef();
    return m;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw std::runtime_error("checkpoint not found: " + path.string());
    torch::serialize::InputArchive ar;
    ar.load_from(path.string());
    return read_meta(ar);
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, ReQuestNet& net, torch::optim::Optimizer* optimizer)
{
    if (!std::filesystem::exists(path))
        throw std::runtime_error("checkpoint not found: " + path.string());
    torch::serialize::InputArchive ar;
    ar.load_from(path.string());
    const CheckpointMeta meta = read_meta(ar);
    std::size_t stored = 0;
    for (const auto& k : ar.keys())
        stored += k.rfind("param/", 0) == 0;
    const auto params = net->named_parameters();
    if (stored != params.size())
        throw std::runtime_error("checkpoint " + path.string() + " holds " + std::to_string(stored) +
                                 " parameter tensors, model expects " + std::to_string(params.size()));
    torch::NoGradGuard ng;
    for (const auto& p : params) {
        torch::Tensor t;
        if (!ar.try_read("param/" + p.key(), t))
            throw std::runtime_error("checkpoint " + path.string() + " lacks parameter " + p.key());
        if (t.sizes() != p.value().sizes())
            throw std::runtime_error("checkpoint parameter " + p.key() + " has shape " + c10::str(t.sizes()) +
                                     ", model expects " + c10::str(p.value().sizes()));
        p.value().copy_(t);
    }
    if (optimizer) {
        torch::serialize::InputArchive opt;
        if (!ar.try_read("optimizer", opt))
            throw std::runtime_error("checkpoint " + path.string() + " has no optimizer state");
        optimizer->load(opt);
    }
    return meta;
}

ReQuestNet load_model(const std::filesystem::path& path, torch::Dtype dtype)
{
    const auto meta = read_checkpoint_meta(path);
    ReQuestNet net = make_model(meta.model, dtype);
    load_checkpoint(path, net);
    return net;
}

}  // namespace reqlab
