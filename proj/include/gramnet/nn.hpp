#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gramnet/tensor.hpp"

namespace gramnet::nn {

// ---------------------------------------------------------------------------
// Parameter blocks
// ---------------------------------------------------------------------------

// kernel dims: [k_h, k_w, C_in, C_out], flat index ((kh*KW + kw)*Cin + ci)*Cout + co.
template <class T>
struct ConvParamsT {
    Array<T> kernel;
    Array<T> bias;
    int stride = 1;
    int pad = 0;

    ConvParamsT() = default;
    ConvParamsT(int kh, int kw, int cin, int cout, int stride_ = 1, int pad_ = 0)
        : kernel({kh, kw, cin, cout}), bias({cout}), stride(stride_), pad(pad_) {}

    int kh() const { return kernel.dims[0]; }
    int kw() const { return kernel.dims[1]; }
    int cin() const { return kernel.dims[2]; }
    int cout() const { return kernel.dims[3]; }
};

// Per-channel scale and shift; stands in for batch normalization so that
// gradient checks stay exact.
template <class T>
struct AffineParamsT {
    Array<T> scale;
    Array<T> shift;

    AffineParamsT() = default;
    explicit AffineParamsT(int channels) : scale({channels}), shift({channels}) {}
};

// y = relu(skip(x) + conv2(relu(conv1(x)))); skip is identity when channel
// counts match, else a 1x1 projection.
template <class T>
struct ResUnitParamsT {
    ConvParamsT<T> conv1;
    ConvParamsT<T> conv2;
    bool has_proj = false;
    ConvParamsT<T> proj;
};

// Contextual attention block. All five convolutions preserve spatial dims.
// Attention logits channel layout: o * head_channels + h, where o indexes
// the k*k neighborhood row-major and h the head. Softmax runs over o per
// position and head; channel c of the value map follows head c*Ch/C.
template <class T>
struct CotParamsT {
    ConvParamsT<T> key_embed;    // 3x3, C -> C
    ConvParamsT<T> value_embed;  // 1x1, C -> C
    ConvParamsT<T> attn_reduce;  // 1x1, 2C -> max(1, 2C/r)
    ConvParamsT<T> attn_expand;  // 1x1, -> k*k*Ch
    ConvParamsT<T> fuse;         // 1x1, 2C -> C
    int k = 3;                   // odd neighborhood side
    int head_channels = 1;
};

// Four parallel branches, channel-concatenated:
//   1x1 | 1x1 -> 3x3 | 1x1 -> 3x3 -> 3x3 | avgpool3 -> 1x1
template <class T>
struct InceptionParamsT {
    ConvParamsT<T> b1;
    ConvParamsT<T> b2a, b2b;
    ConvParamsT<T> b3a, b3b, b3c;
    ConvParamsT<T> b4;
};

// ---------------------------------------------------------------------------
// Model configuration
// ---------------------------------------------------------------------------

struct ModelConfig {
    int height = 64, width = 64, in_channels = 1;
    int stem_channels = 16;
    int num_res_units = 2;
    int num_cot_layers = 1;
    int local_width = 0;   // residual-path channel width; 0 = stem_channels
    std::vector<int> inception_widths{8, 8, 8, 8};
    int mlp_hidden = 64;
    int num_classes = 5;
    int cot_kernel = 3;
    int cot_reduction = 4;
    int cot_head_channels = 0; // 0 = max(1, stem_channels / 4)
    std::uint64_t seed = 1;

    int resolved_local_width() const { return local_width > 0 ? local_width : stem_channels; }
    int resolved_head_channels() const {
        if (cot_head_channels > 0) return cot_head_channels;
        return stem_channels / 4 > 0 ? stem_channels / 4 : 1;
    }
    // Channels entering the inception block.
    int fused_channels() const;
    int inception_out_channels() const;

    void validate() const; // throws ConfigError

    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);
};

// ---------------------------------------------------------------------------
// Kernels. Backward kernels ACCUMULATE into their output gradients; callers
// zero them. Every kernel assigns each output element to exactly one loop
// iteration with a fixed inner order, so results are bit-identical at any
// OpenMP thread count.
// ---------------------------------------------------------------------------

template <class T>
void conv2d_forward(const TensorT<T>& in, const ConvParamsT<T>& p, TensorT<T>& out);

template <class T>
void conv2d_backward(const TensorT<T>& in, const ConvParamsT<T>& p, const TensorT<T>& dout,
                     TensorT<T>* din, ConvParamsT<T>* grads);

template <class T>
void relu_forward(const TensorT<T>& in, TensorT<T>& out);

template <class T>
void relu_backward(const TensorT<T>& pre, const TensorT<T>& dout, TensorT<T>& din);

// 3x3 average pool, stride 1, zero padding 1; divisor fixed at 9 so border
// averages include the padding.
template <class T>
void avg_pool3_forward(const TensorT<T>& in, TensorT<T>& out);

template <class T>
void avg_pool3_backward(const TensorT<T>& dout, TensorT<T>& din);

template <class T>
void channel_affine_forward(const TensorT<T>& in, const AffineParamsT<T>& p, TensorT<T>& out);

template <class T>
void channel_affine_backward(const TensorT<T>& in, const AffineParamsT<T>& p,
                             const TensorT<T>& dout, TensorT<T>& din, AffineParamsT<T>& grads);

template <class T>
void concat_channels(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& out);

template <class T>
void concat_channels_backward(const TensorT<T>& dout, TensorT<T>& da, TensorT<T>& db);

// (B,H,W,C) -> (B,1,1,C) mean over spatial positions.
template <class T>
void global_avg_pool_forward(const TensorT<T>& in, TensorT<T>& out);

template <class T>
void global_avg_pool_backward(const TensorT<T>& dout, TensorT<T>& din);

// Max-subtracted softmax; loss = -log p[label]; grad = p - onehot(label).
template <class T>
T softmax_cross_entropy(std::span<const T> logits, int label, std::span<T> grad_logits);

// ---------------------------------------------------------------------------
// Composite layers with explicit caches
// ---------------------------------------------------------------------------

template <class T>
struct ResUnitCacheT {
    TensorT<T> input;
    TensorT<T> a1;      // conv1 output (pre-relu)
    TensorT<T> t;       // relu(a1)
    TensorT<T> sum_pre; // conv2(t) + skip (pre-relu)
};

template <class T>
TensorT<T> residual_unit(const TensorT<T>& x, const ResUnitParamsT<T>& p, ResUnitCacheT<T>& cache);

template <class T>
void residual_unit_backward(const ResUnitParamsT<T>& p, const ResUnitCacheT<T>& cache,
                            const TensorT<T>& dy, TensorT<T>& dx, ResUnitParamsT<T>& grads);

template <class T>
struct CotCacheT {
    TensorT<T> input;
    TensorT<T> stat;    // key embedding output
    TensorT<T> qk;      // concat(stat, input)
    TensorT<T> a1_pre;  // attn_reduce output
    TensorT<T> a1;      // relu
    TensorT<T> weights; // post-softmax attention, (1,H,W,k*k*Ch)
    TensorT<T> value;
    TensorT<T> dynamic;
    TensorT<T> cat2;    // concat(stat, dynamic)
};

template <class T>
TensorT<T> cot_forward(const TensorT<T>& x, const CotParamsT<T>& p, CotCacheT<T>& cache);

template <class T>
TensorT<T> cot_forward(const TensorT<T>& x, const CotParamsT<T>& p);

template <class T>
void cot_backward(const CotParamsT<T>& p, const CotCacheT<T>& cache, const TensorT<T>& dy,
                  TensorT<T>& dx, CotParamsT<T>& grads);

template <class T>
struct InceptionCacheT {
    TensorT<T> input;
    TensorT<T> b1_pre, b1;
    TensorT<T> b2a_pre, b2a, b2b_pre, b2b;
    TensorT<T> b3a_pre, b3a, b3b_pre, b3b, b3c_pre, b3c;
    TensorT<T> pool, b4_pre, b4;
};

template <class T>
TensorT<T> inception_block(const TensorT<T>& x, const InceptionParamsT<T>& p, InceptionCacheT<T>& cache);

template <class T>
void inception_block_backward(const InceptionParamsT<T>& p, const InceptionCacheT<T>& cache,
                              const TensorT<T>& dy, TensorT<T>& dx, InceptionParamsT<T>& grads);

template <class T>
struct MlpCacheT {
    TensorT<T> input;
    TensorT<T> pooled;  // (B,1,1,C)
    TensorT<T> h1_pre, h1;
    TensorT<T> logits;  // (B,1,1,K)
};

// Global average pool, then two 1x1 dense stages with relu between.
template <class T>
TensorT<T> mlp_head(const TensorT<T>& x, const ConvParamsT<T>& fc1, const ConvParamsT<T>& fc2,
                    MlpCacheT<T>& cache);

template <class T>
void mlp_head_backward(const ConvParamsT<T>& fc1, const ConvParamsT<T>& fc2,
                       const MlpCacheT<T>& cache, const TensorT<T>& dlogits, TensorT<T>& dx,
                       ConvParamsT<T>& fc1_grads, ConvParamsT<T>& fc2_grads);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

template <class T>
struct ModelT {
    ModelConfig cfg;
    ConvParamsT<T> stem;
    AffineParamsT<T> stem_affine;
    std::vector<ResUnitParamsT<T>> res_units;
    std::vector<CotParamsT<T>> cot_layers;
    InceptionParamsT<T> inception;
    ConvParamsT<T> fc1, fc2;

    explicit ModelT(const ModelConfig& cfg); // fan-in-scaled uniform init from cfg.seed

    // Same structure and shapes, all values zero: the gradient container.
    ModelT like_zeros() const;

    // Declaration order: stem, stem_affine, residual units, cot layers,
    // inception branches, fc1, fc2. Checkpoints follow this order.
    std::vector<std::pair<std::string, Array<T>*>> named_params();
    std::vector<std::pair<std::string, const Array<T>*>> named_params() const;
    std::size_t parameter_count() const;
};

template <class T>
struct ItemCacheT {
    TensorT<T> input;
    TensorT<T> stem_pre; // stem conv output
    TensorT<T> stem_aff; // after channel affine (pre-relu)
    TensorT<T> x0;       // relu
    std::vector<ResUnitCacheT<T>> rus;
    TensorT<T> local_out;
    std::vector<CotCacheT<T>> cots;
    TensorT<T> global_out;
    TensorT<T> paths; // concat(local, global), or the single live path
    InceptionCacheT<T> incep;
    TensorT<T> features;
    MlpCacheT<T> mlp;
};

// Single-item forward with cached activations; x is (1,H,W,C_in).
template <class T>
std::vector<T> forward_item(const ModelT<T>& m, const TensorT<T>& x, ItemCacheT<T>& cache);

// Accumulates parameter gradients for one item given dlogits.
template <class T>
void backward_item(const ModelT<T>& m, const ItemCacheT<T>& cache, std::span<const T> dlogits,
                   ModelT<T>& grads);

// Batch logits, row-major (B x num_classes). Deterministic.
template <class T>
std::vector<T> forward(const ModelT<T>& m, const TensorT<T>& batch);

struct StepStats {
    double loss_sum = 0; // summed over items, not averaged
    int correct = 0;
    int count = 0;
};

// Sum-of-items loss and gradients (grads zeroed first, then accumulated in
// batch order). A duplicated item therefore contributes exactly twice.
template <class T>
StepStats forward_backward(const ModelT<T>& m, const TensorT<T>& batch,
                           const std::vector<int>& labels, ModelT<T>& grads);

// ---------------------------------------------------------------------------
// Checkpoints: magic, version, config text block, then parameter arrays in
// declaration order as 64-bit little-endian reals with shape headers.
// ---------------------------------------------------------------------------

void save_checkpoint(const ModelT<float>& m, const std::filesystem::path& path);
ModelT<float> load_checkpoint(const std::filesystem::path& path);

} // namespace gramnet::nn
