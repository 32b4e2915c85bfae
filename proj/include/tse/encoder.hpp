#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tse/common.hpp"
#include "tse/tensor.hpp"

namespace tse {

// Architecture hyperparameters. Defaults are the reference configuration
// for classification experiments. leaky_slope is kept as binary32 so the
// on-disk config block (seven 32-bit fields) round-trips losslessly.
struct EncoderConfig {
    std::uint32_t in_channels = 1;
    std::uint32_t channels = 40;
    std::uint32_t depth = 10;
    std::uint32_t pre_pool_channels = 320;
    std::uint32_t repr_dim = 160;
    std::uint32_t kernel_size = 3;
    float leaky_slope = 0.01f;

    void validate() const;
};

// One residual unit: two weight-normalized dilated causal convolutions,
// each followed by a leaky ReLU, plus a skip connection (identity, or a
// plain 1x1 convolution when the channel count changes).
struct ResidualBlock {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t dilation = 1;
    ParamTensor conv1_v, conv1_g, conv1_bias;
    ParamTensor conv2_v, conv2_g, conv2_bias;
    bool has_projection = false;
    ParamTensor proj_w, proj_bias;  // present iff in_channels != out_channels

    ConvSpec conv1_spec(std::size_t kernel) const {
        return {in_channels, out_channels, kernel, dilation};
    }
    ConvSpec conv2_spec(std::size_t kernel) const {
        return {out_channels, out_channels, kernel, dilation};
    }
};

struct EncoderParams {
    EncoderConfig config;
    std::vector<ResidualBlock> blocks;  // depth blocks plus one widening block
    ParamTensor linear_w;               // (repr_dim, pre_pool_channels)
    ParamTensor linear_b;               // (repr_dim)

    // All trainable tensors in the deterministic serialization order.
    std::vector<ParamTensor*> parameters();
    std::vector<const ParamTensor*> parameters() const;
    std::size_t parameter_count() const;
    void zero_grads();
};

// Deterministic initialization: conv direction tensors uniform in
// +-1/sqrt(fan_in), gains set to the per-row norm, biases zero.
EncoderParams build_encoder(const EncoderConfig& config, std::uint64_t seed);

// Number of input steps that can influence one output step of the causal
// stack: 1 + sum_{i=0}^{depth} 2*(kernel_size-1)*2^i.
std::uint64_t receptive_field(const EncoderConfig& config);

// Forward/backward scratch space. Holds the per-block inputs of the last
// forward pass (block internals are recomputed during backward), the
// pooling argmax and the pooled vector.
struct EncoderCache {
    std::vector<Tensor3> block_inputs;
    Tensor3 prepool;
    std::vector<std::size_t> argmax;
    Matrix pooled;
    std::vector<std::size_t> valid_lengths;
    bool primed = false;
};

// Gradient destinations parallel to EncoderParams::parameters(). By default
// a sink points at the ParamTensor grad buffers themselves; training uses
// detached flat buffers so batches can accumulate independently.
struct GradSink {
    std::vector<double*> slot;

    static GradSink into_params(EncoderParams& params);
};

// Detached gradient storage matching one EncoderParams layout.
class GradBuffer {
public:
    GradBuffer() = default;
    explicit GradBuffer(const EncoderParams& params);
    GradSink sink();
    void clear();
    void add_to(GradSink dst) const;          // dst += this
    std::span<const double> flat() const { return data_; }
    std::span<double> flat() { return data_; }

private:
    std::vector<double> data_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> sizes_;
};

// Encode a single series (channels x length). Returns a repr_dim vector.
std::vector<double> encode(const EncoderParams& params, const double* series,
                           std::size_t channels, std::size_t length);

// Forward pass keeping the cache for a later backward. The input tensor may
// be padded past the valid lengths; outputs only depend on the valid prefix.
Matrix encode_forward(const EncoderParams& params, const Tensor3& input,
                      std::span<const std::size_t> valid_lengths, EncoderCache& cache);

// Adjoint of encode_forward: repr_grad is (batch x repr_dim). Accumulates
// into sink. Throws std::logic_error if the cache is not primed.
void encode_backward(const EncoderParams& params, EncoderCache& cache, const Matrix& repr_grad,
                     GradSink sink);

// Encode a list of series with heterogeneous lengths; row i equals
// encode(series i) exactly. threads caps the worker count.
Matrix encode_batch(const EncoderParams& params,
                    const std::vector<const double*>& series,
                    const std::vector<std::size_t>& lengths, std::size_t channels,
                    int threads = 1);

// ---------------------------------------------------------------------------
// Persistence. Format: magic "TSE1", u32 version = 1, the seven config
// fields as u32 little-endian (leaky_slope bit-cast from binary32), then all
// parameter tensors as raw IEEE-754 binary64 little-endian in the
// parameters() order.
// ---------------------------------------------------------------------------

class model_io_error : public std::runtime_error {
public:
    explicit model_io_error(const std::string& msg) : std::runtime_error(msg) {}
};
class model_magic_error : public model_io_error {
public:
    explicit model_magic_error(const std::string& msg) : model_io_error(msg) {}
};
class model_version_error : public model_io_error {
public:
    explicit model_version_error(const std::string& msg) : model_io_error(msg) {}
};
class model_truncated_error : public model_io_error {
public:
    explicit model_truncated_error(const std::string& msg) : model_io_error(msg) {}
};

void save_model(const EncoderParams& params, const std::string& path);
EncoderParams load_model(const std::string& path);

}  // namespace tse
