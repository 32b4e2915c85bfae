#include "tse/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "tse/nn.hpp"

namespace tse {

void EncoderConfig::validate() const {
    if (in_channels < 1 || channels < 1 || pre_pool_channels < 1 || repr_dim < 1 ||
        kernel_size < 1)
        throw std::invalid_argument("EncoderConfig: all counts must be >= 1");
    if (!(leaky_slope > 0.0f && leaky_slope < 1.0f))
        throw std::invalid_argument("EncoderConfig: leaky_slope must lie in (0,1)");
    if (depth > 40) throw std::invalid_argument("EncoderConfig: depth too large");
}

std::vector<ParamTensor*> EncoderParams::parameters() {
    std::vector<ParamTensor*> out;
    for (auto& b : blocks) {
        out.push_back(&b.conv1_v);
        out.push_back(&b.conv1_g);
        out.push_back(&b.conv1_bias);
        out.push_back(&b.conv2_v);
        out.push_back(&b.conv2_g);
        out.push_back(&b.conv2_bias);
        if (b.has_projection) {
            out.push_back(&b.proj_w);
            out.push_back(&b.proj_bias);
        }
    }
    out.push_back(&linear_w);
    out.push_back(&linear_b);
    return out;
}

std::vector<const ParamTensor*> EncoderParams::parameters() const {
    auto mut = const_cast<EncoderParams*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::size_t EncoderParams::parameter_count() const {
    std::size_t n = 0;
    for (const ParamTensor* p : parameters()) n += p->size();
    return n;
}

void EncoderParams::zero_grads() {
    for (ParamTensor* p : parameters()) p->zero_grad();
}

namespace {

void init_uniform(ParamTensor& t, double bound, Rng& rng) {
    for (double& x : t.value) x = rng.uniform(-bound, bound);
}

// Gain starts at the direction-row norm so the effective weights equal v.
void init_gain_to_norm(const ParamTensor& v, ParamTensor& g, std::size_t row) {
    for (std::size_t o = 0; o < g.size(); ++o) {
        double s = 0.0;
        const double* vr = v.value.data() + o * row;
        for (std::size_t i = 0; i < row; ++i) s += vr[i] * vr[i];
        g.value[o] = std::sqrt(s);
    }
}

ResidualBlock make_block(std::size_t in_ch, std::size_t out_ch, std::size_t dilation,
                         std::size_t kernel, Rng& rng) {
    ResidualBlock b;
    b.in_channels = in_ch;
    b.out_channels = out_ch;
    b.dilation = dilation;
    const std::size_t row1 = in_ch * kernel;
    const std::size_t row2 = out_ch * kernel;
    b.conv1_v = ParamTensor({out_ch, in_ch, kernel});
    b.conv1_g = ParamTensor({out_ch});
    b.conv1_bias = ParamTensor({out_ch});
    b.conv2_v = ParamTensor({out_ch, out_ch, kernel});
    b.conv2_g = ParamTensor({out_ch});
    b.conv2_bias = ParamTensor({out_ch});
    init_uniform(b.conv1_v, 1.0 / std::sqrt(static_cast<double>(row1)), rng);
    init_gain_to_norm(b.conv1_v, b.conv1_g, row1);
    init_uniform(b.conv2_v, 1.0 / std::sqrt(static_cast<double>(row2)), rng);
    init_gain_to_norm(b.conv2_v, b.conv2_g, row2);
    b.has_projection = in_ch != out_ch;
    if (b.has_projection) {
        b.proj_w = ParamTensor({out_ch, in_ch, 1});
        b.proj_bias = ParamTensor({out_ch});
        init_uniform(b.proj_w, 1.0 / std::sqrt(static_cast<double>(in_ch)), rng);
    }
    return b;
}

}  // namespace

EncoderParams build_encoder(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    EncoderParams p;
    p.config = config;
    const std::size_t k = config.kernel_size;
    for (std::uint32_t i = 0; i < config.depth; ++i) {
        const std::size_t in_ch = i == 0 ? config.in_channels : config.channels;
        p.blocks.push_back(make_block(in_ch, config.channels, std::size_t{1} << i, k, rng));
    }
    const std::size_t wide_in = config.depth == 0 ? config.in_channels : config.channels;
    p.blocks.push_back(
        make_block(wide_in, config.pre_pool_channels, std::size_t{1} << config.depth, k, rng));
    p.linear_w = ParamTensor({config.repr_dim, config.pre_pool_channels});
    p.linear_b = ParamTensor({config.repr_dim});
    init_uniform(p.linear_w, 1.0 / std::sqrt(static_cast<double>(config.pre_pool_channels)), rng);
    return p;
}

std::uint64_t receptive_field(const EncoderConfig& config) {
    config.validate();
    std::uint64_t field = 1;
    for (std::uint32_t i = 0; i <= config.depth; ++i)
        field += 2ULL * (config.kernel_size - 1) * (std::uint64_t{1} << i);
    return field;
}

GradSink GradSink::into_params(EncoderParams& params) {
    GradSink s;
    for (ParamTensor* p : params.parameters()) s.slot.push_back(p->grad.data());
    return s;
}

GradBuffer::GradBuffer(const EncoderParams& params) {
    std::size_t total = 0;
    for (const ParamTensor* p : params.parameters()) {
        offsets_.push_back(total);
        sizes_.push_back(p->size());
        total += p->size();
    }
    data_.assign(total, 0.0);
}

GradSink GradBuffer::sink() {
    GradSink s;
    for (std::size_t i = 0; i < offsets_.size(); ++i) s.slot.push_back(data_.data() + offsets_[i]);
    return s;
}

void GradBuffer::clear() { std::fill(data_.begin(), data_.end(), 0.0); }

void GradBuffer::add_to(GradSink dst) const {
    for (std::size_t i = 0; i < offsets_.size(); ++i) {
        double* out = dst.slot[i];
        const double* in = data_.data() + offsets_[i];
        for (std::size_t j = 0; j < sizes_[i]; ++j) out[j] += in[j];
    }
}

namespace {

// Forward through one block. Keeps only what the caller asks for.
void block_forward(const ResidualBlock& b, std::size_t kernel, double slope, const Tensor3& x,
                   Tensor3& out, std::vector<double>& w_scratch) {
    Tensor3 h1, a1, h2;
    nn::weight_norm_apply(b.conv1_v.value, b.conv1_g.value, b.out_channels,
                          b.in_channels * kernel, w_scratch);
    nn::causal_conv1d_forward(x, w_scratch, b.conv1_bias.value, b.conv1_spec(kernel), h1);
    nn::leaky_relu_forward(h1, slope, a1);
    nn::weight_norm_apply(b.conv2_v.value, b.conv2_g.value, b.out_channels,
                          b.out_channels * kernel, w_scratch);
    nn::causal_conv1d_forward(a1, w_scratch, b.conv2_bias.value, b.conv2_spec(kernel), h2);
    nn::leaky_relu_forward(h2, slope, out);
    // Residual skip.
    if (b.has_projection) {
        Tensor3 res;
        ConvSpec proj_spec{b.in_channels, b.out_channels, 1, 1};
        nn::causal_conv1d_forward(x, b.proj_w.value, b.proj_bias.value, proj_spec, res);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += res.data[i];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += x.data[i];
    }
}

}  // namespace

Matrix encode_forward(const EncoderParams& params, const Tensor3& input,
                      std::span<const std::size_t> valid_lengths, EncoderCache& cache) {
    const EncoderConfig& cfg = params.config;
    if (input.channels != cfg.in_channels)
        throw std::invalid_argument("encode: series has " + std::to_string(input.channels) +
                                    " channels, encoder expects " +
                                    std::to_string(cfg.in_channels));
    if (input.time == 0) throw std::invalid_argument("encode: empty series");
    for (std::size_t L : valid_lengths)
        if (L == 0) throw std::invalid_argument("encode: zero valid length");

    cache.block_inputs.assign(params.blocks.size(), Tensor3());
    std::vector<double> w_scratch;
    const double slope = static_cast<double>(cfg.leaky_slope);
    Tensor3 x = input;
    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        cache.block_inputs[i] = std::move(x);
        Tensor3 y;
        block_forward(params.blocks[i], cfg.kernel_size, slope, cache.block_inputs[i], y,
                      w_scratch);
        x = std::move(y);
    }
    cache.prepool = std::move(x);
    cache.valid_lengths.assign(valid_lengths.begin(), valid_lengths.end());
    nn::global_max_pool_forward(cache.prepool, cache.valid_lengths, cache.pooled, cache.argmax);
    Matrix repr;
    nn::linear_forward(cache.pooled, params.linear_w.value, params.linear_b.value, cfg.repr_dim,
                       repr);
    cache.primed = true;
    return repr;
}

void encode_backward(const EncoderParams& params, EncoderCache& cache, const Matrix& repr_grad,
                     GradSink sink) {
    if (!cache.primed)
        throw std::logic_error("encode_backward: no matching forward pass cached");
    const EncoderConfig& cfg = params.config;
    const double slope = static_cast<double>(cfg.leaky_slope);
    const std::size_t k = cfg.kernel_size;

    // Slot indices follow EncoderParams::parameters() order.
    std::vector<std::size_t> block_slot(params.blocks.size());
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        block_slot[i] = cursor;
        cursor += params.blocks[i].has_projection ? 8 : 6;
    }
    const std::size_t linw_slot = cursor;
    const std::size_t linb_slot = cursor + 1;

    // Linear layer.
    Matrix grad_pooled(cache.pooled.rows, cache.pooled.cols);
    nn::linear_backward(cache.pooled, params.linear_w.value, cfg.repr_dim, repr_grad, &grad_pooled,
                        sink.slot[linw_slot], sink.slot[linb_slot]);

    // Pooling scatter.
    Tensor3 g(cache.prepool.batch, cache.prepool.channels, cache.prepool.time);
    nn::global_max_pool_backward(grad_pooled, cache.argmax, g);

    std::vector<double> w_scratch, grad_w;
    for (std::size_t bi = params.blocks.size(); bi-- > 0;) {
        const ResidualBlock& b = params.blocks[bi];
        const Tensor3& x = cache.block_inputs[bi];
        const std::size_t s = block_slot[bi];

        // Recompute block internals from the cached input.
        Tensor3 h1, a1, h2;
        nn::weight_norm_apply(b.conv1_v.value, b.conv1_g.value, b.out_channels,
                              b.in_channels * k, w_scratch);
        std::vector<double> w1 = w_scratch;
        nn::causal_conv1d_forward(x, w1, b.conv1_bias.value, b.conv1_spec(k), h1);
        nn::leaky_relu_forward(h1, slope, a1);
        nn::weight_norm_apply(b.conv2_v.value, b.conv2_g.value, b.out_channels,
                              b.out_channels * k, w_scratch);

        // Main path: conv2 then its leaky ReLU.
        Tensor3 grad_h2(h1.batch, b.out_channels, h1.time);
        std::fill(grad_h2.data.begin(), grad_h2.data.end(), 0.0);
        {
            Tensor3 h2_tmp;
            nn::causal_conv1d_forward(a1, w_scratch, b.conv2_bias.value, b.conv2_spec(k), h2_tmp);
            h2 = std::move(h2_tmp);
        }
        nn::leaky_relu_backward(h2, slope, g, grad_h2);

        Tensor3 grad_a1(a1.batch, a1.channels, a1.time);
        grad_w.assign(w_scratch.size(), 0.0);
        nn::causal_conv1d_backward(a1, w_scratch, b.conv2_spec(k), grad_h2, &grad_a1,
                                   grad_w.data(), sink.slot[s + 5]);
        nn::weight_norm_backward(b.conv2_v.value, b.conv2_g.value, grad_w, b.out_channels,
                                 b.out_channels * k, sink.slot[s + 3], sink.slot[s + 4]);

        Tensor3 grad_h1(h1.batch, h1.channels, h1.time);
        std::fill(grad_h1.data.begin(), grad_h1.data.end(), 0.0);
        nn::leaky_relu_backward(h1, slope, grad_a1, grad_h1);

        const bool need_input_grad = bi > 0;
        Tensor3 grad_x;
        if (need_input_grad) grad_x = Tensor3(x.batch, x.channels, x.time);
        grad_w.assign(w1.size(), 0.0);
        nn::causal_conv1d_backward(x, w1, b.conv1_spec(k), grad_h1,
                                   need_input_grad ? &grad_x : nullptr, grad_w.data(),
                                   sink.slot[s + 2]);
        nn::weight_norm_backward(b.conv1_v.value, b.conv1_g.value, grad_w, b.out_channels,
                                 b.in_channels * k, sink.slot[s + 0], sink.slot[s + 1]);

        // Residual skip.
        if (b.has_projection) {
            ConvSpec proj_spec{b.in_channels, b.out_channels, 1, 1};
            nn::causal_conv1d_backward(x, b.proj_w.value, proj_spec, g,
                                       need_input_grad ? &grad_x : nullptr, sink.slot[s + 6],
                                       sink.slot[s + 7]);
        } else if (need_input_grad) {
            for (std::size_t i = 0; i < grad_x.size(); ++i) grad_x.data[i] += g.data[i];
        }
        g = std::move(grad_x);
    }
    cache.primed = false;
}

std::vector<double> encode(const EncoderParams& params, const double* series,
                           std::size_t channels, std::size_t length) {
    if (length == 0) throw std::invalid_argument("encode: empty series");
    Tensor3 input(1, channels, length);
    std::memcpy(input.data.data(), series, channels * length * sizeof(double));
    EncoderCache cache;
    const std::size_t valid[1] = {length};
    Matrix repr = encode_forward(params, input, valid, cache);
    return {repr.data.begin(), repr.data.end()};
}

Matrix encode_batch(const EncoderParams& params, const std::vector<const double*>& series,
                    const std::vector<std::size_t>& lengths, std::size_t channels, int threads) {
    if (series.size() != lengths.size())
        throw std::invalid_argument("encode_batch: series/length count mismatch");
    Matrix out(series.size(), params.config.repr_dim);
    parallel_for(series.size(), threads, [&](std::size_t i) {
        std::vector<double> r = encode(params, series[i], channels, lengths[i]);
        std::copy(r.begin(), r.end(), out.row(i));
    });
    return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'T', 'S', 'E', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char buf[4];
    is.read(reinterpret_cast<char*>(buf), 4);
    if (is.gcount() != 4)
        throw model_truncated_error(std::string("model file truncated while reading ") + what);
    return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
           (static_cast<std::uint32_t>(buf[2]) << 16) | (static_cast<std::uint32_t>(buf[3]) << 24);
}

}  // namespace

void save_model(const EncoderParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw model_io_error("cannot open model file for writing: " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    const EncoderConfig& c = params.config;
    write_u32(os, c.in_channels);
    write_u32(os, c.channels);
    write_u32(os, c.depth);
    write_u32(os, c.pre_pool_channels);
    write_u32(os, c.repr_dim);
    write_u32(os, c.kernel_size);
    write_u32(os, std::bit_cast<std::uint32_t>(c.leaky_slope));
    for (const ParamTensor* p : params.parameters()) {
        static_assert(std::endian::native == std::endian::little,
                      "serializer assumes little-endian doubles");
        os.write(reinterpret_cast<const char*>(p->value.data()),
                 static_cast<std::streamsize>(p->size() * sizeof(double)));
    }
    if (!os) throw model_io_error("short write while saving model: " + path);
}

EncoderParams load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw model_io_error("cannot open model file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4) throw model_truncated_error("model file shorter than its magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw model_magic_error("bad magic bytes in model file: " + path);
    const std::uint32_t version = read_u32(is, "format version");
    if (version != kVersion)
        throw model_version_error("unsupported model format version " + std::to_string(version));
    EncoderConfig c;
    c.in_channels = read_u32(is, "config.in_channels");
    c.channels = read_u32(is, "config.channels");
    c.depth = read_u32(is, "config.depth");
    c.pre_pool_channels = read_u32(is, "config.pre_pool_channels");
    c.repr_dim = read_u32(is, "config.repr_dim");
    c.kernel_size = read_u32(is, "config.kernel_size");
    c.leaky_slope = std::bit_cast<float>(read_u32(is, "config.leaky_slope"));
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw model_io_error(std::string("invalid config in model file: ") + e.what());
    }
    EncoderParams params = build_encoder(c, 0);
    for (ParamTensor* p : params.parameters()) {
        is.read(reinterpret_cast<char*>(p->value.data()),
                static_cast<std::streamsize>(p->size() * sizeof(double)));
        if (static_cast<std::size_t>(is.gcount()) != p->size() * sizeof(double))
            throw model_truncated_error("model file truncated inside parameter payload");
    }
    if (is.peek() != std::char_traits<char>::eof())
        throw model_io_error("model file has trailing bytes past the parameter payload");
    params.zero_grads();
    return params;
}

}  // namespace tse
