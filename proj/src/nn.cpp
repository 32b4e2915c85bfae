#include "tse/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace tse::nn {

namespace {

// Dot product with eight independent accumulators. The combine order is
// fixed, so results do not depend on whether the compiler vectorizes it.
double dot(const double* a, const double* b, std::size_t n) {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t n8 = n & ~static_cast<std::size_t>(7);
    for (std::size_t t = 0; t < n8; t += 8)
        for (int l = 0; l < 8; ++l) acc[l] += a[t + l] * b[t + l];
    double tail = 0.0;
    for (std::size_t t = n8; t < n; ++t) tail += a[t] * b[t];
    return (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) +
           tail;
}

void axpy(double* y, const double* x, double a, std::size_t n) {
    for (std::size_t t = 0; t < n; ++t) y[t] += a * x[t];
}

void check_conv_args(const Tensor3& input, std::size_t wsize, const ConvSpec& spec) {
    spec.validate();
    if (input.channels != spec.in_channels)
        throw std::invalid_argument("causal_conv1d: input channels (" +
                                    std::to_string(input.channels) + ") != spec.in_channels (" +
                                    std::to_string(spec.in_channels) + ")");
    if (wsize != spec.out_channels * spec.in_channels * spec.kernel_size)
        throw std::invalid_argument("causal_conv1d: weight size does not match spec");
    if (input.time == 0) throw std::invalid_argument("causal_conv1d: empty time axis");
}

}  // namespace

void causal_conv1d_forward(const Tensor3& input, std::span<const double> weights,
                           std::span<const double> bias, const ConvSpec& spec, Tensor3& out) {
    check_conv_args(input, weights.size(), spec);
    if (bias.size() != spec.out_channels)
        throw std::invalid_argument("causal_conv1d: bias size does not match out_channels");

    const std::size_t T = input.time;
    const std::size_t k = spec.kernel_size;
    const std::size_t d = spec.dilation;
    const std::size_t max_off = (k - 1) * d;
    out = Tensor3(input.batch, spec.out_channels, T);

    for (std::size_t b = 0; b < input.batch; ++b) {
        for (std::size_t o = 0; o < spec.out_channels; ++o) {
            double* out_row = out.row(b, o);
            std::fill(out_row, out_row + T, bias[o]);
            for (std::size_t c = 0; c < spec.in_channels; ++c) {
                const double* x = input.row(b, c);
                const double* w = weights.data() + (o * spec.in_channels + c) * k;
                // Left-padding region: each tap becomes valid at its own offset.
                const std::size_t head = std::min(max_off, T);
                for (std::size_t j = 0; j < k; ++j) {
                    const std::size_t off = (k - 1 - j) * d;
                    if (off >= head) continue;
                    for (std::size_t t = off; t < head; ++t) out_row[t] += w[j] * x[t - off];
                }
                if (T <= max_off) continue;
                const std::size_t n = T - max_off;
                if (k == 3) {
                    const double w0 = w[0], w1 = w[1], w2 = w[2];
                    const double* x0 = x;          // tap j=0, offset 2d
                    const double* x1 = x + d;      // tap j=1, offset d
                    const double* x2 = x + 2 * d;  // tap j=2, offset 0
                    double* y = out_row + max_off;
                    for (std::size_t t = 0; t < n; ++t)
                        y[t] += w0 * x0[t] + w1 * x1[t] + w2 * x2[t];
                } else {
                    for (std::size_t j = 0; j < k; ++j)
                        axpy(out_row + max_off, x + j * d, w[j], n);
                }
            }
        }
    }
}

void causal_conv1d_backward(const Tensor3& input, std::span<const double> weights,
                            const ConvSpec& spec, const Tensor3& upstream, Tensor3* grad_input,
                            double* grad_weights, double* grad_bias) {
    check_conv_args(input, weights.size(), spec);
    if (upstream.batch != input.batch || upstream.channels != spec.out_channels ||
        upstream.time != input.time)
        throw std::invalid_argument("causal_conv1d_backward: upstream shape mismatch");

    const std::size_t T = input.time;
    const std::size_t k = spec.kernel_size;
    const std::size_t d = spec.dilation;
    const std::size_t max_off = (k - 1) * d;

    if (grad_input && (grad_input->batch != input.batch || grad_input->channels != input.channels ||
                       grad_input->time != T))
        throw std::invalid_argument("causal_conv1d_backward: grad_input shape mismatch");

    for (std::size_t b = 0; b < input.batch; ++b) {
        if (grad_bias) {
            for (std::size_t o = 0; o < spec.out_channels; ++o) {
                const double* up = upstream.row(b, o);
                double s = 0.0;
                for (std::size_t t = 0; t < T; ++t) s += up[t];
                grad_bias[o] += s;
            }
        }
        if (grad_weights) {
            for (std::size_t o = 0; o < spec.out_channels; ++o) {
                const double* up = upstream.row(b, o);
                for (std::size_t c = 0; c < spec.in_channels; ++c) {
                    const double* x = input.row(b, c);
                    double* gw = grad_weights + (o * spec.in_channels + c) * k;
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::size_t off = (k - 1 - j) * d;
                        if (off >= T) continue;
                        gw[j] += dot(up + off, x, T - off);
                    }
                }
            }
        }
        if (grad_input) {
            // grad_x[c,s] += sum_{o,j} w[o,c,j] * up[o, s + (k-1-j)*d]
            for (std::size_t c = 0; c < spec.in_channels; ++c) {
                double* gx = grad_input->row(b, c);
                for (std::size_t o = 0; o < spec.out_channels; ++o) {
                    const double* up = upstream.row(b, o);
                    const double* w = weights.data() + (o * spec.in_channels + c) * k;
                    const std::size_t body = T > max_off ? T - max_off : 0;
                    if (k == 3 && body > 0) {
                        const double w0 = w[0], w1 = w[1], w2 = w[2];
                        const double* u0 = up + 2 * d;
                        const double* u1 = up + d;
                        const double* u2 = up;
                        for (std::size_t s = 0; s < body; ++s)
                            gx[s] += w0 * u0[s] + w1 * u1[s] + w2 * u2[s];
                        for (std::size_t j = 0; j < k; ++j) {
                            const std::size_t off = (k - 1 - j) * d;
                            if (off >= max_off) continue;  // tap fully covered by body
                            for (std::size_t s = body; s + off < T; ++s) gx[s] += w[j] * up[s + off];
                        }
                    } else {
                        for (std::size_t j = 0; j < k; ++j) {
                            const std::size_t off = (k - 1 - j) * d;
                            if (off >= T) continue;
                            axpy(gx, up + off, w[j], T - off);
                        }
                    }
                }
            }
        }
    }
}

void weight_norm_apply(std::span<const double> v, std::span<const double> g, std::size_t out_rows,
                       std::size_t row, std::vector<double>& w_out) {
    if (v.size() != out_rows * row || g.size() != out_rows)
        throw std::invalid_argument("weight_norm_apply: shape mismatch");
    w_out.resize(v.size());
    for (std::size_t o = 0; o < out_rows; ++o) {
        const double* vr = v.data() + o * row;
        const double norm = std::sqrt(dot(vr, vr, row));
        if (norm == 0.0)
            throw std::domain_error("weight_norm_apply: zero-norm direction row " +
                                    std::to_string(o));
        const double scale = g[o] / norm;
        double* wr = w_out.data() + o * row;
        for (std::size_t i = 0; i < row; ++i) wr[i] = scale * vr[i];
    }
}

void weight_norm_backward(std::span<const double> v, std::span<const double> g,
                          std::span<const double> grad_w, std::size_t out_rows, std::size_t row,
                          double* grad_v, double* grad_g) {
    if (v.size() != out_rows * row || g.size() != out_rows || grad_w.size() != v.size())
        throw std::invalid_argument("weight_norm_backward: shape mismatch");
    for (std::size_t o = 0; o < out_rows; ++o) {
        const double* vr = v.data() + o * row;
        const double* gw = grad_w.data() + o * row;
        const double norm2 = dot(vr, vr, row);
        const double norm = std::sqrt(norm2);
        if (norm == 0.0)
            throw std::domain_error("weight_norm_backward: zero-norm direction row " +
                                    std::to_string(o));
        const double gw_dot_v = dot(gw, vr, row);
        if (grad_g) grad_g[o] += gw_dot_v / norm;
        if (grad_v) {
            const double a = g[o] / norm;
            const double b = g[o] * gw_dot_v / (norm2 * norm);
            double* gv = grad_v + o * row;
            for (std::size_t i = 0; i < row; ++i) gv[i] += a * gw[i] - b * vr[i];
        }
    }
}

void leaky_relu_forward(const Tensor3& x, double slope, Tensor3& y) {
    if (slope <= 0.0 || slope >= 1.0)
        throw std::invalid_argument("leaky_relu: slope must be in (0,1)");
    y = Tensor3(x.batch, x.channels, x.time);
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x.data[i];
        y.data[i] = xi >= 0.0 ? xi : slope * xi;
    }
}

void leaky_relu_backward(const Tensor3& pre_activation, double slope, const Tensor3& upstream,
                         Tensor3& grad_accum) {
    if (pre_activation.size() != upstream.size())
        throw std::invalid_argument("leaky_relu_backward: shape mismatch");
    if (grad_accum.size() != upstream.size())
        grad_accum = Tensor3(upstream.batch, upstream.channels, upstream.time);
    const std::size_t n = upstream.size();
    for (std::size_t i = 0; i < n; ++i) {
        // Derivative at exactly zero is the slope.
        const double m = pre_activation.data[i] > 0.0 ? 1.0 : slope;
        grad_accum.data[i] += m * upstream.data[i];
    }
}

void global_max_pool_forward(const Tensor3& input, std::span<const std::size_t> valid_lengths,
                             Matrix& out, std::vector<std::size_t>& argmax) {
    if (valid_lengths.size() != input.batch)
        throw std::invalid_argument("global_max_pool: one valid length per batch item required");
    out = Matrix(input.batch, input.channels);
    argmax.assign(input.batch * input.channels, 0);
    for (std::size_t b = 0; b < input.batch; ++b) {
        const std::size_t L = valid_lengths[b];
        if (L == 0) throw std::invalid_argument("global_max_pool: valid_length must be >= 1");
        if (L > input.time)
            throw std::invalid_argument("global_max_pool: valid_length exceeds time axis");
        for (std::size_t c = 0; c < input.channels; ++c) {
            const double* row = input.row(b, c);
            double best = row[0];
            std::size_t best_t = 0;
            for (std::size_t t = 1; t < L; ++t) {
                if (row[t] > best) {  // strict: ties keep the lowest index
                    best = row[t];
                    best_t = t;
                }
            }
            out.at(b, c) = best;
            argmax[b * input.channels + c] = best_t;
        }
    }
}

void global_max_pool_backward(const Matrix& upstream, std::span<const std::size_t> argmax,
                              Tensor3& grad_accum) {
    if (argmax.size() != upstream.rows * upstream.cols ||
        grad_accum.batch != upstream.rows || grad_accum.channels != upstream.cols)
        throw std::invalid_argument("global_max_pool_backward: shape mismatch");
    for (std::size_t b = 0; b < upstream.rows; ++b)
        for (std::size_t c = 0; c < upstream.cols; ++c)
            grad_accum.row(b, c)[argmax[b * upstream.cols + c]] += upstream.at(b, c);
}

void linear_forward(const Matrix& x, std::span<const double> w, std::span<const double> b,
                    std::size_t out_dim, Matrix& y) {
    const std::size_t in_dim = x.cols;
    if (w.size() != out_dim * in_dim)
        throw std::invalid_argument("linear_forward: weight shape mismatch");
    if (b.size() != out_dim) throw std::invalid_argument("linear_forward: bias shape mismatch");
    y = Matrix(x.rows, out_dim);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const double* xr = x.row(r);
        for (std::size_t i = 0; i < out_dim; ++i)
            y.at(r, i) = b[i] + dot(w.data() + i * in_dim, xr, in_dim);
    }
}

void linear_backward(const Matrix& x, std::span<const double> w, std::size_t out_dim,
                     const Matrix& upstream, Matrix* grad_x, double* grad_w, double* grad_b) {
    const std::size_t in_dim = x.cols;
    if (w.size() != out_dim * in_dim)
        throw std::invalid_argument("linear_backward: weight shape mismatch");
    if (upstream.rows != x.rows || upstream.cols != out_dim)
        throw std::invalid_argument("linear_backward: upstream shape mismatch");
    if (grad_x && (grad_x->rows != x.rows || grad_x->cols != in_dim))
        throw std::invalid_argument("linear_backward: grad_x shape mismatch");
    for (std::size_t r = 0; r < x.rows; ++r) {
        const double* up = upstream.row(r);
        const double* xr = x.row(r);
        if (grad_b)
            for (std::size_t i = 0; i < out_dim; ++i) grad_b[i] += up[i];
        if (grad_w)
            for (std::size_t i = 0; i < out_dim; ++i) axpy(grad_w + i * in_dim, xr, up[i], in_dim);
        if (grad_x) {
            double* gx = grad_x->row(r);
            for (std::size_t i = 0; i < out_dim; ++i) axpy(gx, w.data() + i * in_dim, up[i], in_dim);
        }
    }
}

double gradient_check(const std::function<double()>& loss, std::span<ParamTensor* const> params,
                      double h) {
    double max_rel = 0.0;
    for (ParamTensor* p : params) {
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + h;
            const double lp = loss();
            p->value[i] = saved - h;
            const double lm = loss();
            p->value[i] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double analytic = p->grad[i];
            const double rel = std::abs(fd - analytic) / std::max(1.0, std::abs(analytic));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace tse::nn
