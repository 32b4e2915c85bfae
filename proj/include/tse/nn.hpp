#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tse/tensor.hpp"

namespace tse::nn {

// ---------------------------------------------------------------------------
// Causal dilated convolution.
//
// out[b,o,t] = bias[o] + sum_{c,j} W[o,c,j] * x[b,c,t - (k-1-j)*dilation]
//
// with x treated as left-padded by (k-1)*dilation zeros, so the output has
// the same time length as the input and out[...,t] depends only on inputs
// at times <= t.
// ---------------------------------------------------------------------------

void causal_conv1d_forward(const Tensor3& input, std::span<const double> weights,
                           std::span<const double> bias, const ConvSpec& spec, Tensor3& out);

// Adjoint. Any of the gradient outputs may be null to skip that input.
// grad_weights/grad_bias are accumulated (+=), matching ParamTensor grads.
void causal_conv1d_backward(const Tensor3& input, std::span<const double> weights,
                            const ConvSpec& spec, const Tensor3& upstream, Tensor3* grad_input,
                            double* grad_weights, double* grad_bias);

// ---------------------------------------------------------------------------
// Weight normalization: w[o,:,:] = g[o] * v[o,:,:] / ||v[o,:,:]||_2.
// v has rows of size `row` (= in_channels*kernel_size); g has one entry per
// output channel. Throws std::domain_error on a zero-norm row.
// ---------------------------------------------------------------------------

void weight_norm_apply(std::span<const double> v, std::span<const double> g, std::size_t out_rows,
                       std::size_t row, std::vector<double>& w_out);

void weight_norm_backward(std::span<const double> v, std::span<const double> g,
                          std::span<const double> grad_w, std::size_t out_rows, std::size_t row,
                          double* grad_v, double* grad_g);

// ---------------------------------------------------------------------------
// Leaky ReLU: y = x for x >= 0, slope*x otherwise. The derivative at exactly
// zero is the slope.
// ---------------------------------------------------------------------------

void leaky_relu_forward(const Tensor3& x, double slope, Tensor3& y);

void leaky_relu_backward(const Tensor3& pre_activation, double slope, const Tensor3& upstream,
                         Tensor3& grad_accum);

// ---------------------------------------------------------------------------
// Global max pooling over time, restricted to each item's valid prefix.
// Ties resolve to the lowest time index so the adjoint is deterministic.
// ---------------------------------------------------------------------------

void global_max_pool_forward(const Tensor3& input, std::span<const std::size_t> valid_lengths,
                             Matrix& out, std::vector<std::size_t>& argmax);

void global_max_pool_backward(const Matrix& upstream, std::span<const std::size_t> argmax,
                              Tensor3& grad_accum);

// ---------------------------------------------------------------------------
// Linear layer on pooled vectors: y = W x + b, W is (out_dim, in_dim).
// ---------------------------------------------------------------------------

void linear_forward(const Matrix& x, std::span<const double> w, std::span<const double> b,
                    std::size_t out_dim, Matrix& y);

void linear_backward(const Matrix& x, std::span<const double> w, std::size_t out_dim,
                     const Matrix& upstream, Matrix* grad_x, double* grad_w, double* grad_b);

// ---------------------------------------------------------------------------
// Finite-difference gradient checker.
//
// `loss` re-runs the forward pass from current parameter values. The caller
// runs its analytic backward once beforehand so that each ParamTensor.grad
// holds d loss / d param. Central differences with step h; the returned
// value is max over entries of |fd - grad| / max(1, |grad|).
// ---------------------------------------------------------------------------

double gradient_check(const std::function<double()>& loss, std::span<ParamTensor* const> params,
                      double h = 1e-6);

}  // namespace tse::nn
