#pragma once

#include <Eigen/Dense>
#include <vector>

namespace eqsim {

// Feature maps are channel-major: rows = channels, cols = time. Row-major
// storage keeps each channel contiguous for the sliding-window dot products.
using FeatureMap = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Kernel weights, one (in_channels x kernel) block per output channel.
using KernelBlock = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Kernel = std::vector<KernelBlock>;

struct ConvLayerSpec {
    int in_channels = 1;
    int out_channels = 1;
    int kernel = 21;
    int padding = 10;
    int stride = 1;
    int dilation = 1;
    bool relu = false;

    int out_len(int in_len) const;
    int weight_count() const { return in_channels * out_channels * kernel; }
    void validate() const;
};

Kernel zero_kernel(const ConvLayerSpec& spec);

// Cross-correlation with zero padding; ReLU applied iff spec.relu.
FeatureMap conv1d_forward(const FeatureMap& input, const ConvLayerSpec& spec, const Kernel& k);
// Same, without the activation; used where the pre-activation is needed.
FeatureMap conv1d_forward_linear(const FeatureMap& input, const ConvLayerSpec& spec, const Kernel& k);

// Gradient w.r.t. the layer input: flipped-kernel convolution of the output
// gradient, zero-stuffed when the forward stride exceeds one. in_len fixes the
// result length to the original input.
FeatureMap conv1d_input_grad(const FeatureMap& grad_out, const ConvLayerSpec& spec, const Kernel& k,
                             int in_len);

// Gradient w.r.t. the weights: input correlated with the output gradient at
// the kernel lags.
Kernel conv1d_kernel_grad(const FeatureMap& input, const FeatureMap& grad_out, const ConvLayerSpec& spec);

// Pass-through where the cached pre-activation was positive, zero elsewhere.
FeatureMap relu_backward(const FeatureMap& positive_mask, const FeatureMap& grad);

}  // namespace eqsim
