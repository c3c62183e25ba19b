#include "eqsim/conv1d.hpp"

#include <stdexcept>

namespace eqsim {

int ConvLayerSpec::out_len(int in_len) const {
    const int span = in_len + 2 * padding - dilation * (kernel - 1) - 1;
    if (span < 0) return 0;
    return span / stride + 1;
}

void ConvLayerSpec::validate() const {
    if (in_channels <= 0 || out_channels <= 0) throw std::invalid_argument("conv: channel counts must be positive");
    if (kernel <= 0 || kernel % 2 == 0) throw std::invalid_argument("conv: kernel size must be odd and positive");
    if (padding < 0) throw std::invalid_argument("conv: padding must be >= 0");
    if (stride != 1 && stride != 2) throw std::invalid_argument("conv: stride must be 1 or 2");
    if (dilation < 1) throw std::invalid_argument("conv: dilation must be >= 1");
}

Kernel zero_kernel(const ConvLayerSpec& spec) {
    return Kernel(static_cast<std::size_t>(spec.out_channels),
                  KernelBlock::Zero(spec.in_channels, spec.kernel));
}

static void check_kernel_shape(const ConvLayerSpec& spec, const Kernel& k) {
    if (static_cast<int>(k.size()) != spec.out_channels)
        throw std::invalid_argument("conv: kernel/out_channels mismatch");
    for (const auto& block : k)
        if (block.rows() != spec.in_channels || block.cols() != spec.kernel)
            throw std::invalid_argument("conv: kernel block shape mismatch");
}

// Zero-stuffed output gradient: element o lands at index o*stride, turning the
// strided backward convolutions into unit-stride ones.
static FeatureMap stuff_stride(const FeatureMap& g, int stride) {
    if (stride == 1) return g;
    FeatureMap out = FeatureMap::Zero(g.rows(), (g.cols() - 1) * stride + 1);
    for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) out(r, c * stride) = g(r, c);
    return out;
}

FeatureMap conv1d_forward_linear(const FeatureMap& input, const ConvLayerSpec& spec, const Kernel& k) {
    spec.validate();
    check_kernel_shape(spec, k);
    if (input.rows() != spec.in_channels) throw std::invalid_argument("conv: input channel mismatch");
    const int n = static_cast<int>(input.cols());
    const int n_out = spec.out_len(n);
    FeatureMap out = FeatureMap::Zero(spec.out_channels, n_out);
    if (spec.dilation == 1) {
        for (int co = 0; co < spec.out_channels; ++co) {
            const KernelBlock& w = k[static_cast<std::size_t>(co)];
            for (int o = 0; o < n_out; ++o) {
                const int base = o * spec.stride - spec.padding;
                double acc = 0.0;
                if (base >= 0 && base + spec.kernel <= n) {
                    for (int ci = 0; ci < spec.in_channels; ++ci)
                        acc += w.row(ci).dot(input.row(ci).segment(base, spec.kernel));
                } else {
                    const int t_lo = std::max(0, -base);
                    const int t_hi = std::min(spec.kernel, n - base);
                    for (int ci = 0; ci < spec.in_channels; ++ci)
                        for (int t = t_lo; t < t_hi; ++t) acc += w(ci, t) * input(ci, base + t);
                }
                out(co, o) = acc;
            }
        }
        return out;
    }
    for (int co = 0; co < spec.out_channels; ++co) {
        const KernelBlock& w = k[static_cast<std::size_t>(co)];
        for (int o = 0; o < n_out; ++o) {
            const int base = o * spec.stride - spec.padding;
            double acc = 0.0;
            for (int t = 0; t < spec.kernel; ++t) {
                const int x = base + t * spec.dilation;
                if (x < 0 || x >= n) continue;
                for (int ci = 0; ci < spec.in_channels; ++ci) acc += w(ci, t) * input(ci, x);
            }
            out(co, o) = acc;
        }
    }
    return out;
}

FeatureMap conv1d_forward(const FeatureMap& input, const ConvLayerSpec& spec, const Kernel& k) {
    FeatureMap out = conv1d_forward_linear(input, spec, k);
    if (spec.relu) out = out.cwiseMax(0.0);
    return out;
}

FeatureMap conv1d_input_grad(const FeatureMap& grad_out, const ConvLayerSpec& spec, const Kernel& k,
                             int in_len) {
    spec.validate();
    check_kernel_shape(spec, k);
    if (grad_out.rows() != spec.out_channels) throw std::invalid_argument("conv: grad_out channel mismatch");
    const int n_out = static_cast<int>(grad_out.cols());
    if (n_out != spec.out_len(in_len))
        throw std::invalid_argument("conv: grad_out length inconsistent with in_len");
    FeatureMap grad_in = FeatureMap::Zero(spec.in_channels, in_len);
    if (spec.dilation == 1) {
        // Flipped-kernel convolution over the zero-stuffed output gradient:
        // grad_in(ci, x) = sum_co sum_t wf(ci, t) gs(co, x - P + K - 1 - ... )
        const FeatureMap gs = stuff_stride(grad_out, spec.stride);
        const int m = static_cast<int>(gs.cols());
        std::vector<KernelBlock> flipped(k.size());
        for (std::size_t co = 0; co < k.size(); ++co) flipped[co] = k[co].rowwise().reverse();
        for (int ci = 0; ci < spec.in_channels; ++ci) {
            for (int x = 0; x < in_len; ++x) {
                const int base = x + spec.padding - spec.kernel + 1;  // index into gs
                double acc = 0.0;
                if (base >= 0 && base + spec.kernel <= m) {
                    for (int co = 0; co < spec.out_channels; ++co)
                        acc += flipped[static_cast<std::size_t>(co)].row(ci).dot(
                            gs.row(co).segment(base, spec.kernel));
                } else {
                    const int t_lo = std::max(0, -base);
                    const int t_hi = std::min(spec.kernel, m - base);
                    for (int co = 0; co < spec.out_channels; ++co)
                        for (int t = t_lo; t < t_hi; ++t)
                            acc += flipped[static_cast<std::size_t>(co)](ci, t) * gs(co, base + t);
                }
                grad_in(ci, x) = acc;
            }
        }
        return grad_in;
    }
    for (int co = 0; co < spec.out_channels; ++co) {
        const KernelBlock& w = k[static_cast<std::size_t>(co)];
        for (int o = 0; o < n_out; ++o) {
            const double g = grad_out(co, o);
            if (g == 0.0) continue;
            const int base = o * spec.stride - spec.padding;
            for (int t = 0; t < spec.kernel; ++t) {
                const int x = base + t * spec.dilation;
                if (x < 0 || x >= in_len) continue;
                for (int ci = 0; ci < spec.in_channels; ++ci) grad_in(ci, x) += w(ci, t) * g;
            }
        }
    }
    return grad_in;
}

Kernel conv1d_kernel_grad(const FeatureMap& input, const FeatureMap& grad_out, const ConvLayerSpec& spec) {
    spec.validate();
    if (input.rows() != spec.in_channels) throw std::invalid_argument("conv: input channel mismatch");
    if (grad_out.rows() != spec.out_channels) throw std::invalid_argument("conv: grad_out channel mismatch");
    const int n = static_cast<int>(input.cols());
    const int n_out = static_cast<int>(grad_out.cols());
    if (n_out != spec.out_len(n)) throw std::invalid_argument("conv: grad_out length inconsistent with input");
    Kernel grad = zero_kernel(spec);
    if (spec.dilation == 1) {
        // One long correlation per (co, ci, t) lag over the stuffed gradient.
        const FeatureMap gs = stuff_stride(grad_out, spec.stride);
        const int m = static_cast<int>(gs.cols());
        for (int co = 0; co < spec.out_channels; ++co) {
            KernelBlock& gk = grad[static_cast<std::size_t>(co)];
            for (int ci = 0; ci < spec.in_channels; ++ci)
                for (int t = 0; t < spec.kernel; ++t) {
                    const int shift = t - spec.padding;  // input index = gs index + shift
                    const int lo = std::max(0, -shift);
                    const int hi = std::min(m, n - shift);
                    if (hi <= lo) continue;
                    gk(ci, t) =
                        gs.row(co).segment(lo, hi - lo).dot(input.row(ci).segment(lo + shift, hi - lo));
                }
        }
        return grad;
    }
    for (int co = 0; co < spec.out_channels; ++co) {
        KernelBlock& gk = grad[static_cast<std::size_t>(co)];
        for (int o = 0; o < n_out; ++o) {
            const double go = grad_out(co, o);
            if (go == 0.0) continue;
            const int base = o * spec.stride - spec.padding;
            for (int t = 0; t < spec.kernel; ++t) {
                const int x = base + t * spec.dilation;
                if (x < 0 || x >= n) continue;
                for (int ci = 0; ci < spec.in_channels; ++ci) gk(ci, t) += input(ci, x) * go;
            }
        }
    }
    return grad;
}

FeatureMap relu_backward(const FeatureMap& positive_mask, const FeatureMap& grad) {
    if (positive_mask.rows() != grad.rows() || positive_mask.cols() != grad.cols())
        throw std::invalid_argument("relu_backward: mask/grad shape mismatch");
    return (positive_mask.array() > 0.0).select(grad, FeatureMap::Zero(grad.rows(), grad.cols()));
}

}  // namespace eqsim
