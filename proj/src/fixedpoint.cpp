#include "eqsim/fixedpoint.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "eqsim/rng.hpp"

namespace eqsim {

double FixedPointFormat::step() const { return std::exp2(static_cast<double>(-frac_bits)); }

double FixedPointFormat::min_value() const {
    return is_signed ? -std::exp2(static_cast<double>(total_bits - 1)) * step() : 0.0;
}

double FixedPointFormat::max_value() const {
    const double codes = is_signed ? std::exp2(static_cast<double>(total_bits - 1)) : std::exp2(total_bits);
    return (codes - 1.0) * step();
}

void FixedPointFormat::validate() const {
    if (total_bits < 1 || total_bits > 32) throw std::invalid_argument("fixed-point: total_bits must be in [1,32]");
    if (frac_bits > total_bits - (is_signed ? 1 : 0))
        throw std::invalid_argument("fixed-point: frac_bits exceed the available width");
}

double quantize(double x, const FixedPointFormat& fmt) {
    fmt.validate();
    const double scale = std::exp2(static_cast<double>(fmt.frac_bits));
    double code = std::round(x * scale);  // ties away from zero
    const double lo = fmt.is_signed ? -std::exp2(static_cast<double>(fmt.total_bits - 1)) : 0.0;
    const double hi = (fmt.is_signed ? std::exp2(static_cast<double>(fmt.total_bits - 1))
                                     : std::exp2(static_cast<double>(fmt.total_bits))) -
                      1.0;
    code = std::clamp(code, lo, hi);
    return code / scale;
}

int magnitude_bits_for(double abs_max) {
    int m = 1;
    while (m < 62 && std::exp2(static_cast<double>(m)) <= abs_max) ++m;
    return m;
}

FixedPointFormat format_for_range(double abs_max, int total_bits) {
    FixedPointFormat fmt;
    fmt.total_bits = total_bits;
    fmt.is_signed = true;
    fmt.frac_bits = total_bits - 1 - magnitude_bits_for(abs_max);
    return fmt;
}

SoftQuantResult soft_quantize(double x, double bits, double range_abs_max) {
    if (bits < 2.0 || bits > 16.0) throw std::invalid_argument("soft_quantize: bits must be in [2,16]");
    const int lo_bits = static_cast<int>(std::floor(bits));
    const double w_hi = bits - lo_bits;
    const FixedPointFormat lo_fmt = format_for_range(range_abs_max, lo_bits);
    const FixedPointFormat hi_fmt = format_for_range(range_abs_max, lo_bits + 1);
    const double q_lo = quantize(x, lo_fmt);
    const double q_hi = quantize(x, hi_fmt);
    SoftQuantResult r;
    r.value = (1.0 - w_hi) * q_lo + w_hi * q_hi;
    r.d_value_d_bits = q_hi - q_lo;
    r.saturated = x > lo_fmt.max_value() || x < lo_fmt.min_value();
    return r;
}

void QuantConfig::validate(const Cnn& cnn) const {
    if (weights.size() != cnn.specs.size() || activations.size() != cnn.specs.size())
        throw std::invalid_argument("quant config: per-layer format count mismatch");
    for (const auto& f : weights) f.validate();
    for (const auto& f : activations) f.validate();
    multiplier.validate();
    accumulator.validate();
    gradient.validate();
    if (accumulator.total_bits < multiplier.total_bits)
        throw std::invalid_argument("quant config: accumulator must be at least as wide as the multiplier");
}

double avg_bits(const QuantConfig& qcfg) {
    double sum = 0.0;
    for (const auto& f : qcfg.weights) sum += f.total_bits;
    for (const auto& f : qcfg.activations) sum += f.total_bits;
    return sum / static_cast<double>(qcfg.weights.size() + qcfg.activations.size());
}

double BitwidthSearchState::average() const {
    return (weight_bits.sum() + activation_bits.sum()) /
           static_cast<double>(weight_bits.size() + activation_bits.size());
}

namespace {

void track(double v, double& slot) {
    const double a = std::abs(v);
    if (a > slot) slot = a;
}

// Forward conv tracking multiplier products and accumulator partials.
FeatureMap conv_forward_profiled(const FeatureMap& input, const ConvLayerSpec& spec, const Kernel& k,
                                 double& mult_max, double& acc_max) {
    const int n = static_cast<int>(input.cols());
    const int n_out = spec.out_len(n);
    FeatureMap out = FeatureMap::Zero(spec.out_channels, n_out);
    for (int co = 0; co < spec.out_channels; ++co) {
        const KernelBlock& w = k[static_cast<std::size_t>(co)];
        for (int o = 0; o < n_out; ++o) {
            const int base = o * spec.stride - spec.padding;
            double acc = 0.0;
            for (int t = 0; t < spec.kernel; ++t) {
                const int x = base + t * spec.dilation;
                if (x < 0 || x >= n) continue;
                for (int ci = 0; ci < spec.in_channels; ++ci) {
                    const double p = w(ci, t) * input(ci, x);
                    track(p, mult_max);
                    acc += p;
                    track(acc, acc_max);
                }
            }
            out(co, o) = acc;
        }
    }
    return out;
}

void track_map(const FeatureMap& m, double& slot) {
    if (m.size() > 0) track(m.cwiseAbs().maxCoeff(), slot);
}

void track_kernel(const Kernel& k, double& slot) {
    for (const auto& block : k)
        if (block.size() > 0) track(block.cwiseAbs().maxCoeff(), slot);
}

}  // namespace

RangeProfile profile_ranges(const Cnn& cnn, const ChannelConfig& channel, const LossKind& loss,
                            int sequences, std::uint64_t seed) {
    if (sequences < 1) throw std::invalid_argument("profile_ranges: need at least one sequence");
    cnn.validate();
    const std::size_t n_layers = cnn.specs.size();
    RangeProfile p;
    p.weights.assign(n_layers, 0.0);
    p.activations.assign(n_layers, 0.0);
    for (std::size_t l = 0; l < n_layers; ++l) track_kernel(cnn.weights[l], p.weights[l]);

    const int batch = 512;
    for (int s = 0; s < sequences; ++s) {
        const auto syms = generate_symbols(batch, channel.modulation, derive_seed(seed, s, 20));
        const Eigen::ArrayXd y = apply_channel(syms, channel, derive_seed(seed, s, 21));

        // Forward with multiplier/accumulator tracking.
        FeatureMap fm(1, y.size());
        fm.row(0) = y.transpose();
        std::vector<FeatureMap> inputs;
        std::vector<FeatureMap> preacts;
        for (std::size_t l = 0; l < n_layers; ++l) {
            track_map(fm, p.activations[l]);
            inputs.push_back(fm);
            FeatureMap pre =
                conv_forward_profiled(fm, cnn.specs[l], cnn.weights[l], p.multiplier, p.accumulator);
            preacts.push_back(pre);
            fm = cnn.specs[l].relu ? pre.cwiseMax(0.0) : pre;
        }
        const Eigen::ArrayXd z = fm.row(0).transpose().array();

        Eigen::ArrayXd target;
        if (loss.variant == LossVariant::Mse) {
            target.resize(z.size());
            for (Eigen::Index i = 0; i < z.size(); ++i)
                target[i] = channel.modulation.target_levels[syms[static_cast<std::size_t>(i)]];
        }
        const LossResult res = evaluate_loss(loss, z, target);

        // Backward; BP shares the multiplier/accumulator classes.
        FeatureMap grad(1, res.dz.size());
        grad.row(0) = res.dz.transpose();
        track_map(grad, p.gradient);
        for (int l = static_cast<int>(n_layers) - 1; l >= 0; --l) {
            const auto& spec = cnn.specs[static_cast<std::size_t>(l)];
            if (spec.relu) {
                grad = relu_backward(preacts[static_cast<std::size_t>(l)], grad);
                track_map(grad, p.gradient);
            }
            const Kernel kg = conv1d_kernel_grad(inputs[static_cast<std::size_t>(l)], grad, spec);
            track_kernel(kg, p.gradient);
            if (l > 0) {
                grad = conv1d_input_grad(grad, spec, cnn.weights[static_cast<std::size_t>(l)],
                                         static_cast<int>(inputs[static_cast<std::size_t>(l)].cols()));
                track_map(grad, p.gradient);
            }
        }
    }
    return p;
}

QuantConfig quant_config_from_profile(const RangeProfile& profile, const QuantWidths& widths) {
    QuantConfig q;
    for (double r : profile.weights) q.weights.push_back(format_for_range(r, widths.weight_bits));
    for (double r : profile.activations) q.activations.push_back(format_for_range(r, widths.activation_bits));
    q.multiplier = format_for_range(profile.multiplier, widths.multiplier_bits);
    q.accumulator = format_for_range(profile.accumulator, widths.accumulator_bits);
    q.gradient = format_for_range(profile.gradient, widths.gradient_bits);
    return q;
}

namespace {

Kernel quantize_kernel(const Kernel& k, const FixedPointFormat& fmt) {
    Kernel out = k;
    for (auto& block : out)
        for (int ci = 0; ci < block.rows(); ++ci)
            for (int t = 0; t < block.cols(); ++t) block(ci, t) = quantize(block(ci, t), fmt);
    return out;
}

FeatureMap quantize_map(const FeatureMap& m, const FixedPointFormat& fmt) {
    FeatureMap out = m;
    for (int r = 0; r < out.rows(); ++r)
        for (int c = 0; c < out.cols(); ++c) out(r, c) = quantize(out(r, c), fmt);
    return out;
}

// Conv with quantized multiply/accumulate steps.
FeatureMap qconv_forward(const FeatureMap& input, const ConvLayerSpec& spec, const Kernel& k,
                         const QuantConfig& q) {
    const int n = static_cast<int>(input.cols());
    const int n_out = spec.out_len(n);
    FeatureMap out = FeatureMap::Zero(spec.out_channels, n_out);
    for (int co = 0; co < spec.out_channels; ++co) {
        const KernelBlock& w = k[static_cast<std::size_t>(co)];
        for (int o = 0; o < n_out; ++o) {
            const int base = o * spec.stride - spec.padding;
            double acc = 0.0;
            for (int t = 0; t < spec.kernel; ++t) {
                const int x = base + t * spec.dilation;
                if (x < 0 || x >= n) continue;
                for (int ci = 0; ci < spec.in_channels; ++ci) {
                    const double p = quantize(w(ci, t) * input(ci, x), q.multiplier);
                    acc += p;
                    if (q.quantize_each_accumulation) acc = quantize(acc, q.accumulator);
                }
            }
            if (!q.quantize_each_accumulation) acc = quantize(acc, q.accumulator);
            out(co, o) = acc;
        }
    }
    return out;
}

FeatureMap qconv_input_grad(const FeatureMap& grad_out, const ConvLayerSpec& spec, const Kernel& k,
                            int in_len, const QuantConfig& q) {
    const int n_out = static_cast<int>(grad_out.cols());
    FeatureMap grad_in = FeatureMap::Zero(spec.in_channels, in_len);
    for (int co = 0; co < spec.out_channels; ++co) {
        const KernelBlock& w = k[static_cast<std::size_t>(co)];
        for (int o = 0; o < n_out; ++o) {
            const double g = grad_out(co, o);
            const int base = o * spec.stride - spec.padding;
            for (int t = 0; t < spec.kernel; ++t) {
                const int x = base + t * spec.dilation;
                if (x < 0 || x >= in_len) continue;
                for (int ci = 0; ci < spec.in_channels; ++ci) {
                    const double p = quantize(w(ci, t) * g, q.multiplier);
                    double acc = grad_in(ci, x) + p;
                    if (q.quantize_each_accumulation) acc = quantize(acc, q.accumulator);
                    grad_in(ci, x) = acc;
                }
            }
        }
    }
    if (!q.quantize_each_accumulation) grad_in = quantize_map(grad_in, q.accumulator);
    return grad_in;
}

Kernel qconv_kernel_grad(const FeatureMap& input, const FeatureMap& grad_out, const ConvLayerSpec& spec,
                         const QuantConfig& q) {
    const int n = static_cast<int>(input.cols());
    const int n_out = static_cast<int>(grad_out.cols());
    Kernel grad = zero_kernel(spec);
    for (int co = 0; co < spec.out_channels; ++co) {
        KernelBlock& gk = grad[static_cast<std::size_t>(co)];
        for (int o = 0; o < n_out; ++o) {
            const double go = grad_out(co, o);
            const int base = o * spec.stride - spec.padding;
            for (int t = 0; t < spec.kernel; ++t) {
                const int x = base + t * spec.dilation;
                if (x < 0 || x >= n) continue;
                for (int ci = 0; ci < spec.in_channels; ++ci) {
                    const double p = quantize(input(ci, x) * go, q.multiplier);
                    double acc = gk(ci, t) + p;
                    if (q.quantize_each_accumulation) acc = quantize(acc, q.accumulator);
                    gk(ci, t) = acc;
                }
            }
        }
    }
    if (!q.quantize_each_accumulation)
        for (auto& block : grad)
            for (int ci = 0; ci < block.rows(); ++ci)
                for (int t = 0; t < block.cols(); ++t) block(ci, t) = quantize(block(ci, t), q.accumulator);
    return grad;
}

}  // namespace

Eigen::ArrayXd quantized_forward(const Cnn& cnn, const Eigen::ArrayXd& y, const QuantConfig& qcfg,
                                 ForwardCache* cache) {
    cnn.validate();
    qcfg.validate(cnn);
    if (y.size() == 0 || y.size() % 2 != 0)
        throw std::invalid_argument("quantized_forward: input length must be even and nonzero");
    FeatureMap fm(1, y.size());
    fm.row(0) = y.transpose();
    if (cache) {
        cache->inputs.clear();
        cache->preacts.clear();
    }
    for (std::size_t l = 0; l < cnn.specs.size(); ++l) {
        const auto& spec = cnn.specs[l];
        fm = quantize_map(fm, qcfg.activations[l]);
        if (cache) cache->inputs.push_back(fm);
        const Kernel wq = quantize_kernel(cnn.weights[l], qcfg.weights[l]);
        FeatureMap pre = qconv_forward(fm, spec, wq, qcfg);
        if (spec.relu) {
            if (cache) cache->preacts.push_back(pre);
            fm = pre.cwiseMax(0.0);
        } else {
            if (cache) cache->preacts.emplace_back();
            fm = std::move(pre);
        }
    }
    if (cache) cache->out_len = static_cast<int>(fm.cols());
    return fm.row(0).transpose().array();
}

GradientSet quantized_backward(const Cnn& cnn, const ForwardCache& cache, const Eigen::ArrayXd& dz,
                               const QuantConfig& qcfg) {
    cnn.validate();
    qcfg.validate(cnn);
    if (cache.inputs.size() != cnn.specs.size())
        throw std::invalid_argument("quantized_backward: cache does not match the model");
    if (static_cast<int>(dz.size()) != cache.out_len)
        throw std::invalid_argument("quantized_backward: dz length mismatch");
    GradientSet grads;
    grads.kernels.resize(cnn.specs.size());
    FeatureMap grad(1, dz.size());
    grad.row(0) = dz.transpose();
    grad = quantize_map(grad, qcfg.gradient);
    for (int l = static_cast<int>(cnn.specs.size()) - 1; l >= 0; --l) {
        const auto& spec = cnn.specs[static_cast<std::size_t>(l)];
        const FeatureMap& input = cache.inputs[static_cast<std::size_t>(l)];
        if (spec.relu) {
            grad = relu_backward(cache.preacts[static_cast<std::size_t>(l)], grad);
            grad = quantize_map(grad, qcfg.gradient);
        }
        const Kernel wq = quantize_kernel(cnn.weights[static_cast<std::size_t>(l)],
                                          qcfg.weights[static_cast<std::size_t>(l)]);
        Kernel kg = qconv_kernel_grad(input, grad, spec, qcfg);
        for (auto& block : kg)
            for (int ci = 0; ci < block.rows(); ++ci)
                for (int t = 0; t < block.cols(); ++t) block(ci, t) = quantize(block(ci, t), qcfg.gradient);
        grads.kernels[static_cast<std::size_t>(l)] = std::move(kg);
        if (l > 0) {
            grad = qconv_input_grad(grad, spec, wq, static_cast<int>(input.cols()), qcfg);
            grad = quantize_map(grad, qcfg.gradient);
        }
    }
    return grads;
}

namespace {

struct SoftMap {
    FeatureMap value;
    FeatureMap ddb;
    FeatureMap pass;  // 1 where not saturated
};

SoftMap soft_quantize_map(const FeatureMap& m, double bits, double range) {
    SoftMap out;
    out.value.resize(m.rows(), m.cols());
    out.ddb.resize(m.rows(), m.cols());
    out.pass = FeatureMap::Ones(m.rows(), m.cols());
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) {
            const SoftQuantResult q = soft_quantize(m(r, c), bits, range);
            out.value(r, c) = q.value;
            out.ddb(r, c) = q.d_value_d_bits;
            if (q.saturated) out.pass(r, c) = 0.0;
        }
    return out;
}

double clamp_bits(double b) { return std::clamp(b, 2.0, 16.0); }

}  // namespace

std::vector<ParetoPoint> bitwidth_pareto_sweep(const ChannelConfig& channel, const Cnn& initial,
                                               const LossKind& loss, const std::vector<double>& gammas,
                                               const ParetoSweepOptions& opt) {
    if (gammas.empty()) throw std::invalid_argument("bitwidth_pareto_sweep: gammas must be non-empty");
    initial.validate();
    const std::size_t n_layers = initial.specs.size();
    const double n_classes = static_cast<double>(2 * n_layers);

    // Activation ranges frozen from the float model.
    const RangeProfile base_profile = profile_ranges(initial, channel, loss, 4, derive_seed(opt.seed, 0, 30));

    std::vector<ParetoPoint> points;
    for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
        const double gamma = gammas[gi];
        Cnn cnn = initial;
        BitwidthSearchState state;
        state.gamma = gamma;
        state.weight_bits = Eigen::ArrayXd::Constant(static_cast<Eigen::Index>(n_layers), 16.0);
        state.activation_bits = Eigen::ArrayXd::Constant(static_cast<Eigen::Index>(n_layers), 16.0);

        ParetoPoint point;
        point.gamma = gamma;
        bool diverged = false;
        const std::uint64_t seed = derive_seed(opt.seed, gi, 31);

        for (int it = 0; it < opt.train_iterations && !diverged; ++it) {
            const auto syms =
                generate_symbols(opt.batch_symbols, channel.modulation, derive_seed(seed, it, 32));
            const Eigen::ArrayXd y = apply_channel(syms, channel, derive_seed(seed, it, 33));

            // Forward with soft-quantized weights and activations.
            std::vector<Kernel> wq(n_layers);
            std::vector<Kernel> w_ddb(n_layers);
            std::vector<SoftMap> act(n_layers);
            std::vector<FeatureMap> preacts(n_layers);
            FeatureMap fm(1, y.size());
            fm.row(0) = y.transpose();
            for (std::size_t l = 0; l < n_layers; ++l) {
                double w_range = 0.0;
                for (const auto& block : cnn.weights[l]) track(block.cwiseAbs().maxCoeff(), w_range);
                wq[l] = cnn.weights[l];
                w_ddb[l] = zero_kernel(cnn.specs[l]);
                for (std::size_t co = 0; co < wq[l].size(); ++co)
                    for (int ci = 0; ci < wq[l][co].rows(); ++ci)
                        for (int t = 0; t < wq[l][co].cols(); ++t) {
                            const SoftQuantResult q =
                                soft_quantize(cnn.weights[l][co](ci, t), state.weight_bits[l], w_range);
                            wq[l][co](ci, t) = q.value;
                            w_ddb[l][co](ci, t) = q.d_value_d_bits;
                        }
                act[l] = soft_quantize_map(fm, state.activation_bits[l],
                                           std::max(base_profile.activations[l], 1e-6));
                preacts[l] = conv1d_forward_linear(act[l].value, cnn.specs[l], wq[l]);
                fm = cnn.specs[l].relu ? preacts[l].cwiseMax(0.0) : preacts[l];
            }
            const Eigen::ArrayXd z = fm.row(0).transpose().array();

            Eigen::ArrayXd target;
            if (loss.variant == LossVariant::Mse) {
                target.resize(z.size());
                for (Eigen::Index i = 0; i < z.size(); ++i)
                    target[i] = channel.modulation.target_levels[syms[static_cast<std::size_t>(i)]];
            }
            const LossResult res = evaluate_loss(loss, z, target);
            if (!std::isfinite(res.loss)) {
                diverged = true;
                break;
            }

            // Backward with straight-through estimators; bit gradients pick up
            // the interpolation term.
            Eigen::ArrayXd gb_w = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(n_layers));
            Eigen::ArrayXd gb_a = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(n_layers));
            FeatureMap grad(1, res.dz.size());
            grad.row(0) = res.dz.transpose();
            GradientSet grads;
            grads.kernels.resize(n_layers);
            for (int l = static_cast<int>(n_layers) - 1; l >= 0; --l) {
                const auto& spec = cnn.specs[static_cast<std::size_t>(l)];
                if (spec.relu) grad = relu_backward(preacts[static_cast<std::size_t>(l)], grad);
                const Kernel kg = conv1d_kernel_grad(act[static_cast<std::size_t>(l)].value, grad, spec);
                for (std::size_t co = 0; co < kg.size(); ++co)
                    gb_w[l] += (kg[co].array() * w_ddb[static_cast<std::size_t>(l)][co].array()).sum();
                grads.kernels[static_cast<std::size_t>(l)] = kg;
                const FeatureMap gq =
                    conv1d_input_grad(grad, spec, wq[static_cast<std::size_t>(l)],
                                      static_cast<int>(act[static_cast<std::size_t>(l)].value.cols()));
                gb_a[l] += (gq.array() * act[static_cast<std::size_t>(l)].ddb.array()).sum();
                if (l > 0) grad = gq.cwiseProduct(act[static_cast<std::size_t>(l)].pass);
            }

            sgd_step(cnn, grads, opt.lr);
            for (std::size_t l = 0; l < n_layers; ++l) {
                state.weight_bits[l] = clamp_bits(state.weight_bits[l] -
                                                  opt.bit_lr * (gb_w[l] + gamma / n_classes));
                state.activation_bits[l] = clamp_bits(state.activation_bits[l] -
                                                      opt.bit_lr * (gb_a[l] + gamma / n_classes));
            }
        }

        if (diverged) {
            point.diverged = true;
            point.state = state;
            points.push_back(std::move(point));
            continue;
        }

        // Round the learned widths and evaluate with true fixed-point math.
        QuantWidths widths;
        const RangeProfile trained_profile =
            profile_ranges(cnn, channel, loss, 2, derive_seed(opt.seed, gi, 34));
        QuantConfig qcfg = quant_config_from_profile(trained_profile, widths);
        for (std::size_t l = 0; l < n_layers; ++l) {
            const int wb = static_cast<int>(std::lround(state.weight_bits[l]));
            const int ab = static_cast<int>(std::lround(state.activation_bits[l]));
            qcfg.weights[l] = format_for_range(trained_profile.weights[l], wb);
            qcfg.activations[l] = format_for_range(trained_profile.activations[l], ab);
        }

        const auto tx = generate_symbols(opt.eval_symbols, channel.modulation, derive_seed(opt.seed, gi, 35));
        const Eigen::ArrayXd y = apply_channel(tx, channel, derive_seed(opt.seed, gi, 36));
        const Eigen::ArrayXd z = quantized_forward(cnn, y, qcfg);
        const auto rx = hard_decision(z, channel.modulation.target_levels);
        point.ber = ber(tx, rx, channel.modulation);
        point.avg_bits = avg_bits(qcfg);
        point.state = state;
        points.push_back(std::move(point));
    }
    mark_pareto_front(points);
    return points;
}

void mark_pareto_front(std::vector<ParetoPoint>& points) {
    for (auto& p : points) p.pareto = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].diverged) continue;
        bool dominated = false;
        for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
            if (i == j || points[j].diverged) continue;
            const bool no_worse =
                points[j].avg_bits <= points[i].avg_bits && points[j].ber <= points[i].ber;
            const bool better = points[j].avg_bits < points[i].avg_bits || points[j].ber < points[i].ber;
            dominated = no_worse && better;
        }
        points[i].pareto = !dominated;
    }
}

}  // namespace eqsim
