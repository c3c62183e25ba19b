#include "eqsim/selftest.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "eqsim/cnn.hpp"
#include "eqsim/conv1d.hpp"
#include "eqsim/losses.hpp"
#include "eqsim/pipeline.hpp"
#include "eqsim/rng.hpp"

namespace eqsim {

namespace {

// Direct-sum convolution reference, independent of the production kernels.
FeatureMap naive_conv(const FeatureMap& input, const ConvLayerSpec& spec, const Kernel& k) {
    const int n = static_cast<int>(input.cols());
    const int n_out = spec.out_len(n);
    FeatureMap out = FeatureMap::Zero(spec.out_channels, n_out);
    for (int co = 0; co < spec.out_channels; ++co)
        for (int ci = 0; ci < spec.in_channels; ++ci)
            for (int o = 0; o < n_out; ++o)
                for (int t = 0; t < spec.kernel; ++t) {
                    const int x = o * spec.stride + t * spec.dilation - spec.padding;
                    if (x >= 0 && x < n) out(co, o) += k[static_cast<std::size_t>(co)](ci, t) * input(ci, x);
                }
    if (spec.relu) out = out.cwiseMax(0.0);
    return out;
}

ConvLayerSpec random_spec(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> ch(1, 3);
    std::uniform_int_distribution<int> ks(0, 3);
    std::uniform_int_distribution<int> st(1, 2);
    const int kernels[] = {1, 3, 5, 21};
    ConvLayerSpec spec;
    spec.in_channels = ch(rng);
    spec.out_channels = ch(rng);
    spec.kernel = kernels[ks(rng)];
    spec.padding = (spec.kernel - 1) / 2;
    spec.stride = st(rng);
    spec.dilation = st(rng);
    spec.relu = false;
    return spec;
}

Kernel random_kernel(const ConvLayerSpec& spec, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Kernel k = zero_kernel(spec);
    for (auto& block : k)
        for (int ci = 0; ci < block.rows(); ++ci)
            for (int t = 0; t < block.cols(); ++t) block(ci, t) = dist(rng);
    return k;
}

FeatureMap random_map(int channels, int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    FeatureMap m(channels, n);
    for (int c = 0; c < channels; ++c)
        for (int x = 0; x < n; ++x) m(c, x) = dist(rng);
    return m;
}

// Deliberately wrong input gradient: convolves with the unflipped kernel.
FeatureMap wrong_flip_input_grad(const FeatureMap& grad_out, const ConvLayerSpec& spec, const Kernel& k,
                                 int in_len) {
    FeatureMap grad_in = FeatureMap::Zero(spec.in_channels, in_len);
    for (int co = 0; co < spec.out_channels; ++co)
        for (int o = 0; o < static_cast<int>(grad_out.cols()); ++o) {
            const int base = o * spec.stride - spec.padding;
            for (int t = 0; t < spec.kernel; ++t) {
                const int x = base + (spec.kernel - 1 - t) * spec.dilation;
                if (x < 0 || x >= in_len) continue;
                for (int ci = 0; ci < spec.in_channels; ++ci)
                    grad_in(ci, x) += k[static_cast<std::size_t>(co)](ci, t) * grad_out(co, o);
            }
        }
    return grad_in;
}

bool conv_oracle_suite(std::ostream& out) {
    auto rng = make_engine(2024);
    std::uniform_int_distribution<int> len(8, 32);
    double worst = 0.0;
    for (int trial = 0; trial < 300; ++trial) {
        const ConvLayerSpec spec = random_spec(rng);
        const Kernel k = random_kernel(spec, rng);
        const FeatureMap input = random_map(spec.in_channels, len(rng) + spec.kernel, rng);
        const FeatureMap got = conv1d_forward(input, spec, k);
        const FeatureMap want = naive_conv(input, spec, k);
        const double err = (got - want).cwiseAbs().maxCoeff();
        worst = std::max(worst, err);
    }
    const bool ok = worst < 1e-12;
    out << (ok ? "[pass]" : "[FAIL]") << " conv-oracle: max |conv - naive| = " << worst << "\n";
    return ok;
}

bool gradient_suite(std::ostream& out, bool wrong_flip) {
    auto rng = make_engine(7);
    std::uniform_int_distribution<int> len(8, 24);
    const double h = 1e-6;
    double worst = 0.0;
    for (int trial = 0; trial < 60; ++trial) {
        ConvLayerSpec spec = random_spec(rng);
        spec.dilation = 1;
        const Kernel k = random_kernel(spec, rng);
        FeatureMap input = random_map(spec.in_channels, len(rng) * spec.stride, rng);
        const int n = static_cast<int>(input.cols());
        const int n_out = spec.out_len(n);
        if (n_out <= 0) continue;
        const FeatureMap dout = random_map(spec.out_channels, n_out, rng);

        // scalar objective: <conv(input), dout>
        auto objective = [&](const FeatureMap& in) {
            return (conv1d_forward(in, spec, k).array() * dout.array()).sum();
        };
        const FeatureMap analytic = wrong_flip ? wrong_flip_input_grad(dout, spec, k, n)
                                               : conv1d_input_grad(dout, spec, k, n);
        for (int probe = 0; probe < 6; ++probe) {
            std::uniform_int_distribution<int> pc(0, spec.in_channels - 1), px(0, n - 1);
            const int c = pc(rng), x = px(rng);
            FeatureMap plus = input, minus = input;
            plus(c, x) += h;
            minus(c, x) -= h;
            const double fd = (objective(plus) - objective(minus)) / (2 * h);
            const double err = std::abs(fd - analytic(c, x)) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, err);
        }

        const Kernel kg = conv1d_kernel_grad(input, dout, spec);
        for (int probe = 0; probe < 4; ++probe) {
            std::uniform_int_distribution<int> pco(0, spec.out_channels - 1), pci(0, spec.in_channels - 1),
                pt(0, spec.kernel - 1);
            const int co = pco(rng), ci = pci(rng), t = pt(rng);
            Kernel plus = k, minus = k;
            plus[static_cast<std::size_t>(co)](ci, t) += h;
            minus[static_cast<std::size_t>(co)](ci, t) -= h;
            const double fd = ((conv1d_forward(input, spec, plus).array() -
                                conv1d_forward(input, spec, minus).array()) *
                               dout.array())
                                  .sum() /
                              (2 * h);
            const double err = std::abs(fd - kg[static_cast<std::size_t>(co)](ci, t)) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, err);
        }
    }
    const bool ok = worst < 1e-5;
    out << (ok ? "[pass]" : "[FAIL]") << " gradients: max rel err vs finite differences = " << worst << "\n";
    return ok;
}

bool loss_suite(std::ostream& out) {
    auto rng = make_engine(99);
    std::uniform_real_distribution<double> dist2(-2.0, 2.0);
    std::uniform_real_distribution<double> dist4(-1.0, 4.0);
    const double h = 1e-6;
    double worst = 0.0;
    bool laws_ok = true;

    const Eigen::ArrayXd a2{{-1.0, 1.0}};
    const Eigen::ArrayXd a4{{0.0, 1.0, 2.0, 3.0}};
    for (int trial = 0; trial < 40; ++trial) {
        for (int variant = 0; variant < 2; ++variant) {
            Eigen::ArrayXd z(6);
            for (int i = 0; i < 6; ++i) z[i] = variant == 0 ? dist2(rng) : dist4(rng);
            const Eigen::ArrayXd& a = variant == 0 ? a2 : a4;
            auto eval = [&](const Eigen::ArrayXd& zz) {
                return variant == 0 ? unsup_loss_pam2(zz, a, 4.0) : unsup_loss_pam4(zz, a, 4.0);
            };
            // keep clear of the |.| kinks, including the accumulated-distance terms
            Eigen::ArrayXd d = Eigen::ArrayXd::Zero(a.size());
            for (int i = 0; i < 6; ++i)
                for (Eigen::Index j = 0; j < a.size(); ++j) d[j] += std::abs(z[i] - a[j]);
            bool term_kink = false;
            if (variant == 0) {
                term_kink = std::abs(d[0] - d[1]) < 1e-3;
            } else {
                const double terms[] = {d[0] - d[3], 1.5 * d[1] - 1.5 * d[2], d[0] - 1.5 * d[1],
                                        d[3] - 1.5 * d[2]};
                for (double t : terms) term_kink = term_kink || std::abs(t) < 1e-3;
            }
            if (term_kink) continue;
            const LossResult res = eval(z);
            for (int i = 0; i < 6; ++i) {
                bool near_kink = false;
                for (Eigen::Index j = 0; j < a.size(); ++j)
                    near_kink = near_kink || std::abs(z[i] - a[j]) < 1e-3;
                if (near_kink) continue;
                Eigen::ArrayXd plus = z, minus = z;
                plus[i] += h;
                minus[i] -= h;
                const double fd = (eval(plus).loss - eval(minus).loss) / (2 * h);
                const double err = std::abs(fd - res.dz[i]) / std::max(1.0, std::abs(fd));
                worst = std::max(worst, err);
            }
        }
    }
    // loss_a law: zero exactly on the constellation, positive elsewhere.
    const Eigen::ArrayXd on_points{{-1.0, 1.0, -1.0, 1.0}};
    laws_ok = laws_ok && unsup_loss_pam2(on_points, a2, 0.0).loss == 0.0;
    const Eigen::ArrayXd off_points{{0.2, 0.9}};
    laws_ok = laws_ok && unsup_loss_pam2(off_points, a2, 0.0).loss > 0.0;
    const Eigen::ArrayXd equidistributed{{0.0, 1.0, 2.0, 3.0}};
    laws_ok = laws_ok && unsup_loss_pam4(equidistributed, a4, 1.0).loss == 0.0;

    const bool ok = worst < 1e-6 && laws_ok;
    out << (ok ? "[pass]" : "[FAIL]") << " losses: max rel err = " << worst
        << (laws_ok ? ", laws hold" : ", LAW VIOLATION") << "\n";
    return ok;
}

bool buffer_suite(std::ostream& out) {
    PipelineConfig cfg = PipelineConfig::default_cnn();
    const long long occ_a = simulate_buffers(cfg, 256).total_max_occupancy();
    const long long occ_b = simulate_buffers(cfg, 1024).total_max_occupancy();
    const long long occ_c = simulate_buffers(cfg, 4096).total_max_occupancy();
    const bool invariant = occ_a == occ_b && occ_b == occ_c;
    const long long naive_a = simulate_buffers(cfg, 512, true).total_max_occupancy();
    const long long naive_b = simulate_buffers(cfg, 1024, true).total_max_occupancy();
    const double ratio = static_cast<double>(naive_b) / static_cast<double>(naive_a);
    const bool linear = ratio > 1.9 && ratio < 2.1;
    const bool ok = invariant && linear;
    out << (ok ? "[pass]" : "[FAIL]") << " buffers: pipelined occupancy " << occ_a << "/" << occ_b << "/"
        << occ_c << " words (N-invariant: " << (invariant ? "yes" : "NO") << "), naive doubling ratio "
        << ratio << "\n";
    return ok;
}

}  // namespace

bool run_selftest(std::ostream& out, const SelftestOptions& opts) {
    bool ok = true;
    ok = gradient_suite(out, opts.inject_wrong_flip) && ok;
    ok = conv_oracle_suite(out) && ok;
    ok = loss_suite(out) && ok;
    ok = buffer_suite(out) && ok;
    out << (ok ? "selftest: all suites passed\n" : "selftest: FAILURES detected\n");
    return ok;
}

}  // namespace eqsim
