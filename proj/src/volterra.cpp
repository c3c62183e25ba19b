#include "eqsim/volterra.hpp"

#include <cmath>
#include <stdexcept>

#include "eqsim/modulation.hpp"
#include "eqsim/rng.hpp"

namespace eqsim {

int VolterraSpec::feature_count() const {
    const int f1 = memory[0], f2 = memory[1], f3 = memory[2];
    const int order2 = f2 * (f2 + 1) / 2;
    const int order3 = (f3 + 2) * (f3 + 1) * f3 / 6;  // C(F3+2, 3)
    return f1 + order2 + order3 + (include_bias ? 1 : 0);
}

void VolterraSpec::validate() const {
    const int f1 = memory[0], f2 = memory[1], f3 = memory[2];
    if (!(f1 >= f2 && f2 >= f3 && f3 > 0))
        throw std::invalid_argument("volterra: memory must satisfy F1 >= F2 >= F3 > 0");
    if (f1 % 2 == 0 || f2 % 2 == 0 || f3 % 2 == 0)
        throw std::invalid_argument("volterra: memories must be odd so windows are centered");
    if (weights.size() != 0 && weights.size() != feature_count())
        throw std::invalid_argument("volterra: weight length mismatch");
}

Eigen::VectorXd volterra_features(const Eigen::ArrayXd& window, const VolterraSpec& spec) {
    spec.validate();
    const int f1 = spec.memory[0], f2 = spec.memory[1], f3 = spec.memory[2];
    if (window.size() < f1) throw std::invalid_argument("volterra_features: window shorter than F1");
    const int center = static_cast<int>(window.size()) / 2;
    auto tap = [&](int offset) { return window[center + offset]; };

    Eigen::VectorXd phi(spec.feature_count());
    int idx = 0;
    const int h1 = f1 / 2, h2 = f2 / 2, h3 = f3 / 2;
    for (int i = -h1; i <= h1; ++i) phi[idx++] = tap(i);
    for (int i = -h2; i <= h2; ++i)
        for (int j = i; j <= h2; ++j) phi[idx++] = tap(i) * tap(j);
    for (int i = -h3; i <= h3; ++i)
        for (int j = i; j <= h3; ++j)
            for (int k = j; k <= h3; ++k) phi[idx++] = tap(i) * tap(j) * tap(k);
    if (spec.include_bias) phi[idx++] = 1.0;
    return phi;
}

namespace {

// Feature matrix for every symbol of an oversampled sequence, scaled.
Eigen::MatrixXd feature_matrix(const Eigen::ArrayXd& y, const VolterraSpec& spec) {
    const int sps = 2;
    const int n_sym = static_cast<int>(y.size()) / sps;
    const int f1 = spec.memory[0];
    const int h1 = f1 / 2;
    Eigen::MatrixXd phi(spec.feature_count(), n_sym);
    Eigen::ArrayXd window(f1);
    for (int s = 0; s < n_sym; ++s) {
        const int c = s * sps;
        for (int o = -h1; o <= h1; ++o) {
            const int x = c + o;
            window[o + h1] = (x >= 0 && x < y.size()) ? y[x] : 0.0;
        }
        phi.col(s) = volterra_features(window, spec);
    }
    if (spec.feature_scale.size() == phi.rows())
        phi.array().colwise() *= spec.feature_scale.array();
    return phi;
}

Eigen::ArrayXd targets_for(const SymbolSequence& x, const ModulationScheme& mod) {
    Eigen::ArrayXd t(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) t[static_cast<Eigen::Index>(i)] = mod.target_levels[x[i]];
    return t;
}

}  // namespace

Eigen::ArrayXd volterra_equalize(const Eigen::ArrayXd& y, const VolterraSpec& spec) {
    spec.validate();
    if (spec.weights.size() != spec.feature_count())
        throw std::invalid_argument("volterra_equalize: spec has no trained weights");
    const Eigen::MatrixXd phi = feature_matrix(y, spec);
    return (spec.weights.transpose() * phi).transpose().array();
}

void volterra_train(VolterraSpec& spec, const ChannelConfig& channel, const VolterraTrainOptions& opt) {
    if (opt.iterations <= 0) throw std::invalid_argument("volterra_train: iterations must be positive");
    spec.validate();
    channel.validate();
    const int n_features = spec.feature_count();
    if (spec.weights.size() != n_features) spec.weights = Eigen::VectorXd::Zero(n_features);

    // Per-feature unit-RMS standardization from a calibration sequence;
    // third-order monomials are otherwise orders of magnitude apart.
    {
        spec.feature_scale = Eigen::VectorXd::Ones(n_features);
        const auto syms = generate_symbols(opt.batch_symbols, channel.modulation, derive_seed(opt.seed, 0, 10));
        const Eigen::ArrayXd y = apply_channel(syms, channel, derive_seed(opt.seed, 0, 11));
        const Eigen::MatrixXd phi = feature_matrix(y, spec);
        for (int f = 0; f < n_features; ++f) {
            const double rms = std::sqrt(phi.row(f).squaredNorm() / static_cast<double>(phi.cols()));
            spec.feature_scale[f] = rms > 1e-12 ? 1.0 / rms : 1.0;
        }
    }

    for (int it = 0; it < opt.iterations; ++it) {
        const auto syms = generate_symbols(opt.batch_symbols, channel.modulation, derive_seed(opt.seed, it, 12));
        const Eigen::ArrayXd y = apply_channel(syms, channel, derive_seed(opt.seed, it, 13));
        const Eigen::MatrixXd phi = feature_matrix(y, spec);
        const Eigen::ArrayXd target = targets_for(syms, channel.modulation);
        const Eigen::ArrayXd out = (spec.weights.transpose() * phi).transpose().array();
        const Eigen::ArrayXd err = out - target;
        const double loss = err.square().mean();
        if (!std::isfinite(loss))
            throw std::runtime_error("volterra_train: loss diverged at iteration " + std::to_string(it));
        const Eigen::VectorXd grad = phi * (2.0 * err / static_cast<double>(err.size())).matrix();
        spec.weights -= opt.lr * grad;
    }
}

double volterra_evaluate_ber(const VolterraSpec& spec, const ChannelConfig& channel, int n_symbols,
                             std::uint64_t seed) {
    const auto tx = generate_symbols(n_symbols, channel.modulation, derive_seed(seed, 0, 3));
    const Eigen::ArrayXd y = apply_channel(tx, channel, derive_seed(seed, 0, 4));
    const Eigen::ArrayXd z = volterra_equalize(y, spec);
    const auto rx = hard_decision(z, channel.modulation.target_levels);
    return ber(tx, rx, channel.modulation);
}

}  // namespace eqsim
