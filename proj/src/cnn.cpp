#include "eqsim/cnn.hpp"

#include <cmath>
#include <stdexcept>

#include "eqsim/rng.hpp"

namespace eqsim {

int Cnn::parameter_count() const {
    int n = 0;
    for (const auto& s : specs) n += s.weight_count();
    return n;
}

void Cnn::validate() const {
    if (specs.size() != weights.size()) throw std::invalid_argument("cnn: specs/weights mismatch");
    for (std::size_t l = 0; l < specs.size(); ++l) {
        specs[l].validate();
        if (static_cast<int>(weights[l].size()) != specs[l].out_channels)
            throw std::invalid_argument("cnn: weight tensor shape mismatch");
        for (const auto& block : weights[l])
            if (block.rows() != specs[l].in_channels || block.cols() != specs[l].kernel)
                throw std::invalid_argument("cnn: weight tensor shape mismatch");
        if (l > 0 && specs[l].in_channels != specs[l - 1].out_channels)
            throw std::invalid_argument("cnn: channel chain mismatch");
    }
}

Cnn make_default_cnn(std::uint64_t seed) {
    Cnn cnn;
    cnn.specs = {
        {.in_channels = 1, .out_channels = 3, .kernel = 21, .padding = 10, .stride = 1, .relu = true},
        {.in_channels = 3, .out_channels = 3, .kernel = 21, .padding = 10, .stride = 1, .relu = true},
        {.in_channels = 3, .out_channels = 1, .kernel = 21, .padding = 10, .stride = 2, .relu = false},
    };
    auto rng = make_engine(seed);
    for (const auto& spec : cnn.specs) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in_channels * spec.kernel));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Kernel k(static_cast<std::size_t>(spec.out_channels));
        for (auto& block : k) {
            block.resize(spec.in_channels, spec.kernel);
            for (int ci = 0; ci < spec.in_channels; ++ci)
                for (int t = 0; t < spec.kernel; ++t) block(ci, t) = dist(rng);
        }
        cnn.weights.push_back(std::move(k));
    }
    return cnn;
}

Eigen::ArrayXd cnn_forward(const Cnn& cnn, const Eigen::ArrayXd& y, ForwardCache* cache) {
    cnn.validate();
    if (y.size() == 0 || y.size() % 2 != 0)
        throw std::invalid_argument("cnn_forward: input length must be even and nonzero");
    FeatureMap fm(1, y.size());
    fm.row(0) = y.transpose();
    if (cache) {
        cache->inputs.clear();
        cache->preacts.clear();
    }
    for (std::size_t l = 0; l < cnn.specs.size(); ++l) {
        const auto& spec = cnn.specs[l];
        if (cache) cache->inputs.push_back(fm);
        FeatureMap pre = conv1d_forward_linear(fm, spec, cnn.weights[l]);
        if (spec.relu) {
            if (cache) cache->preacts.push_back(pre);
            fm = pre.cwiseMax(0.0);
        } else {
            if (cache) cache->preacts.emplace_back();
            fm = std::move(pre);
        }
    }
    if (fm.rows() != 1) throw std::logic_error("cnn_forward: final layer must have one channel");
    if (cache) cache->out_len = static_cast<int>(fm.cols());
    return fm.row(0).transpose().array();
}

GradientSet cnn_backward(const Cnn& cnn, const ForwardCache& cache, const Eigen::ArrayXd& dz) {
    cnn.validate();
    if (cache.inputs.size() != cnn.specs.size() || cache.preacts.size() != cnn.specs.size())
        throw std::invalid_argument("cnn_backward: cache does not match the model");
    if (static_cast<int>(dz.size()) != cache.out_len)
        throw std::invalid_argument("cnn_backward: dz length does not match the cached forward pass");

    GradientSet grads;
    grads.kernels.resize(cnn.specs.size());
    FeatureMap grad(1, dz.size());
    grad.row(0) = dz.transpose();
    for (int l = static_cast<int>(cnn.specs.size()) - 1; l >= 0; --l) {
        const auto& spec = cnn.specs[static_cast<std::size_t>(l)];
        const FeatureMap& input = cache.inputs[static_cast<std::size_t>(l)];
        if (spec.relu)
            grad = relu_backward(cache.preacts[static_cast<std::size_t>(l)], grad);
        grads.kernels[static_cast<std::size_t>(l)] = conv1d_kernel_grad(input, grad, spec);
        if (l > 0)  // the first layer never needs its input gradient
            grad = conv1d_input_grad(grad, spec, cnn.weights[static_cast<std::size_t>(l)],
                                     static_cast<int>(input.cols()));
    }
    return grads;
}

void sgd_step(Cnn& cnn, const GradientSet& grads, double lr) {
    if (lr < 0.0) throw std::invalid_argument("sgd_step: lr must be >= 0");
    if (grads.kernels.size() != cnn.weights.size())
        throw std::invalid_argument("sgd_step: gradient/model mismatch");
    for (std::size_t l = 0; l < cnn.weights.size(); ++l)
        for (std::size_t co = 0; co < cnn.weights[l].size(); ++co)
            cnn.weights[l][co] -= lr * grads.kernels[l][co];
}

static Eigen::ArrayXd targets_for(const SymbolSequence& x, const ModulationScheme& mod) {
    Eigen::ArrayXd t(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) t[static_cast<Eigen::Index>(i)] = mod.target_levels[x[i]];
    return t;
}

TrainStats train(Cnn& cnn, const ChannelConfig& channel, const LossKind& loss, const TrainOptions& opt) {
    if (opt.iterations <= 0) throw std::invalid_argument("train: iterations must be positive");
    if (opt.batch_symbols <= 0) throw std::invalid_argument("train: batch_symbols must be positive");
    channel.validate();
    loss.validate();
    TrainStats stats;
    for (int it = 0; it < opt.iterations; ++it) {
        const auto syms = generate_symbols(opt.batch_symbols, channel.modulation, derive_seed(opt.seed, it, 1));
        const Eigen::ArrayXd y = apply_channel(syms, channel, derive_seed(opt.seed, it, 2));
        ForwardCache cache;
        const Eigen::ArrayXd z = cnn_forward(cnn, y, &cache);
        const Eigen::ArrayXd target =
            loss.variant == LossVariant::Mse ? targets_for(syms, channel.modulation) : Eigen::ArrayXd();
        const LossResult res = evaluate_loss(loss, z, target);
        if (!std::isfinite(res.loss))
            throw std::runtime_error("train: loss diverged (non-finite) at iteration " + std::to_string(it));
        const GradientSet grads = cnn_backward(cnn, cache, res.dz);
        sgd_step(cnn, grads, opt.lr);
        if (it == 0) stats.first_loss = res.loss;
        stats.last_loss = res.loss;
    }
    return stats;
}

SymbolSequence cnn_decide(const Cnn& cnn, const Eigen::ArrayXd& y, const ModulationScheme& mod) {
    return hard_decision(cnn_forward(cnn, y), mod.target_levels);
}

double evaluate_ber(const Cnn& cnn, const ChannelConfig& channel, int n_symbols, std::uint64_t seed) {
    const auto tx = generate_symbols(n_symbols, channel.modulation, derive_seed(seed, 0, 3));
    const Eigen::ArrayXd y = apply_channel(tx, channel, derive_seed(seed, 0, 4));
    const auto rx = cnn_decide(cnn, y, channel.modulation);
    return ber(tx, rx, channel.modulation);
}

}  // namespace eqsim
