#include "eqsim/modulation.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace eqsim {

int ModulationScheme::bits_per_symbol() const {
    return std::bit_width(static_cast<unsigned>(order)) - 1;
}

Eigen::ArrayXd ModulationScheme::sld_levels() const {
    return tx_amplitudes.square();
}

void ModulationScheme::validate() const {
    if (order != 2 && order != 4) throw std::invalid_argument("modulation order must be 2 or 4");
    if (tx_amplitudes.size() != order || target_levels.size() != order)
        throw std::invalid_argument("alphabet size must equal the modulation order");
    for (int i = 1; i < order; ++i) {
        if (!(tx_amplitudes[i] > tx_amplitudes[i - 1]) || !(target_levels[i] > target_levels[i - 1]))
            throw std::invalid_argument("alphabets must be strictly increasing");
    }
    if (static_cast<int>(bit_mapping.size()) != order)
        throw std::invalid_argument("bit mapping must cover every symbol");
    std::uint32_t seen = 0;
    for (auto b : bit_mapping) {
        if (b >= static_cast<std::uint32_t>(order)) throw std::invalid_argument("bit pattern out of range");
        seen |= 1u << b;
    }
    if (seen != (1u << order) - 1) throw std::invalid_argument("bit mapping must be a bijection");
}

ModulationScheme ModulationScheme::pam(int order) {
    ModulationScheme m;
    m.order = order;
    if (order == 2) {
        m.tx_amplitudes = Eigen::ArrayXd{{0.0, 1.0}};
        m.target_levels = Eigen::ArrayXd{{-1.0, 1.0}};
        m.bit_mapping = {0u, 1u};
    } else if (order == 4) {
        m.tx_amplitudes = Eigen::ArrayXd{{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0}};
        m.target_levels = Eigen::ArrayXd{{-1.5, -0.5, 0.5, 1.5}};
        m.bit_mapping = {0b00u, 0b01u, 0b11u, 0b10u};  // Gray
    } else {
        throw std::invalid_argument("unsupported PAM order");
    }
    return m;
}

SymbolSequence hard_decision(const Eigen::ArrayXd& z, const Eigen::ArrayXd& levels) {
    SymbolSequence out(static_cast<std::size_t>(z.size()));
    const int m = static_cast<int>(levels.size());
    for (Eigen::Index n = 0; n < z.size(); ++n) {
        int best = 0;
        double best_dist = std::abs(z[n] - levels[0]);
        for (int i = 1; i < m; ++i) {
            const double d = std::abs(z[n] - levels[i]);
            if (d < best_dist) {  // strict: ties keep the smaller index
                best_dist = d;
                best = i;
            }
        }
        out[static_cast<std::size_t>(n)] = best;
    }
    return out;
}

double ber(const SymbolSequence& tx, const SymbolSequence& rx, const ModulationScheme& mod) {
    if (tx.size() != rx.size()) throw std::invalid_argument("ber: sequence length mismatch");
    const int bps = mod.bits_per_symbol();
    long long errors = 0;
    for (std::size_t n = 0; n < tx.size(); ++n) {
        const std::uint32_t diff = mod.bit_mapping[static_cast<std::size_t>(tx[n])] ^
                                   mod.bit_mapping[static_cast<std::size_t>(rx[n])];
        errors += std::popcount(diff);
    }
    return static_cast<double>(errors) / (static_cast<double>(tx.size()) * bps);
}

}  // namespace eqsim
