#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace eqsim {

using SymbolSequence = std::vector<int>;

// PAM alphabet for the IM/DD link. Transmit amplitudes are nonnegative
// (intensity modulation); the equalizer trains toward a zero-mean target
// constellation with unit spacing between adjacent PAM-4 levels and the
// classic {-1,+1} pair for PAM-2.
struct ModulationScheme {
    int order = 2;                          // M
    Eigen::ArrayXd tx_amplitudes;           // strictly increasing, >= 0
    Eigen::ArrayXd target_levels;           // equalizer target constellation
    std::vector<std::uint32_t> bit_mapping; // symbol index -> bit pattern

    int bits_per_symbol() const;
    // Levels seen at the square-law detector output for an ISI-free chain.
    Eigen::ArrayXd sld_levels() const;
    void validate() const;

    static ModulationScheme pam(int order);
};

// Nearest-level decision; ties resolve toward the smaller index.
SymbolSequence hard_decision(const Eigen::ArrayXd& z, const Eigen::ArrayXd& levels);

// Bit error rate under the scheme's bit mapping (Gray for PAM-4).
double ber(const SymbolSequence& tx, const SymbolSequence& rx, const ModulationScheme& mod);

}  // namespace eqsim
