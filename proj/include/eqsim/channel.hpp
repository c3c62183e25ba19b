#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>

#include "eqsim/modulation.hpp"

namespace eqsim {

struct FiberParams {
    double dispersion_ps_nm_km = 17.0;  // D_cd
    double attenuation_db_km = 0.2;     // alpha
    double length_km = 30.0;            // L_f
    double wavelength_nm = 1550.0;      // lambda

    // beta2 = -lambda^2 D / (2 pi c), in s^2/m.
    double beta2_s2_m() const;
    double attenuation_np_m() const;
    void validate() const;
};

enum class PulseShape { RaisedCosine, Impulse };

struct ChannelConfig {
    FiberParams fiber;
    ModulationScheme modulation = ModulationScheme::pam(2);
    double symbol_rate_gbd = 25.0;
    int oversampling = 2;        // fixed at 2 samples/symbol
    PulseShape pulse_shape = PulseShape::RaisedCosine;
    double rc_rolloff = 0.2;     // in (0, 1]
    int rc_span_symbols = 15;    // odd
    double snr_db = 20.0;        // +inf disables noise
    int fft_size = 0;            // 0 = choose automatically

    double sample_rate_hz() const { return symbol_rate_gbd * 1e9 * oversampling; }
    // Channel memory in samples (pulse shaping plus dispersion spread).
    int filter_memory_samples() const;
    // Smallest valid power-of-two transform for n_samples, including guard.
    int auto_fft_size(int n_samples) const;
    void validate() const;
};

// Raised-cosine impulse response, peak-normalized, span*sps + 1 taps.
Eigen::ArrayXd rc_taps(double rolloff, int span_symbols, int sps);

// H_cd(f) = exp(-alpha*L/2 + j*2*pi^2*beta2*f^2*L) on the given grid.
Eigen::ArrayXcd cd_frequency_response(const FiberParams& fiber, const Eigen::ArrayXd& freq_hz);

SymbolSequence generate_symbols(int n, const ModulationScheme& mod, std::uint64_t seed);

// Adds AWGN with variance P_sig / 10^(snr_db/10); P_sig is the mean square of s.
Eigen::ArrayXd awgn(const Eigen::ArrayXd& s, double snr_db, std::uint64_t seed);

// Intermediate signals, mostly for tests and range profiling. fiber_full is the
// whole FFT window before truncation so energy checks can use Parseval.
struct ChannelTrace {
    Eigen::ArrayXd upsampled;
    Eigen::ArrayXd shaped;
    Eigen::ArrayXcd fiber_full;
    Eigen::ArrayXcd fiber;
    Eigen::ArrayXd sld;
    Eigen::ArrayXd received;
};

// Full transmitter -> fiber -> square-law detector -> AWGN chain.
// Returns N * oversampling received samples.
Eigen::ArrayXd apply_channel(const SymbolSequence& x, const ChannelConfig& cfg, std::uint64_t seed,
                             ChannelTrace* trace = nullptr);

}  // namespace eqsim
