#include "eqsim/channel.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "eqsim/rng.hpp"

namespace eqsim {

namespace {
constexpr double kSpeedOfLight = 299792458.0;  // m/s

int next_pow2(int n) {
    int p = 1;
    while (p < n) p *= 2;
    return p;
}
}  // namespace

double FiberParams::beta2_s2_m() const {
    const double lambda_m = wavelength_nm * 1e-9;
    const double d_si = dispersion_ps_nm_km * 1e-12 / (1e-9 * 1e3);  // s/m^2
    return -lambda_m * lambda_m * d_si / (2.0 * std::numbers::pi * kSpeedOfLight);
}

double FiberParams::attenuation_np_m() const {
    // dB/km -> Np/m
    return attenuation_db_km * std::log(10.0) / 10.0 / 1e3;
}

void FiberParams::validate() const {
    if (!(length_km >= 0.0)) throw std::invalid_argument("fiber length must be >= 0");
    if (!(wavelength_nm > 0.0)) throw std::invalid_argument("wavelength must be positive");
    if (!(attenuation_db_km >= 0.0)) throw std::invalid_argument("attenuation must be >= 0");
}

int ChannelConfig::filter_memory_samples() const {
    const int rc_len = pulse_shape == PulseShape::Impulse ? 1 : rc_span_symbols * oversampling + 1;
    // Dispersion-induced delay spread D * L * dLambda over the sampled bandwidth.
    const double lambda_m = fiber.wavelength_nm * 1e-9;
    const double dlambda_m = lambda_m * lambda_m / kSpeedOfLight * sample_rate_hz();
    const double spread_s =
        std::abs(fiber.dispersion_ps_nm_km) * 1e-12 / (1e-9 * 1e3) * (fiber.length_km * 1e3) * dlambda_m;
    const int spread_samples = static_cast<int>(std::ceil(spread_s * sample_rate_hz()));
    return rc_len + spread_samples;
}

int ChannelConfig::auto_fft_size(int n_samples) const {
    return next_pow2(n_samples + 4 * filter_memory_samples());
}

void ChannelConfig::validate() const {
    fiber.validate();
    modulation.validate();
    if (oversampling != 2) throw std::invalid_argument("oversampling is fixed at 2 samples/symbol");
    if (!(symbol_rate_gbd > 0.0)) throw std::invalid_argument("symbol rate must be positive");
    if (!(rc_rolloff > 0.0 && rc_rolloff <= 1.0)) throw std::invalid_argument("rc_rolloff must be in (0,1]");
    if (rc_span_symbols <= 0 || rc_span_symbols % 2 == 0)
        throw std::invalid_argument("rc_span_symbols must be odd and positive");
    if (std::isnan(snr_db)) throw std::invalid_argument("snr_db must not be NaN");
    if (fft_size != 0 && (fft_size & (fft_size - 1)) != 0)
        throw std::invalid_argument("fft_size must be a power of two");
}

Eigen::ArrayXd rc_taps(double rolloff, int span_symbols, int sps) {
    if (!(rolloff > 0.0 && rolloff <= 1.0)) throw std::invalid_argument("rc_taps: rolloff must be in (0,1]");
    if (span_symbols <= 0) throw std::invalid_argument("rc_taps: span must be positive");
    const int n_taps = span_symbols * sps + 1;
    const int center = span_symbols * sps / 2;
    Eigen::ArrayXd h(n_taps);
    const double pi = std::numbers::pi;
    for (int i = 0; i < n_taps; ++i) {
        const double t = static_cast<double>(i - center) / sps;  // symbol units
        if (t == 0.0) {
            h[i] = 1.0;
            continue;
        }
        const double den = 1.0 - (2.0 * rolloff * t) * (2.0 * rolloff * t);
        const double sinc = std::sin(pi * t) / (pi * t);
        if (std::abs(den) < 1e-10) {
            // t = +-T/(2*rolloff): analytic limit of the 0/0 form.
            h[i] = (pi / 4.0) * std::sin(pi / (2.0 * rolloff)) / (pi / (2.0 * rolloff));
        } else {
            h[i] = sinc * std::cos(pi * rolloff * t) / den;
        }
    }
    return h;
}

Eigen::ArrayXcd cd_frequency_response(const FiberParams& fiber, const Eigen::ArrayXd& freq_hz) {
    const double beta2 = fiber.beta2_s2_m();
    const double length_m = fiber.length_km * 1e3;
    const double loss = -0.5 * fiber.attenuation_np_m() * length_m;
    const double pi2 = 2.0 * std::numbers::pi * std::numbers::pi;
    Eigen::ArrayXcd h(freq_hz.size());
    for (Eigen::Index i = 0; i < freq_hz.size(); ++i) {
        const double phase = pi2 * beta2 * freq_hz[i] * freq_hz[i] * length_m;
        h[i] = std::exp(std::complex<double>(loss, phase));
    }
    return h;
}

SymbolSequence generate_symbols(int n, const ModulationScheme& mod, std::uint64_t seed) {
    if (n <= 0) throw std::invalid_argument("generate_symbols: n must be positive");
    auto rng = make_engine(seed);
    std::uniform_int_distribution<int> dist(0, mod.order - 1);
    SymbolSequence out(static_cast<std::size_t>(n));
    for (auto& s : out) s = dist(rng);
    return out;
}

Eigen::ArrayXd awgn(const Eigen::ArrayXd& s, double snr_db, std::uint64_t seed) {
    if (s.size() == 0) throw std::invalid_argument("awgn: empty input");
    if (std::isinf(snr_db) && snr_db > 0) return s;
    const double p_sig = s.square().mean();
    const double sigma = std::sqrt(p_sig / std::pow(10.0, snr_db / 10.0));
    auto rng = make_engine(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    Eigen::ArrayXd out(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) out[i] = s[i] + gauss(rng);
    return out;
}

Eigen::ArrayXd apply_channel(const SymbolSequence& x, const ChannelConfig& cfg, std::uint64_t seed,
                             ChannelTrace* trace) {
    cfg.validate();
    const int n_sym = static_cast<int>(x.size());
    if (n_sym == 0) throw std::invalid_argument("apply_channel: empty symbol sequence");
    const int sps = cfg.oversampling;
    const int n_samples = n_sym * sps;

    // Map indices to amplitudes and upsample by zero-stuffing.
    Eigen::ArrayXd up = Eigen::ArrayXd::Zero(n_samples);
    for (int k = 0; k < n_sym; ++k) up[k * sps] = cfg.modulation.tx_amplitudes[x[static_cast<std::size_t>(k)]];

    // Pulse shaping, same-length centered convolution (correlation with the
    // reversed taps over a zero-padded copy; RC taps are symmetric anyway).
    Eigen::ArrayXd shaped;
    if (cfg.pulse_shape == PulseShape::Impulse) {
        shaped = up;
    } else {
        const Eigen::ArrayXd h = rc_taps(cfg.rc_rolloff, cfg.rc_span_symbols, sps);
        const int n_taps = static_cast<int>(h.size());
        const int h_center = n_taps / 2;
        const Eigen::VectorXd hr = h.reverse().matrix();
        Eigen::VectorXd padded = Eigen::VectorXd::Zero(n_samples + n_taps - 1);
        padded.segment(n_taps - 1 - h_center, n_samples) = up.matrix();
        shaped.resize(n_samples);
        for (int n = 0; n < n_samples; ++n) shaped[n] = hr.dot(padded.segment(n, n_taps));
    }

    // Chromatic dispersion in the frequency domain.
    Eigen::ArrayXcd field_full;
    Eigen::ArrayXcd field(n_samples);
    const bool fiber_active = cfg.fiber.length_km > 0.0;
    if (fiber_active) {
        const int needed = n_samples + cfg.filter_memory_samples();
        const int nfft = cfg.fft_size > 0 ? cfg.fft_size : cfg.auto_fft_size(n_samples);
        if (nfft < needed)
            throw std::invalid_argument("apply_channel: fft_size too small for sequence plus channel memory");
        Eigen::VectorXcd padded = Eigen::VectorXcd::Zero(nfft);
        for (int n = 0; n < n_samples; ++n) padded[n] = shaped[n];
        Eigen::FFT<double> fft;
        Eigen::VectorXcd spectrum(nfft);
        fft.fwd(spectrum, padded);
        const double fs = cfg.sample_rate_hz();
        Eigen::ArrayXd grid(nfft);
        for (int k = 0; k < nfft; ++k) {
            const int k_signed = k < nfft / 2 ? k : k - nfft;
            grid[k] = fs * static_cast<double>(k_signed) / nfft;
        }
        const Eigen::ArrayXcd h_cd = cd_frequency_response(cfg.fiber, grid);
        spectrum.array() *= h_cd;
        Eigen::VectorXcd out(nfft);
        fft.inv(out, spectrum);
        field_full = out.array();
        field = field_full.head(n_samples);
    } else {
        field = shaped.cast<std::complex<double>>();
        field_full = field;
    }

    // Square-law detector, then thermal noise.
    Eigen::ArrayXd sld = field.abs2();
    Eigen::ArrayXd received = awgn(sld, cfg.snr_db, seed);

    if (trace) {
        trace->upsampled = std::move(up);
        trace->shaped = std::move(shaped);
        trace->fiber_full = std::move(field_full);
        trace->fiber = std::move(field);
        trace->sld = std::move(sld);
        trace->received = received;
    }
    return received;
}

}  // namespace eqsim
