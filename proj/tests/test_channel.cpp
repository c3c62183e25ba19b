#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "eqsim/channel.hpp"
#include "eqsim/rng.hpp"

using namespace eqsim;

namespace {

// Textbook raised-cosine evaluation, written independently of rc_taps.
double rc_reference(double t, double alpha) {
    const double pi = std::numbers::pi;
    if (t == 0.0) return 1.0;
    const double limit_t = 1.0 / (2.0 * alpha);
    if (std::abs(std::abs(t) - limit_t) < 1e-12)
        return (pi / 4.0) * std::sin(pi * limit_t) / (pi * limit_t);
    return std::sin(pi * t) / (pi * t) * std::cos(pi * alpha * t) / (1.0 - 4.0 * alpha * alpha * t * t);
}

}  // namespace

TEST_CASE("generate_symbols determinism and range") {
    const auto mod2 = ModulationScheme::pam(2);
    const auto a = generate_symbols(4, mod2, 42);
    const auto b = generate_symbols(4, mod2, 42);
    CHECK(a == b);
    CHECK(generate_symbols(4, mod2, 43) != a);

    const auto mod4 = ModulationScheme::pam(4);
    const auto one = generate_symbols(1, mod4, 7);
    REQUIRE(one.size() == 1);
    CHECK(one[0] >= 0);
    CHECK(one[0] < 4);

    CHECK_THROWS_AS(generate_symbols(0, mod2, 1), std::invalid_argument);
}

TEST_CASE("generate_symbols is close to uniform") {
    const auto mod = ModulationScheme::pam(2);
    const auto syms = generate_symbols(100000, mod, 5);
    int ones = 0;
    for (int s : syms) ones += s;
    const double freq = static_cast<double>(ones) / 100000.0;
    CHECK(freq > 0.48);
    CHECK(freq < 0.52);
}

TEST_CASE("rc_taps peak, Nyquist zeros, and formula") {
    const int sps = 2;
    const Eigen::ArrayXd h = rc_taps(0.2, 15, sps);
    REQUIRE(h.size() == 15 * sps + 1);
    const int center = 15 * sps / 2;
    CHECK(h[center] == 1.0);
    for (int k = 1; k <= 7; ++k) {
        CHECK(std::abs(h[center + k * sps]) < 1e-12);
        CHECK(std::abs(h[center - k * sps]) < 1e-12);
    }
    // symmetry
    for (int i = 0; i < h.size(); ++i) CHECK(h[i] == doctest::Approx(h[h.size() - 1 - i]).epsilon(1e-14));

    // pointwise against the textbook formula, including the singular samples
    const Eigen::ArrayXd g = rc_taps(1.0, 8, sps);
    REQUIRE(g.size() == 8 * sps + 1);
    const int gc = 8 * sps / 2;
    for (int i = 0; i < g.size(); ++i) {
        const double t = static_cast<double>(i - gc) / sps;
        CHECK(g[i] == doctest::Approx(rc_reference(t, 1.0)).epsilon(1e-12));
    }
    // rolloff 0.25 puts the singularity exactly on the grid at t = 2
    const Eigen::ArrayXd s = rc_taps(0.25, 9, sps);
    const int sc = 9 * sps / 2;
    CHECK(std::isfinite(s[sc + 2 * sps]));
    CHECK(s[sc + 2 * sps] == doctest::Approx(rc_reference(2.0, 0.25)).epsilon(1e-12));
}

TEST_CASE("cd_frequency_response: dc value, beta2, symmetry, all-pass") {
    FiberParams fiber;
    fiber.dispersion_ps_nm_km = 17.0;
    fiber.attenuation_db_km = 0.2;
    fiber.length_km = 30.0;
    fiber.wavelength_nm = 1550.0;

    // beta2 = -lambda^2 D / (2 pi c), computed with independent constants:
    // (1550e-9)^2 * 17e-6 / (2*pi*299792458) = 2.168263e-26 s^2/m
    CHECK(fiber.beta2_s2_m() == doctest::Approx(-2.168263e-26).epsilon(1e-5));

    Eigen::ArrayXd grid(5);
    grid << -20e9, -5e9, 0.0, 5e9, 20e9;
    const Eigen::ArrayXcd h = cd_frequency_response(fiber, grid);
    const double expected_dc = std::exp(-0.5 * (0.2 * std::log(10.0) / 10.0 / 1e3) * 30e3);
    CHECK(h[2].real() == doctest::Approx(expected_dc).epsilon(1e-12));
    CHECK(h[2].imag() == doctest::Approx(0.0));
    // f^2 symmetry
    CHECK(std::abs(h[0] - h[4]) < 1e-15);
    CHECK(std::abs(h[1] - h[3]) < 1e-15);
    // phase-only dispersion: constant magnitude
    for (int i = 0; i < 5; ++i) CHECK(std::abs(h[i]) == doctest::Approx(expected_dc).epsilon(1e-12));

    // phase at one frequency against a hand-evaluated expression
    const double f = 12.5e9;
    Eigen::ArrayXd one(1);
    one << f;
    const auto hf = cd_frequency_response(fiber, one);
    const double phase = 2.0 * std::numbers::pi * std::numbers::pi * fiber.beta2_s2_m() * f * f * 30e3;
    CHECK(std::arg(hf[0]) == doctest::Approx(std::remainder(phase, 2 * std::numbers::pi)).epsilon(1e-9));
}

TEST_CASE("apply_channel degenerate chain is the squared upsampled alphabet") {
    ChannelConfig cfg;
    cfg.modulation = ModulationScheme::pam(2);
    cfg.fiber.length_km = 0.0;
    cfg.pulse_shape = PulseShape::Impulse;
    cfg.snr_db = std::numeric_limits<double>::infinity();
    const SymbolSequence x = {0, 1, 1, 0};
    const Eigen::ArrayXd y = apply_channel(x, cfg, 1);
    REQUIRE(y.size() == 8);
    const double a0 = cfg.modulation.tx_amplitudes[0], a1 = cfg.modulation.tx_amplitudes[1];
    CHECK(y[0] == a0 * a0);
    CHECK(y[2] == a1 * a1);
    CHECK(y[4] == a1 * a1);
    CHECK(y[6] == a0 * a0);
    CHECK(y[1] == 0.0);
    CHECK(y[3] == 0.0);
}

TEST_CASE("apply_channel conserves power through a lossless fiber") {
    ChannelConfig cfg;
    cfg.fiber.attenuation_db_km = 0.0;
    cfg.snr_db = std::numeric_limits<double>::infinity();
    const auto x = generate_symbols(256, cfg.modulation, 3);
    ChannelTrace trace;
    apply_channel(x, cfg, 3, &trace);
    // Parseval over the whole transform window: |H| = 1 keeps the energy.
    const double p_in = trace.shaped.square().sum();
    const double p_out = trace.fiber_full.abs2().sum();
    CHECK(p_out == doctest::Approx(p_in).epsilon(1e-9));
}

TEST_CASE("apply_channel matches a straight-line scripted oracle") {
    ChannelConfig cfg;
    cfg.modulation = ModulationScheme::pam(2);
    cfg.symbol_rate_gbd = 25.0;
    cfg.snr_db = 20.0;
    cfg.fft_size = 4096;
    const int n = 512;
    const std::uint64_t seed = 11;
    const auto x = generate_symbols(n, cfg.modulation, 99);
    const Eigen::ArrayXd got = apply_channel(x, cfg, seed);

    // Oracle: re-derive every step with plain loops and a direct DFT.
    const int sps = 2;
    const int ns = n * sps;
    std::vector<double> up(static_cast<std::size_t>(ns), 0.0);
    for (int k = 0; k < n; ++k) up[static_cast<std::size_t>(k * sps)] = cfg.modulation.tx_amplitudes[x[static_cast<std::size_t>(k)]];

    const int span = cfg.rc_span_symbols;
    const int n_taps = span * sps + 1;
    const int hc = span * sps / 2;
    std::vector<double> shaped(static_cast<std::size_t>(ns), 0.0);
    for (int i = 0; i < ns; ++i) {
        double acc = 0.0;
        for (int k = 0; k < n_taps; ++k) {
            const int j = i + hc - k;
            if (j >= 0 && j < ns) acc += rc_reference(static_cast<double>(k - hc) / sps, cfg.rc_rolloff) * up[static_cast<std::size_t>(j)];
        }
        shaped[static_cast<std::size_t>(i)] = acc;
    }

    const int nfft = cfg.fft_size;
    const double fs = cfg.symbol_rate_gbd * 1e9 * sps;
    const double c_light = 299792458.0;
    const double lambda = cfg.fiber.wavelength_nm * 1e-9;
    const double beta2 = -lambda * lambda * (cfg.fiber.dispersion_ps_nm_km * 1e-6) /
                         (2.0 * std::numbers::pi * c_light);
    const double alpha_np_m = cfg.fiber.attenuation_db_km * std::log(10.0) / 10.0 / 1e3;
    const double length_m = cfg.fiber.length_km * 1e3;

    using cplx = std::complex<double>;
    std::vector<cplx> spectrum(static_cast<std::size_t>(nfft), cplx(0, 0));
    for (int k = 0; k < nfft; ++k) {
        cplx acc(0, 0);
        for (int i = 0; i < ns; ++i) {
            const double ang = -2.0 * std::numbers::pi * k * i / nfft;
            acc += shaped[static_cast<std::size_t>(i)] * cplx(std::cos(ang), std::sin(ang));
        }
        spectrum[static_cast<std::size_t>(k)] = acc;
    }
    for (int k = 0; k < nfft; ++k) {
        const int ks = k < nfft / 2 ? k : k - nfft;
        const double f = fs * static_cast<double>(ks) / nfft;
        const double phase = 2.0 * std::numbers::pi * std::numbers::pi * beta2 * f * f * length_m;
        const cplx h = std::exp(cplx(-0.5 * alpha_np_m * length_m, phase));
        spectrum[static_cast<std::size_t>(k)] *= h;
    }
    std::vector<double> sld(static_cast<std::size_t>(ns), 0.0);
    for (int i = 0; i < ns; ++i) {
        cplx acc(0, 0);
        for (int k = 0; k < nfft; ++k) {
            const double ang = 2.0 * std::numbers::pi * k * i / nfft;
            acc += spectrum[static_cast<std::size_t>(k)] * cplx(std::cos(ang), std::sin(ang));
        }
        acc /= static_cast<double>(nfft);
        sld[static_cast<std::size_t>(i)] = std::norm(acc);
    }
    Eigen::ArrayXd oracle = Eigen::Map<Eigen::ArrayXd>(sld.data(), ns);
    oracle = awgn(oracle, cfg.snr_db, seed);  // same noise stream as the chain

    REQUIRE(got.size() == oracle.size());
    const double got_var = (got - got.mean()).square().mean();
    const double oracle_var = (oracle - oracle.mean()).square().mean();
    CHECK(got_var == doctest::Approx(oracle_var).epsilon(1e-6));
    CHECK((got - oracle).abs().maxCoeff() < 1e-9);
}

TEST_CASE("apply_channel rejects an undersized transform") {
    ChannelConfig cfg;
    cfg.fft_size = 512;
    const auto x = generate_symbols(512, cfg.modulation, 1);  // needs >= 1024 + guard
    CHECK_THROWS_AS(apply_channel(x, cfg, 1), std::invalid_argument);
}

TEST_CASE("sld output is nonnegative before noise") {
    ChannelConfig cfg;
    const auto x = generate_symbols(128, cfg.modulation, 17);
    ChannelTrace trace;
    apply_channel(x, cfg, 17, &trace);
    CHECK(trace.sld.minCoeff() >= 0.0);
}

TEST_CASE("awgn sentinel, variance and seeding") {
    Eigen::ArrayXd s = Eigen::ArrayXd::Constant(100000, 2.0);
    const Eigen::ArrayXd same = awgn(s, std::numeric_limits<double>::infinity(), 1);
    CHECK((same - s).abs().maxCoeff() == 0.0);

    // 0 dB: noise variance equals the mean square of the input
    const Eigen::ArrayXd noisy = awgn(s, 0.0, 2);
    const Eigen::ArrayXd diff = noisy - s;
    const double var = (diff - diff.mean()).square().mean();
    CHECK(var == doctest::Approx(4.0).epsilon(0.05));

    const Eigen::ArrayXd other = awgn(s, 0.0, 3);
    CHECK((other - noisy).abs().maxCoeff() > 0.0);
}

TEST_CASE("hard_decision nearest level with low tie-break") {
    Eigen::ArrayXd levels(2);
    levels << -1.0, 1.0;
    Eigen::ArrayXd z(2);
    z << 0.9, -1.2;
    const auto idx = hard_decision(z, levels);
    CHECK(idx == SymbolSequence{1, 0});

    Eigen::ArrayXd mid(1);
    mid << 0.0;  // exactly between the levels
    CHECK(hard_decision(mid, levels)[0] == 0);

    // brute force over all constellation points
    auto rng = make_engine(5);
    std::uniform_real_distribution<double> dist(-4.0, 4.0);
    Eigen::ArrayXd lv4(4);
    lv4 << -1.5, -0.5, 0.5, 1.5;
    Eigen::ArrayXd zr(200);
    for (int i = 0; i < 200; ++i) zr[i] = dist(rng);
    const auto got = hard_decision(zr, lv4);
    for (int i = 0; i < 200; ++i) {
        int best = 0;
        for (int m = 1; m < 4; ++m)
            if (std::abs(zr[i] - lv4[m]) < std::abs(zr[i] - lv4[best])) best = m;
        CHECK(got[static_cast<std::size_t>(i)] == best);
    }
}

TEST_CASE("ber counts bit errors under the mapping") {
    const auto mod2 = ModulationScheme::pam(2);
    const SymbolSequence tx = {0, 1, 1, 0};
    CHECK(ber(tx, tx, mod2) == 0.0);

    const auto mod4 = ModulationScheme::pam(4);
    SymbolSequence t4(100, 1), r4(100, 1);
    r4[17] = 2;  // adjacent level, Gray: one bit in two
    CHECK(ber(t4, r4, mod4) == doctest::Approx(1.0 / 200.0));

    // per-bit brute force oracle
    auto rng = make_engine(8);
    std::uniform_int_distribution<int> sym(0, 3);
    SymbolSequence a(500), b(500);
    for (int i = 0; i < 500; ++i) {
        a[static_cast<std::size_t>(i)] = sym(rng);
        b[static_cast<std::size_t>(i)] = sym(rng);
    }
    long long errors = 0;
    for (int i = 0; i < 500; ++i) {
        const std::uint32_t ba = mod4.bit_mapping[static_cast<std::size_t>(a[static_cast<std::size_t>(i)])];
        const std::uint32_t bb = mod4.bit_mapping[static_cast<std::size_t>(b[static_cast<std::size_t>(i)])];
        for (int bit = 0; bit < 2; ++bit) errors += ((ba >> bit) & 1u) != ((bb >> bit) & 1u) ? 1 : 0;
    }
    CHECK(ber(a, b, mod4) == doctest::Approx(static_cast<double>(errors) / 1000.0));

    SymbolSequence short_rx = {0};
    CHECK_THROWS_AS(ber(tx, short_rx, mod2), std::invalid_argument);
}

TEST_CASE("closed-loop sanity: noiseless impulse chain decides perfectly") {
    ChannelConfig cfg;
    cfg.modulation = ModulationScheme::pam(4);
    cfg.fiber.length_km = 0.0;
    cfg.pulse_shape = PulseShape::Impulse;
    cfg.snr_db = std::numeric_limits<double>::infinity();
    const auto tx = generate_symbols(512, cfg.modulation, 23);
    const Eigen::ArrayXd y = apply_channel(tx, cfg, 23);
    Eigen::ArrayXd symbol_samples(512);
    for (int k = 0; k < 512; ++k) symbol_samples[k] = y[2 * k];
    const auto rx = hard_decision(symbol_samples, cfg.modulation.sld_levels());
    CHECK(ber(tx, rx, cfg.modulation) == 0.0);
}

TEST_CASE("apply_channel is bitwise deterministic") {
    ChannelConfig cfg;
    const auto x = generate_symbols(256, cfg.modulation, 77);
    const Eigen::ArrayXd y1 = apply_channel(x, cfg, 77);
    const Eigen::ArrayXd y2 = apply_channel(x, cfg, 77);
    CHECK((y1 == y2).all());
}
