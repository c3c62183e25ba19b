#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "eqsim/losses.hpp"
#include "eqsim/rng.hpp"

using namespace eqsim;

namespace {
const Eigen::ArrayXd kPam2{{-1.0, 1.0}};
const Eigen::ArrayXd kPam4Unit{{0.0, 1.0, 2.0, 3.0}};

bool near_any_kink(double z, const Eigen::ArrayXd& points, double tol = 1e-4) {
    for (Eigen::Index i = 0; i < points.size(); ++i)
        if (std::abs(z - points[i]) < tol) return true;
    return false;
}
}  // namespace

TEST_CASE("mse_loss value and gradient") {
    Eigen::ArrayXd z(1), x(1);
    z << 1.0;
    x << 0.0;
    const LossResult r = mse_loss(z, x);
    CHECK(r.loss == 1.0);
    CHECK(r.dz[0] == 2.0);

    const LossResult zero = mse_loss(x, x);
    CHECK(zero.loss == 0.0);
    CHECK(zero.dz.abs().maxCoeff() == 0.0);

    auto rng = make_engine(1);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    Eigen::ArrayXd zz(8), xx(8);
    for (int i = 0; i < 8; ++i) {
        zz[i] = dist(rng);
        xx[i] = dist(rng);
    }
    const LossResult rr = mse_loss(zz, xx);
    const double h = 1e-7;
    for (int i = 0; i < 8; ++i) {
        Eigen::ArrayXd plus = zz, minus = zz;
        plus[i] += h;
        minus[i] -= h;
        const double fd = (mse_loss(plus, xx).loss - mse_loss(minus, xx).loss) / (2 * h);
        CHECK(rr.dz[i] == doctest::Approx(fd).epsilon(1e-8));
    }

    Eigen::ArrayXd bad(3);
    CHECK_THROWS_AS(mse_loss(zz, bad), std::invalid_argument);
}

TEST_CASE("poly_push roots and values") {
    CHECK(poly_push(0.0, kPam2) == 1.0);  // (0+1)^2 (0-1)^2
    CHECK(poly_push(1.0, kPam2) == 0.0);
    CHECK(poly_push(-1.0, kPam2) == 0.0);
    CHECK(poly_push(1.5, kPam4Unit) == doctest::Approx(0.31640625).epsilon(1e-15));
    auto rng = make_engine(2);
    std::uniform_real_distribution<double> dist(-4.0, 4.0);
    for (int i = 0; i < 100; ++i) CHECK(poly_push(dist(rng), kPam4Unit) >= 0.0);
}

TEST_CASE("unsup_loss_pam2 values at the paper's anchor points") {
    Eigen::ArrayXd balanced(2);
    balanced << -1.0, 1.0;
    const LossResult ok = unsup_loss_pam2(balanced, kPam2, 4.0);
    CHECK(ok.loss == 0.0);

    // collapse onto one constellation point: loss_a = 0, loss_b = 4 => total 4*mu
    Eigen::ArrayXd collapsed(2);
    collapsed << 1.0, 1.0;
    const LossResult bad = unsup_loss_pam2(collapsed, kPam2, 4.0);
    CHECK(bad.loss == doctest::Approx(16.0));
    const LossResult bad_mu1 = unsup_loss_pam2(collapsed, kPam2, 1.0);
    CHECK(bad_mu1.loss == doctest::Approx(4.0));
}

TEST_CASE("unsup_loss_pam2 gradient vs finite differences away from kinks") {
    auto rng = make_engine(3);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    const double h = 1e-6;
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + trial % 8;
        Eigen::ArrayXd z(n);
        for (int i = 0; i < n; ++i) z[i] = dist(rng);
        const LossResult r = unsup_loss_pam2(z, kPam2, 4.0);
        double d1 = 0, d2 = 0;
        for (int i = 0; i < n; ++i) {
            d1 += std::abs(z[i] - kPam2[0]);
            d2 += std::abs(z[i] - kPam2[1]);
        }
        if (std::abs(d1 - d2) < 1e-4) continue;  // |d1-d2| kink
        for (int i = 0; i < n; ++i) {
            if (near_any_kink(z[i], kPam2)) continue;
            Eigen::ArrayXd plus = z, minus = z;
            plus[i] += h;
            minus[i] -= h;
            const double fd =
                (unsup_loss_pam2(plus, kPam2, 4.0).loss - unsup_loss_pam2(minus, kPam2, 4.0).loss) / (2 * h);
            worst = std::max(worst, std::abs(fd - r.dz[i]) / std::max(1.0, std::abs(fd)));
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("c_weight distances") {
    CHECK(c_weight(kPam4Unit, 1) == 4.0);  // 1 + 1 + 2
    CHECK(c_weight(kPam4Unit, 2) == 4.0);
    CHECK(c_weight(kPam4Unit, 0) == 6.0);  // 1 + 2 + 3
    CHECK(c_weight(kPam4Unit, 3) == 6.0);
    Eigen::ArrayXd spaced(4);
    spaced << 0.0, 2.0, 4.0, 6.0;
    CHECK(c_weight(spaced, 0) == 12.0);  // 2 + 4 + 6
    CHECK(c_weight(spaced, 0) == c_weight(spaced, 3));
    Eigen::ArrayXd targets(4);
    targets << -1.5, -0.5, 0.5, 1.5;
    CHECK(c_weight(targets, 0) == c_weight(targets, 3));
}

TEST_CASE("unsup_loss_pam4 equidistribution and collapse") {
    // one output on each constellation point: d = (6,4,4,6), every loss_b term zero
    const LossResult perfect = unsup_loss_pam4(kPam4Unit, kPam4Unit, 4.0);
    CHECK(perfect.loss == 0.0);

    Eigen::ArrayXd collapsed = Eigen::ArrayXd::Zero(4);  // all at A_1
    const LossResult bad = unsup_loss_pam4(collapsed, kPam4Unit, 4.0);
    CHECK(bad.loss > 0.0);
    // loss_a alone is still zero there
    CHECK(unsup_loss_pam4(collapsed, kPam4Unit, 0.0).loss == 0.0);
}

TEST_CASE("unsup_loss_pam4 gradient vs finite differences away from kinks") {
    auto rng = make_engine(4);
    std::uniform_real_distribution<double> dist(-1.0, 4.0);
    const double h = 1e-6;
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + trial % 8;
        Eigen::ArrayXd z(n);
        for (int i = 0; i < n; ++i) z[i] = dist(rng);
        Eigen::Array4d d = Eigen::Array4d::Zero();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 4; ++j) d[j] += std::abs(z[i] - kPam4Unit[j]);
        const double terms[] = {d[0] - d[3], 1.5 * d[1] - 1.5 * d[2], d[0] - 1.5 * d[1], d[3] - 1.5 * d[2]};
        bool near_term_kink = false;
        for (double t : terms) near_term_kink = near_term_kink || std::abs(t) < 1e-4;
        if (near_term_kink) continue;
        const LossResult r = unsup_loss_pam4(z, kPam4Unit, 4.0);
        for (int i = 0; i < n; ++i) {
            if (near_any_kink(z[i], kPam4Unit)) continue;
            Eigen::ArrayXd plus = z, minus = z;
            plus[i] += h;
            minus[i] -= h;
            const double fd = (unsup_loss_pam4(plus, kPam4Unit, 4.0).loss -
                               unsup_loss_pam4(minus, kPam4Unit, 4.0).loss) /
                              (2 * h);
            worst = std::max(worst, std::abs(fd - r.dz[i]) / std::max(1.0, std::abs(fd)));
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("loss_a law: zero exactly on the constellation") {
    auto rng = make_engine(5);
    std::uniform_int_distribution<int> pick(0, 3);
    Eigen::ArrayXd z(16);
    for (int i = 0; i < 16; ++i) z[i] = kPam4Unit[pick(rng)];
    CHECK(unsup_loss_pam4(z, kPam4Unit, 0.0).loss == 0.0);
    z[7] += 1e-3;
    CHECK(unsup_loss_pam4(z, kPam4Unit, 0.0).loss > 1e-12);
}

TEST_CASE("loss_b is permutation invariant") {
    auto rng = make_engine(6);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    Eigen::ArrayXd z(8);
    for (int i = 0; i < 8; ++i) z[i] = dist(rng);
    Eigen::ArrayXd shuffled = z;
    std::shuffle(shuffled.data(), shuffled.data() + 8, rng);
    CHECK(unsup_loss_pam2(z, kPam2, 4.0).loss ==
          doctest::Approx(unsup_loss_pam2(shuffled, kPam2, 4.0).loss).epsilon(1e-12));
}

TEST_CASE("pam2 loss_b vanishes for outputs symmetric about the midpoint") {
    Eigen::ArrayXd z(4);
    z << -1.7, -0.3, 0.3, 1.7;  // symmetric about 0
    double d1 = 0, d2 = 0;
    for (int i = 0; i < 4; ++i) {
        d1 += std::abs(z[i] + 1.0);
        d2 += std::abs(z[i] - 1.0);
    }
    CHECK(d1 == doctest::Approx(d2));
    CHECK(unsup_loss_pam2(z, kPam2, 4.0).loss ==
          doctest::Approx(unsup_loss_pam2(z, kPam2, 0.0).loss).epsilon(1e-12));
}

TEST_CASE("joint scaling homogeneity") {
    auto rng = make_engine(7);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    Eigen::ArrayXd z(6);
    for (int i = 0; i < 6; ++i) z[i] = dist(rng);
    const double s = 1.7;

    // PAM-2: loss_a scales by s^4, loss_b by s
    const double a1 = unsup_loss_pam2(z, kPam2, 0.0).loss;
    const double a2 = unsup_loss_pam2(s * z, Eigen::ArrayXd(s * kPam2), 0.0).loss;
    CHECK(a2 == doctest::Approx(std::pow(s, 4) * a1).epsilon(1e-10));
    const double b1 = unsup_loss_pam2(z, kPam2, 1.0).loss - a1;
    const double b2 = unsup_loss_pam2(s * z, Eigen::ArrayXd(s * kPam2), 1.0).loss - a2;
    CHECK(b2 == doctest::Approx(s * b1).epsilon(1e-10));

    // PAM-4: loss_a scales by s^8
    Eigen::ArrayXd z4 = z + 1.5;
    const double c1 = unsup_loss_pam4(z4, kPam4Unit, 0.0).loss;
    const double c2 = unsup_loss_pam4(s * z4, Eigen::ArrayXd(s * kPam4Unit), 0.0).loss;
    CHECK(c2 == doctest::Approx(std::pow(s, 8) * c1).epsilon(1e-10));
}

TEST_CASE("normalized mode divides loss and gradient by N") {
    Eigen::ArrayXd z(4);
    z << 0.3, -0.4, 1.2, 0.9;
    const LossResult raw = unsup_loss_pam2(z, kPam2, 4.0, false);
    const LossResult norm = unsup_loss_pam2(z, kPam2, 4.0, true);
    CHECK(norm.loss == doctest::Approx(raw.loss / 4.0).epsilon(1e-14));
    CHECK((norm.dz - raw.dz / 4.0).abs().maxCoeff() < 1e-14);

    const LossResult raw4 = unsup_loss_pam4(z, kPam4Unit, 4.0, false);
    const LossResult norm4 = unsup_loss_pam4(z, kPam4Unit, 4.0, true);
    CHECK(norm4.loss == doctest::Approx(raw4.loss / 4.0).epsilon(1e-14));
    CHECK((norm4.dz - raw4.dz / 4.0).abs().maxCoeff() < 1e-14);
}
