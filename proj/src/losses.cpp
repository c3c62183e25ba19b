#include "eqsim/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace eqsim {

namespace {
double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}

void LossKind::validate() const {
    if (mu < 0.0) throw std::invalid_argument("loss: mu must be >= 0");
    if (variant == LossVariant::UnsupPam2 && constellation.size() != 2)
        throw std::invalid_argument("loss: PAM-2 needs 2 constellation points");
    if (variant == LossVariant::UnsupPam4 && constellation.size() != 4)
        throw std::invalid_argument("loss: PAM-4 needs 4 constellation points");
    for (Eigen::Index i = 1; i < constellation.size(); ++i)
        if (!(constellation[i] > constellation[i - 1]))
            throw std::invalid_argument("loss: constellation must be sorted ascending");
}

LossResult mse_loss(const Eigen::ArrayXd& z, const Eigen::ArrayXd& target) {
    if (z.size() != target.size()) throw std::invalid_argument("mse_loss: length mismatch");
    if (z.size() == 0) throw std::invalid_argument("mse_loss: empty input");
    const double n = static_cast<double>(z.size());
    const Eigen::ArrayXd diff = z - target;
    LossResult r;
    r.loss = diff.square().sum() / n;
    r.dz = 2.0 * diff / n;
    return r;
}

double poly_push(double z, const Eigen::ArrayXd& points) {
    double p = 1.0;
    for (Eigen::Index i = 0; i < points.size(); ++i) {
        const double d = z - points[i];
        p *= d * d;
    }
    return p;
}

LossResult unsup_loss_pam2(const Eigen::ArrayXd& z, const Eigen::ArrayXd& points, double mu,
                           bool normalize) {
    if (points.size() != 2) throw std::invalid_argument("unsup_loss_pam2: need exactly 2 points");
    if (z.size() == 0) throw std::invalid_argument("unsup_loss_pam2: empty input");
    const double a1 = points[0], a2 = points[1];
    double loss_a = 0.0, d1 = 0.0, d2 = 0.0;
    for (Eigen::Index n = 0; n < z.size(); ++n) {
        const double e1 = z[n] - a1, e2 = z[n] - a2;
        loss_a += e1 * e1 * e2 * e2;
        d1 += std::abs(e1);
        d2 += std::abs(e2);
    }
    const double sb = sgn(d1 - d2);
    Eigen::ArrayXd dz(z.size());
    for (Eigen::Index n = 0; n < z.size(); ++n) {
        const double e1 = z[n] - a1, e2 = z[n] - a2;
        const double da = 2.0 * e1 * e2 * (e1 + e2);
        const double db = sb * (sgn(e1) - sgn(e2));
        dz[n] = da + mu * db;
    }
    LossResult r;
    r.loss = loss_a + mu * std::abs(d1 - d2);
    if (normalize) {
        const double n = static_cast<double>(z.size());
        r.loss /= n;
        dz /= n;
    }
    r.dz = std::move(dz);
    return r;
}

double c_weight(const Eigen::ArrayXd& points, int index) {
    if (points.size() != 4) throw std::invalid_argument("c_weight: need 4 points");
    if (index < 0 || index >= 4) throw std::invalid_argument("c_weight: index out of range");
    double c = 0.0;
    for (int j = 0; j < 4; ++j)
        if (j != index) c += std::abs(points[index] - points[j]);
    return c;
}

LossResult unsup_loss_pam4(const Eigen::ArrayXd& z, const Eigen::ArrayXd& points, double mu,
                           bool normalize) {
    if (points.size() != 4) throw std::invalid_argument("unsup_loss_pam4: need exactly 4 points");
    if (z.size() == 0) throw std::invalid_argument("unsup_loss_pam4: empty input");
    double loss_a = 0.0;
    Eigen::Array4d d = Eigen::Array4d::Zero();
    for (Eigen::Index n = 0; n < z.size(); ++n) {
        double prod = 1.0;
        for (int i = 0; i < 4; ++i) {
            const double e = z[n] - points[i];
            prod *= e * e;
            d[i] += std::abs(e);
        }
        loss_a += prod;
    }
    // loss_b = |d1-d4| + |3/2 d2 - 3/2 d3| + |d1 - 3/2 d2| + |d4 - 3/2 d3|
    const double t1 = d[0] - d[3];
    const double t2 = 1.5 * d[1] - 1.5 * d[2];
    const double t3 = d[0] - 1.5 * d[1];
    const double t4 = d[3] - 1.5 * d[2];
    const double loss_b = std::abs(t1) + std::abs(t2) + std::abs(t3) + std::abs(t4);
    const double s1 = sgn(t1), s2 = sgn(t2), s3 = sgn(t3), s4 = sgn(t4);

    Eigen::ArrayXd dz(z.size());
    for (Eigen::Index n = 0; n < z.size(); ++n) {
        double e[4], sd[4];
        for (int i = 0; i < 4; ++i) {
            e[i] = z[n] - points[i];
            sd[i] = sgn(e[i]);
        }
        // d loss_a / dz via product rule, division-free at the roots.
        double p = 1.0, dp = 0.0;
        for (int i = 0; i < 4; ++i) {
            dp = dp * e[i] + p;
            p *= e[i];
        }
        const double da = 2.0 * p * dp;
        const double db = s1 * (sd[0] - sd[3]) + s2 * 1.5 * (sd[1] - sd[2]) + s3 * (sd[0] - 1.5 * sd[1]) +
                          s4 * (sd[3] - 1.5 * sd[2]);
        dz[n] = da + mu * db;
    }
    LossResult r;
    r.loss = loss_a + mu * loss_b;
    if (normalize) {
        const double n = static_cast<double>(z.size());
        r.loss /= n;
        dz /= n;
    }
    r.dz = std::move(dz);
    return r;
}

LossResult evaluate_loss(const LossKind& kind, const Eigen::ArrayXd& z, const Eigen::ArrayXd& target) {
    kind.validate();
    switch (kind.variant) {
        case LossVariant::Mse:
            return mse_loss(z, target);
        case LossVariant::UnsupPam2:
            return unsup_loss_pam2(z, kind.constellation, kind.mu, kind.normalize);
        case LossVariant::UnsupPam4:
            return unsup_loss_pam4(z, kind.constellation, kind.mu, kind.normalize);
    }
    throw std::logic_error("evaluate_loss: unknown variant");
}

}  // namespace eqsim
