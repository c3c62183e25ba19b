#pragma once

#include <Eigen/Dense>

namespace eqsim {

enum class LossVariant { Mse, UnsupPam2, UnsupPam4 };

// Training objective. The unsupervised variants operate on output statistics
// only; constellation holds the equalizer's target points.
struct LossKind {
    LossVariant variant = LossVariant::Mse;
    Eigen::ArrayXd constellation;
    double mu = 4.0;
    // Divide by the sequence length so gradient magnitudes do not scale with
    // N. Kept off when checking the literal formulas.
    bool normalize = true;

    void validate() const;
};

struct LossResult {
    double loss = 0.0;
    Eigen::ArrayXd dz;
};

// Mean-square error with gradient 2(z - x)/N.
LossResult mse_loss(const Eigen::ArrayXd& z, const Eigen::ArrayXd& target);

// p(z) = prod_i (z - A_i)^2; zero exactly at the constellation points.
double poly_push(double z, const Eigen::ArrayXd& points);

// loss_a + mu * |d_1 - d_2| with d_i the accumulated |z_n - A_i|.
LossResult unsup_loss_pam2(const Eigen::ArrayXd& z, const Eigen::ArrayXd& points, double mu,
                           bool normalize = false);

// c(A_i) = sum_{j != i} |A_i - A_j|.
double c_weight(const Eigen::ArrayXd& points, int index);

// Four-point variant; d_2 and d_3 enter loss_b scaled by 3/2 to compensate
// their smaller c(A_i).
LossResult unsup_loss_pam4(const Eigen::ArrayXd& z, const Eigen::ArrayXd& points, double mu,
                           bool normalize = false);

// Dispatch on kind; target may be empty for the unsupervised variants.
LossResult evaluate_loss(const LossKind& kind, const Eigen::ArrayXd& z, const Eigen::ArrayXd& target);

}  // namespace eqsim
