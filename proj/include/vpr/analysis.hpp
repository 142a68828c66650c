#pragma once

#include <Eigen/Dense>
#include <vector>

namespace vpr {

struct PcaResult {
    Eigen::MatrixXd projection;               // N x target_dim scores
    std::vector<double> explained_variance;   // fraction per component, non-increasing
};

// Mean-centered projection onto the top principal directions (via SVD of the
// centered matrix). Requires 1 <= target_dim <= min(N, D).
PcaResult pca_project(const Eigen::MatrixXd& x, int target_dim);

struct ProcrustesResult {
    Eigen::MatrixXd rotation;     // d x d orthogonal (reflections allowed)
    double scale = 1.0;
    Eigen::RowVectorXd translation;
    double disparity = 0.0;       // sum of squared residuals after alignment
};

// Closed-form similarity transform minimizing |s*A*Q + t - B|_F^2, via SVD of
// the cross-covariance of the centered inputs. Throws on zero-variance A.
ProcrustesResult procrustes_align(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct AlignmentReport {
    Eigen::MatrixXd aligned_dense;  // N x d', dense embeddings after PCA + Procrustes
    Eigen::MatrixXd pruned;         // N x d'
    std::vector<double> residuals;  // |aligned_dense_i - pruned_i| per item
    double disparity = 0.0;
    double scale = 1.0;
    int max_residual_index = 0;
    int min_residual_index = 0;
};

// Projects the dense space down to the pruned dimension with PCA, then
// Procrustes-aligns it onto the pruned space.
AlignmentReport align_embeddings(const Eigen::MatrixXd& dense, const Eigen::MatrixXd& pruned);

// Item indices sorted by residual, descending; equal residuals keep their
// original relative order.
std::vector<int> residual_rank(const AlignmentReport& report);

}  // namespace vpr
