#include "vpr/analysis.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace vpr {

PcaResult pca_project(const Eigen::MatrixXd& x, int target_dim) {
    const int n = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    if (target_dim < 1 || target_dim > std::min(n, d)) {
        throw std::invalid_argument("pca_project: target dim " + std::to_string(target_dim) +
                                    " outside 1..min(" + std::to_string(n) + "," + std::to_string(d) + ")");
    }
    Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);

    const auto& sv = svd.singularValues();
    double total = 0.0;
    for (int i = 0; i < sv.size(); ++i) total += sv[i] * sv[i];

    PcaResult result;
    result.projection = centered * svd.matrixV().leftCols(target_dim);
    result.explained_variance.resize(target_dim);
    for (int i = 0; i < target_dim; ++i) {
        result.explained_variance[i] = total > 0.0 ? sv[i] * sv[i] / total : 0.0;
    }
    return result;
}

ProcrustesResult procrustes_align(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("procrustes: shapes disagree");
    }
    if (a.rows() < a.cols()) {
        throw std::invalid_argument("procrustes: need at least as many rows as columns");
    }
    Eigen::RowVectorXd mean_a = a.colwise().mean();
    Eigen::RowVectorXd mean_b = b.colwise().mean();
    Eigen::MatrixXd ac = a.rowwise() - mean_a;
    Eigen::MatrixXd bc = b.rowwise() - mean_b;

    const double norm_a_sq = ac.squaredNorm();
    if (norm_a_sq < 1e-24) throw std::invalid_argument("procrustes: degenerate zero-variance input");

    Eigen::MatrixXd cross = ac.transpose() * bc;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);

    ProcrustesResult result;
    result.rotation = svd.matrixU() * svd.matrixV().transpose();
    result.scale = svd.singularValues().sum() / norm_a_sq;
    result.translation = mean_b - result.scale * (mean_a * result.rotation);
    result.disparity = (result.scale * ac * result.rotation - bc).squaredNorm();
    return result;
}

AlignmentReport align_embeddings(const Eigen::MatrixXd& dense, const Eigen::MatrixXd& pruned) {
    if (dense.rows() != pruned.rows()) {
        throw std::invalid_argument("align_embeddings: row counts disagree");
    }
    if (pruned.cols() > dense.cols()) {
        throw std::invalid_argument("align_embeddings: pruned space is wider than the dense space");
    }
    const int target = static_cast<int>(pruned.cols());
    PcaResult pca = pca_project(dense, target);
    ProcrustesResult fit = procrustes_align(pca.projection, pruned);

    AlignmentReport report;
    report.aligned_dense =
        (fit.scale * pca.projection * fit.rotation).rowwise() + fit.translation;
    report.pruned = pruned;
    report.disparity = fit.disparity;
    report.scale = fit.scale;
    report.residuals.resize(dense.rows());
    for (int i = 0; i < dense.rows(); ++i) {
        report.residuals[i] = (report.aligned_dense.row(i) - pruned.row(i)).norm();
    }
    const auto minmax = std::minmax_element(report.residuals.begin(), report.residuals.end());
    report.min_residual_index = static_cast<int>(minmax.first - report.residuals.begin());
    report.max_residual_index = static_cast<int>(minmax.second - report.residuals.begin());
    return report;
}

std::vector<int> residual_rank(const AlignmentReport& report) {
    std::vector<int> order(report.residuals.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&report](int a, int b) {
        return report.residuals[a] > report.residuals[b];
    });
    return order;
}

}  // namespace vpr
