#include "vpr/kmeans.hpp"

#include <limits>
#include <stdexcept>
#include <string>

#include "vpr/rng.hpp"

namespace vpr {
namespace {

double sq_dist(const double* a, const double* b, int dim) {
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace

KMeansResult kmeans(const std::vector<double>& points, int n, int dim, int k, uint64_t seed,
                    int max_iter) {
    if (n < 1 || dim < 1 || static_cast<int64_t>(n) * dim != static_cast<int64_t>(points.size())) {
        throw std::invalid_argument("kmeans: bad point matrix");
    }
    if (k < 1 || k > n) {
        throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " with " + std::to_string(n) +
                                    " points");
    }

    Rng rng = make_rng(seed, stream::kKmeans);
    KMeansResult res;
    res.k = k;
    res.dim = dim;
    res.centers.assign(static_cast<size_t>(k) * dim, 0.0);
    res.assignment.assign(n, -1);

    // k-means++ seeding.
    std::vector<double> best_d(n, std::numeric_limits<double>::max());
    {
        std::uniform_int_distribution<int> first(0, n - 1);
        int chosen = first(rng);
        for (int j = 0; j < dim; ++j) res.centers[j] = points[static_cast<size_t>(chosen) * dim + j];
        for (int c = 1; c < k; ++c) {
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                const double d = sq_dist(&points[static_cast<size_t>(i) * dim],
                                         &res.centers[static_cast<size_t>(c - 1) * dim], dim);
                if (d < best_d[i]) best_d[i] = d;
                total += best_d[i];
            }
            int next = 0;
            if (total > 0.0) {
                std::uniform_real_distribution<double> u(0.0, total);
                double target = u(rng);
                double run = 0.0;
                next = n - 1;
                for (int i = 0; i < n; ++i) {
                    run += best_d[i];
                    if (run >= target) {
                        next = i;
                        break;
                    }
                }
            } else {
                std::uniform_int_distribution<int> any(0, n - 1);
                next = any(rng);
            }
            for (int j = 0; j < dim; ++j) {
                res.centers[static_cast<size_t>(c) * dim + j] = points[static_cast<size_t>(next) * dim + j];
            }
        }
    }

    std::vector<double> sums(static_cast<size_t>(k) * dim);
    std::vector<int> counts(k);
    for (int iter = 0; iter < max_iter; ++iter) {
        // Assignment step; ties go to the lower cluster index.
        bool changed = false;
        double objective = 0.0;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = sq_dist(&points[static_cast<size_t>(i) * dim], &res.centers[0], dim);
            for (int c = 1; c < k; ++c) {
                const double d = sq_dist(&points[static_cast<size_t>(i) * dim],
                                         &res.centers[static_cast<size_t>(c) * dim], dim);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            objective += bd;
            if (res.assignment[i] != best) {
                res.assignment[i] = best;
                changed = true;
            }
        }
        res.objective_history.push_back(objective);
        res.objective = objective;
        if (!changed && iter > 0) break;

        // Update step.
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) {
            const int c = res.assignment[i];
            counts[c]++;
            for (int j = 0; j < dim; ++j) sums[static_cast<size_t>(c) * dim + j] += points[static_cast<size_t>(i) * dim + j];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Re-seed an empty cluster to the point farthest from its center.
                int far = 0;
                double fd = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d = sq_dist(&points[static_cast<size_t>(i) * dim],
                                             &res.centers[static_cast<size_t>(res.assignment[i]) * dim], dim);
                    if (d > fd) {
                        fd = d;
                        far = i;
                    }
                }
                for (int j = 0; j < dim; ++j) {
                    res.centers[static_cast<size_t>(c) * dim + j] = points[static_cast<size_t>(far) * dim + j];
                }
            } else {
                for (int j = 0; j < dim; ++j) {
                    res.centers[static_cast<size_t>(c) * dim + j] =
                        sums[static_cast<size_t>(c) * dim + j] / counts[c];
                }
            }
        }
    }
    return res;
}

}  // namespace vpr
