#pragma once

#include <cstdint>
#include <vector>

namespace vpr {

struct KMeansResult {
    int k = 0;
    int dim = 0;
    std::vector<double> centers;     // k x dim, row-major
    std::vector<int> assignment;     // per point
    double objective = 0.0;          // sum of squared distances at convergence
    std::vector<double> objective_history;  // one entry per Lloyd iteration
};

// Lloyd iterations from k-means++ seeding. Deterministic for a fixed seed;
// an emptied cluster is re-seeded to the point farthest from its center.
KMeansResult kmeans(const std::vector<double>& points, int n, int dim, int k, uint64_t seed,
                    int max_iter = 100);

}  // namespace vpr
