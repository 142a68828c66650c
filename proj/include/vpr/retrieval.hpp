#pragma once

#include <functional>
#include <vector>

#include "vpr/dataset.hpp"
#include "vpr/model.hpp"

namespace vpr {

// The "map": one l2-normalized float32 descriptor per database image.
struct EmbeddingMap {
    int dim = 0;
    std::vector<float> data;  // N x dim, row-major
    std::vector<int> place_ids;

    int size() const { return static_cast<int>(place_ids.size()); }
    const float* row(int i) const { return data.data() + static_cast<int64_t>(i) * dim; }
};

EmbeddingMap build_map(const Model& model, const PlaceDataset& ds);

struct Match {
    int index = 0;
    float similarity = 0.0f;
};

// Exact brute-force top-k by inner product, descending; ties break toward the
// lower index. Requires k <= map size and matching dimensions.
std::vector<Match> match(const EmbeddingMap& map, const std::vector<float>& query, int k);

// Fraction of queries whose top-k results contain their place id.
double recall_at_k(const EmbeddingMap& map, const std::vector<std::vector<float>>& queries,
                   const std::vector<int>& query_place_ids, int k);

int64_t model_memory_bytes(const Model& model);  // parameter count * 4
int64_t map_memory_bytes(const EmbeddingMap& map);  // N * dim * 4

struct LatencyStats {
    double median_ms = 0.0;
    double p95_ms = 0.0;
};

LatencyStats measure_latency(const std::function<void()>& fn, int warmup, int trials);

struct EvalProtocol {
    int warmup = 10;
    int trials = 50;
};

struct ResourceReport {
    int round = 0;
    double backbone_sparsity = 0.0;
    double agg_sparsity = 0.0;
    int descriptor_dim = 0;
    int64_t param_count = 0;
    double model_mib = 0.0;
    double map_mib = 0.0;
    double extract_ms = 0.0;  // environment-dependent
    double match_ms = 0.0;    // environment-dependent
    double recall_at_1 = 0.0;
    double recall_at_5 = 0.0;
    double recall_at_10 = 0.0;
};

ResourceReport evaluate_model(const Model& model, const PlaceDataset& ds, const EvalProtocol& protocol,
                              int round = 0, double backbone_sparsity = 0.0, double agg_sparsity = 0.0);

// Pixel-space cosine nearest-neighbor recall@1, the sanity baseline a
// trained model has to beat.
double pixel_baseline_recall_at_1(const PlaceDataset& ds);

extern const char* kReportCsvHeader;
std::string report_csv_row(const ResourceReport& report);
void write_reports_csv(const std::string& path, const std::vector<ResourceReport>& reports);

}  // namespace vpr
