#include "vpr/retrieval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

namespace vpr {

EmbeddingMap build_map(const Model& model, const PlaceDataset& ds) {
    const auto indices = ds.database_indices();
    if (indices.empty()) throw std::invalid_argument("build_map: empty database");
    EmbeddingMap map;
    map.dim = model.descriptor_dim();
    map.data.resize(static_cast<size_t>(indices.size()) * map.dim);
    map.place_ids.reserve(indices.size());
    for (size_t i = 0; i < indices.size(); ++i) {
        Tensor d = model.forward(nullptr, ds.images[indices[i]]);
        std::copy_n(d.data(), map.dim, map.data.data() + i * map.dim);
        map.place_ids.push_back(ds.place_ids[indices[i]]);
    }
    return map;
}

std::vector<Match> match(const EmbeddingMap& map, const std::vector<float>& query, int k) {
    if (static_cast<int>(query.size()) != map.dim) {
        throw std::invalid_argument("match: query dim " + std::to_string(query.size()) +
                                    " != map dim " + std::to_string(map.dim));
    }
    const int n = map.size();
    if (k < 1 || k > n) {
        throw std::invalid_argument("match: k=" + std::to_string(k) + " outside 1.." + std::to_string(n));
    }
    std::vector<double> sims(n);
    for (int i = 0; i < n; ++i) {
        const float* row = map.row(i);
        double acc = 0.0;
        for (int j = 0; j < map.dim; ++j) acc += static_cast<double>(row[j]) * query[j];
        sims[i] = acc;
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&sims](int a, int b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return a < b;
    });
    std::vector<Match> out(k);
    for (int i = 0; i < k; ++i) out[i] = {order[i], static_cast<float>(sims[order[i]])};
    return out;
}

double recall_at_k(const EmbeddingMap& map, const std::vector<std::vector<float>>& queries,
                   const std::vector<int>& query_place_ids, int k) {
    if (queries.size() != query_place_ids.size()) {
        throw std::invalid_argument("recall_at_k: queries and place ids disagree");
    }
    if (queries.empty()) return 0.0;
    int hits = 0;
    for (size_t q = 0; q < queries.size(); ++q) {
        const auto top = match(map, queries[q], k);
        for (const auto& m : top) {
            if (map.place_ids[m.index] == query_place_ids[q]) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(queries.size());
}

int64_t model_memory_bytes(const Model& model) { return model.parameter_count() * 4; }

int64_t map_memory_bytes(const EmbeddingMap& map) {
    return static_cast<int64_t>(map.size()) * map.dim * 4;
}

LatencyStats measure_latency(const std::function<void()>& fn, int warmup, int trials) {
    if (trials < 1) throw std::invalid_argument("measure_latency: trials must be >= 1");
    if (warmup < 0) throw std::invalid_argument("measure_latency: warmup must be >= 0");
    for (int i = 0; i < warmup; ++i) fn();
    std::vector<double> samples(trials);
    for (int i = 0; i < trials; ++i) {
        const auto start = std::chrono::steady_clock::now();
        fn();
        const auto stop = std::chrono::steady_clock::now();
        samples[i] = std::chrono::duration<double, std::milli>(stop - start).count();
    }
    std::sort(samples.begin(), samples.end());
    LatencyStats stats;
    stats.median_ms = trials % 2 == 1 ? samples[trials / 2]
                                      : 0.5 * (samples[trials / 2 - 1] + samples[trials / 2]);
    const int p95 = std::min(trials - 1, static_cast<int>(std::ceil(0.95 * trials)) - 1);
    stats.p95_ms = samples[std::max(0, p95)];
    return stats;
}

ResourceReport evaluate_model(const Model& model, const PlaceDataset& ds, const EvalProtocol& protocol,
                              int round, double backbone_sparsity, double agg_sparsity) {
    EmbeddingMap map = build_map(model, ds);

    const auto query_idx = ds.query_indices();
    std::vector<std::vector<float>> queries;
    std::vector<int> query_places;
    for (int qi : query_idx) {
        Tensor d = model.forward(nullptr, ds.images[qi]);
        queries.emplace_back(d.values());
        query_places.push_back(ds.place_ids[qi]);
    }

    ResourceReport report;
    report.round = round;
    report.backbone_sparsity = backbone_sparsity;
    report.agg_sparsity = agg_sparsity;
    report.descriptor_dim = map.dim;
    report.param_count = model.parameter_count();
    report.model_mib = static_cast<double>(model_memory_bytes(model)) / (1024.0 * 1024.0);
    report.map_mib = static_cast<double>(map_memory_bytes(map)) / (1024.0 * 1024.0);
    if (!queries.empty()) {
        const int n = map.size();
        report.recall_at_1 = recall_at_k(map, queries, query_places, std::min(1, n));
        report.recall_at_5 = recall_at_k(map, queries, query_places, std::min(5, n));
        report.recall_at_10 = recall_at_k(map, queries, query_places, std::min(10, n));

        const Tensor& probe_image = ds.images[query_idx[0]];
        report.extract_ms = measure_latency([&]() { model.forward(nullptr, probe_image); },
                                            protocol.warmup, protocol.trials)
                                .median_ms;
        const std::vector<float>& probe_query = queries[0];
        report.match_ms = measure_latency([&]() { match(map, probe_query, 1); }, protocol.warmup,
                                          protocol.trials)
                              .median_ms;
    }
    return report;
}

double pixel_baseline_recall_at_1(const PlaceDataset& ds) {
    EmbeddingMap map;
    map.dim = static_cast<int>(ds.images.empty() ? 0 : ds.images[0].size());
    const auto db = ds.database_indices();
    map.data.resize(static_cast<size_t>(db.size()) * map.dim);
    for (size_t i = 0; i < db.size(); ++i) {
        const float* src = ds.images[db[i]].data();
        double norm = 0.0;
        for (int j = 0; j < map.dim; ++j) norm += static_cast<double>(src[j]) * src[j];
        norm = std::sqrt(std::max(norm, 1e-12));
        for (int j = 0; j < map.dim; ++j) {
            map.data[i * map.dim + j] = static_cast<float>(src[j] / norm);
        }
        map.place_ids.push_back(ds.place_ids[db[i]]);
    }
    std::vector<std::vector<float>> queries;
    std::vector<int> places;
    for (int qi : ds.query_indices()) {
        std::vector<float> q(ds.images[qi].data(), ds.images[qi].data() + map.dim);
        double norm = 0.0;
        for (float v : q) norm += static_cast<double>(v) * v;
        norm = std::sqrt(std::max(norm, 1e-12));
        for (auto& v : q) v = static_cast<float>(v / norm);
        queries.push_back(std::move(q));
        places.push_back(ds.place_ids[qi]);
    }
    return recall_at_k(map, queries, places, 1);
}

const char* kReportCsvHeader =
    "round,backbone_sparsity,agg_sparsity,descriptor_dim,param_count,model_mib,map_mib,"
    "extract_ms,match_ms,recall_at_1,recall_at_5,recall_at_10";

std::string report_csv_row(const ResourceReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%d,%lld,%.6f,%.6f,%.4f,%.4f,%.6f,%.6f,%.6f",
                  r.round, r.backbone_sparsity, r.agg_sparsity, r.descriptor_dim,
                  static_cast<long long>(r.param_count), r.model_mib, r.map_mib, r.extract_ms,
                  r.match_ms, r.recall_at_1, r.recall_at_5, r.recall_at_10);
    return buf;
}

void write_reports_csv(const std::string& path, const std::vector<ResourceReport>& reports) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# extract_ms and match_ms are environment-dependent; all other columns are\n"
           "# reproducible for a fixed config and seed.\n";
    out << kReportCsvHeader << '\n';
    for (const auto& r : reports) out << report_csv_row(r) << '\n';
}

}  // namespace vpr
