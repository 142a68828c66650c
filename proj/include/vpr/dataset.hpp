#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vpr/tensor.hpp"

namespace vpr {

enum class Split { Database, Query };

// Synthetic place-recognition data: each place is a procedural base pattern,
// each view a perturbed rendering of it. Database views double as the
// training pool; every query place is present in the database.
struct PlaceDataset {
    int channels = 0;
    int height = 0;
    int width = 0;
    int num_places = 0;
    std::vector<Tensor> images;  // [C,H,W], values in [0,1]
    std::vector<int> place_ids;
    std::vector<Split> splits;

    std::vector<int> database_indices() const;
    std::vector<int> query_indices() const;
};

struct DatasetOptions {
    int places = 32;
    int views = 16;
    int image_size = 32;
    int channels = 3;
    double noise_sigma = 0.03;        // additive Gaussian, capped at 0.05
    double translation_frac = 0.10;   // max shift as a fraction of width
    double brightness_jitter = 0.10;
    double contrast_jitter = 0.10;
};

PlaceDataset generate_place_dataset(const DatasetOptions& options, uint64_t seed);

// Per place: the first db_views shuffled views become database rows, the next
// query_views become queries, any remainder stays in the database pool.
void split_dataset(PlaceDataset& ds, int db_views, int query_views, uint64_t seed);

// Binary export: one tensor file per image (magic "VPRT", u32 dim count, u32
// extents, little-endian float32 payload) plus a manifest.tsv mapping each
// filename to its place id and split.
void export_dataset(const PlaceDataset& ds, const std::string& dir);
PlaceDataset load_dataset(const std::string& dir);

}  // namespace vpr
