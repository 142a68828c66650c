#include "vpr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace vpr {
namespace {

constexpr char kTensorMagic[4] = {'V', 'P', 'R', 'T'};

// Oriented gratings plus a Gaussian blob field, rescaled to [0,1].
std::vector<float> base_pattern(int size, Rng& rng) {
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::uniform_real_distribution<double> freq(1.5, 5.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> amp(0.4, 1.0);
    std::uniform_real_distribution<double> pos(0.0, size - 1.0);
    std::uniform_real_distribution<double> width(size / 12.0, size / 5.0);
    std::uniform_real_distribution<double> blob_amp(-1.0, 1.0);

    struct Grating {
        double fx, fy, phi, a;
    };
    struct Blob {
        double cx, cy, s, a;
    };
    std::vector<Grating> gratings;
    for (int g = 0; g < 3; ++g) {
        const double th = angle(rng), f = freq(rng);
        gratings.push_back({f * std::cos(th) / size, f * std::sin(th) / size, phase(rng), amp(rng)});
    }
    std::vector<Blob> blobs;
    for (int b = 0; b < 4; ++b) blobs.push_back({pos(rng), pos(rng), width(rng), blob_amp(rng)});

    std::vector<float> img(static_cast<size_t>(size) * size);
    double lo = 1e300, hi = -1e300;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double v = 0.0;
            for (const auto& g : gratings) {
                v += g.a * std::cos(2.0 * std::numbers::pi * (g.fx * x + g.fy * y) + g.phi);
            }
            for (const auto& b : blobs) {
                const double dx = x - b.cx, dy = y - b.cy;
                v += b.a * std::exp(-(dx * dx + dy * dy) / (2.0 * b.s * b.s));
            }
            img[static_cast<size_t>(y) * size + x] = static_cast<float>(v);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const double span = hi - lo;
    for (auto& v : img) v = span > 1e-9 ? static_cast<float>((v - lo) / span) : 0.5f;
    return img;
}

}  // namespace

std::vector<int> PlaceDataset::database_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < splits.size(); ++i) {
        if (splits[i] == Split::Database) out.push_back(static_cast<int>(i));
    }
    return out;
}

std::vector<int> PlaceDataset::query_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < splits.size(); ++i) {
        if (splits[i] == Split::Query) out.push_back(static_cast<int>(i));
    }
    return out;
}

PlaceDataset generate_place_dataset(const DatasetOptions& options, uint64_t seed) {
    if (options.views < 2) throw std::invalid_argument("dataset: need at least 2 views per place");
    if (options.places < 1 || options.image_size < 4 || options.channels < 1) {
        throw std::invalid_argument("dataset: bad generation options");
    }
    if (options.noise_sigma > 0.05) throw std::invalid_argument("dataset: noise sigma capped at 0.05");

    const int size = options.image_size;
    const int max_shift = static_cast<int>(std::floor(options.translation_frac * size));

    PlaceDataset ds;
    ds.channels = options.channels;
    ds.height = size;
    ds.width = size;
    ds.num_places = options.places;
    for (int place = 0; place < options.places; ++place) {
        Rng place_rng = make_rng(seed, stream::kDataset, static_cast<uint64_t>(place));
        std::vector<std::vector<float>> base;
        for (int c = 0; c < options.channels; ++c) base.push_back(base_pattern(size, place_rng));

        for (int view = 0; view < options.views; ++view) {
            std::uniform_real_distribution<double> bright(-options.brightness_jitter, options.brightness_jitter);
            std::uniform_real_distribution<double> contrast(1.0 - options.contrast_jitter, 1.0 + options.contrast_jitter);
            std::uniform_int_distribution<int> shift(-max_shift, max_shift);
            std::normal_distribution<double> noise(0.0, options.noise_sigma);
            const double db = bright(place_rng);
            const double dc = contrast(place_rng);
            const int dx = shift(place_rng);
            const int dy = shift(place_rng);

            Tensor img = Tensor::zeros({options.channels, size, size});
            for (int c = 0; c < options.channels; ++c) {
                const auto& src = base[c];
                for (int y = 0; y < size; ++y) {
                    const int sy = ((y + dy) % size + size) % size;  // toroidal shift
                    for (int x = 0; x < size; ++x) {
                        const int sx = ((x + dx) % size + size) % size;
                        double v = 0.5 + dc * (src[static_cast<size_t>(sy) * size + sx] - 0.5) + db + noise(place_rng);
                        img.data()[(static_cast<int64_t>(c) * size + y) * size + x] =
                            static_cast<float>(std::clamp(v, 0.0, 1.0));
                    }
                }
            }
            ds.images.push_back(img);
            ds.place_ids.push_back(place);
            ds.splits.push_back(Split::Database);
        }
    }
    return ds;
}

void split_dataset(PlaceDataset& ds, int db_views, int query_views, uint64_t seed) {
    if (ds.images.empty()) throw std::invalid_argument("split: empty dataset");
    const int views = static_cast<int>(ds.images.size()) / ds.num_places;
    if (db_views < 1 || query_views < 0 || db_views + query_views > views) {
        throw std::invalid_argument("split: need db+query <= views with db >= 1");
    }
    for (int place = 0; place < ds.num_places; ++place) {
        std::vector<int> view_order(views);
        for (int v = 0; v < views; ++v) view_order[v] = place * views + v;
        Rng rng = make_rng(seed, stream::kSplit, static_cast<uint64_t>(place));
        std::shuffle(view_order.begin(), view_order.end(), rng);
        for (int v = 0; v < views; ++v) {
            ds.splits[view_order[v]] = (v >= db_views && v < db_views + query_views) ? Split::Query
                                                                                     : Split::Database;
        }
    }
}

void export_dataset(const PlaceDataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "images");
    std::ofstream manifest(fs::path(dir) / "manifest.tsv");
    if (!manifest) throw std::runtime_error("export: cannot write manifest in " + dir);
    manifest << "# filename\tplace_id\tsplit\n";
    for (size_t i = 0; i < ds.images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%05zu.vprt", i);
        const fs::path path = fs::path(dir) / "images" / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("export: cannot write " + path.string());
        out.write(kTensorMagic, 4);
        const auto& shape = ds.images[i].shape();
        const uint32_t ndim = static_cast<uint32_t>(shape.size());
        out.write(reinterpret_cast<const char*>(&ndim), 4);
        for (int e : shape) {
            const uint32_t v = static_cast<uint32_t>(e);
            out.write(reinterpret_cast<const char*>(&v), 4);
        }
        out.write(reinterpret_cast<const char*>(ds.images[i].data()),
                  static_cast<std::streamsize>(ds.images[i].size() * sizeof(float)));
        manifest << "images/" << name << '\t' << ds.place_ids[i] << '\t'
                 << (ds.splits[i] == Split::Query ? "query" : "database") << '\n';
    }
}

PlaceDataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream manifest(fs::path(dir) / "manifest.tsv");
    if (!manifest) throw std::runtime_error("load: missing manifest.tsv in " + dir);

    PlaceDataset ds;
    int max_place = -1;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty() || line[0] == '#') continue;
        const size_t t1 = line.find('\t');
        const size_t t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw std::runtime_error("load: malformed manifest line: " + line);
        }
        const std::string file = line.substr(0, t1);
        const int place = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
        const std::string split = line.substr(t2 + 1);

        std::ifstream in(fs::path(dir) / file, std::ios::binary);
        if (!in) throw std::runtime_error("load: missing tensor file " + file);
        char magic[4];
        in.read(magic, 4);
        if (!in || std::memcmp(magic, kTensorMagic, 4) != 0) {
            throw std::runtime_error("load: bad tensor magic in " + file);
        }
        uint32_t ndim = 0;
        in.read(reinterpret_cast<char*>(&ndim), 4);
        if (!in || ndim == 0 || ndim > 8) throw std::runtime_error("load: bad dim count in " + file);
        std::vector<int> shape(ndim);
        for (auto& e : shape) {
            uint32_t v = 0;
            in.read(reinterpret_cast<char*>(&v), 4);
            e = static_cast<int>(v);
        }
        std::vector<float> data(static_cast<size_t>(shape_size(shape)));
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
        if (!in) throw std::runtime_error("load: truncated tensor file " + file);

        ds.images.push_back(Tensor::from_data(shape, std::move(data)));
        ds.place_ids.push_back(place);
        ds.splits.push_back(split == "query" ? Split::Query : Split::Database);
        max_place = std::max(max_place, place);
    }
    if (ds.images.empty()) throw std::runtime_error("load: empty dataset in " + dir);
    ds.num_places = max_place + 1;
    ds.channels = ds.images[0].dim(0);
    ds.height = ds.images[0].dim(1);
    ds.width = ds.images[0].dim(2);
    return ds;
}

}  // namespace vpr
