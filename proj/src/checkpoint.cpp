#include "vpr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

namespace vpr {
namespace {

constexpr char kMagic[4] = {'V', 'P', 'R', 'C'};
constexpr uint32_t kVersion = 1;

uint32_t crc_table_entry(uint32_t i) {
    uint32_t c = i;
    for (int bit = 0; bit < 8; ++bit) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    return c;
}

const uint32_t* crc_table() {
    static uint32_t table[256];
    static bool ready = false;
    if (!ready) {
        for (uint32_t i = 0; i < 256; ++i) table[i] = crc_table_entry(i);
        ready = true;
    }
    return table;
}

struct Writer {
    std::vector<uint8_t> bytes;

    void raw(const void* data, size_t n) {
        const auto* p = static_cast<const uint8_t*>(data);
        bytes.insert(bytes.end(), p, p + n);
    }
    void u32(uint32_t v) { raw(&v, 4); }
    void i32(int32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
};

struct Reader {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    void raw(void* out, size_t n) {
        if (pos + n > bytes.size()) throw ValidationError("checkpoint: truncated record");
        std::memcpy(out, bytes.data() + pos, n);
        pos += n;
    }
    uint32_t u32() {
        uint32_t v;
        raw(&v, 4);
        return v;
    }
    int32_t i32() {
        int32_t v;
        raw(&v, 4);
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        raw(&v, 8);
        return v;
    }
    double f64() {
        double v;
        raw(&v, 8);
        return v;
    }
    std::string str() {
        const uint32_t n = u32();
        if (n > 4096) throw ValidationError("checkpoint: unreasonable string length");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
};

}  // namespace

uint32_t crc32(const void* data, size_t length, uint32_t seed) {
    const uint32_t* table = crc_table();
    uint32_t c = seed ^ 0xFFFFFFFFu;
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < length; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::vector<uint8_t> serialize_model(const Model& model) {
    Writer w;
    w.raw(kMagic, 4);
    w.u32(kVersion);
    w.u32(static_cast<uint32_t>(model.arch));

    const auto& spec = model.backbone.spec;
    w.u32(static_cast<uint32_t>(spec.in_channels));
    w.u32(static_cast<uint32_t>(spec.in_h));
    w.u32(static_cast<uint32_t>(spec.in_w));
    w.u32(static_cast<uint32_t>(spec.blocks.size()));
    for (const auto& b : spec.blocks) {
        w.u32(static_cast<uint32_t>(b.out_channels));
        w.u32(static_cast<uint32_t>(b.kernel));
        w.u32(static_cast<uint32_t>(b.stride));
        w.u32(static_cast<uint32_t>(b.pad));
        w.i32(b.residual_group);
    }
    const auto& ho = model.head_options;
    w.f64(ho.gem_p_init);
    w.u32(static_cast<uint32_t>(ho.convap_block));
    w.u32(static_cast<uint32_t>(ho.mixvpr_blocks));
    w.u32(static_cast<uint32_t>(ho.mixvpr_depth));
    w.u32(static_cast<uint32_t>(ho.netvlad_clusters));
    uint32_t d_depth_original = 0, clusters_original = 0;
    if (const auto* m = std::get_if<MixVprHead>(&model.head)) d_depth_original = m->d_depth_original;
    if (const auto* v = std::get_if<NetVladHead>(&model.head)) clusters_original = v->clusters_original;
    w.u32(d_depth_original);
    w.u32(clusters_original);

    const auto named = model.named_parameters();
    w.u32(static_cast<uint32_t>(named.size()));
    uint64_t offset = 0;
    for (const auto& [name, t] : named) {
        w.str(name);
        w.u32(static_cast<uint32_t>(t.ndim()));
        for (int e : t.shape()) w.u32(static_cast<uint32_t>(e));
        w.u64(offset);
        offset += static_cast<uint64_t>(t.size()) * sizeof(float);
    }
    w.u64(offset);
    for (const auto& [name, t] : named) {
        (void)name;
        w.raw(t.data(), t.size() * sizeof(float));
    }
    w.u32(crc32(w.bytes.data(), w.bytes.size()));
    return w.bytes;
}

Model deserialize_model(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 12) throw ValidationError("checkpoint: file too short");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ValidationError("checkpoint: bad magic");
    Reader r{bytes};
    r.pos = 4;
    const uint32_t version = r.u32();
    if (version != kVersion) {
        throw ValidationError("checkpoint: unsupported format version " + std::to_string(version));
    }
    uint32_t stored_crc = 0;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc) {
        throw ValidationError("checkpoint: CRC mismatch, file is corrupt or truncated");
    }

    const uint32_t arch_tag = r.u32();
    if (arch_tag > 3) throw ValidationError("checkpoint: unknown architecture tag");

    Model model;
    model.arch = static_cast<ArchKind>(arch_tag);
    auto& spec = model.backbone.spec;
    spec.in_channels = static_cast<int>(r.u32());
    spec.in_h = static_cast<int>(r.u32());
    spec.in_w = static_cast<int>(r.u32());
    const uint32_t blocks = r.u32();
    if (blocks == 0 || blocks > 1024) throw ValidationError("checkpoint: bad block count");
    for (uint32_t i = 0; i < blocks; ++i) {
        ConvBlockSpec b;
        b.out_channels = static_cast<int>(r.u32());
        b.kernel = static_cast<int>(r.u32());
        b.stride = static_cast<int>(r.u32());
        b.pad = static_cast<int>(r.u32());
        b.residual_group = r.i32();
        spec.blocks.push_back(b);
        model.original_out_channels.push_back(b.out_channels);
    }
    auto& ho = model.head_options;
    ho.gem_p_init = r.f64();
    ho.convap_block = static_cast<int>(r.u32());
    ho.mixvpr_blocks = static_cast<int>(r.u32());
    ho.mixvpr_depth = static_cast<int>(r.u32());
    ho.netvlad_clusters = static_cast<int>(r.u32());
    const uint32_t d_depth_original = r.u32();
    const uint32_t clusters_original = r.u32();

    const uint32_t entries = r.u32();
    struct Entry {
        std::vector<int> shape;
        uint64_t offset;
    };
    std::map<std::string, Entry> table;
    std::vector<std::string> order;
    for (uint32_t i = 0; i < entries; ++i) {
        const std::string name = r.str();
        const uint32_t ndim = r.u32();
        if (ndim == 0 || ndim > 8) throw ValidationError("checkpoint: bad tensor rank for " + name);
        Entry e;
        for (uint32_t d = 0; d < ndim; ++d) e.shape.push_back(static_cast<int>(r.u32()));
        e.offset = r.u64();
        table[name] = e;
        order.push_back(name);
    }
    const uint64_t payload_bytes = r.u64();
    const size_t payload_start = r.pos;
    if (payload_start + payload_bytes + 4 != bytes.size()) {
        throw ValidationError("checkpoint: payload size disagrees with file size");
    }

    auto read_tensor = [&](const std::string& name) {
        auto it = table.find(name);
        if (it == table.end()) throw ValidationError("checkpoint: missing tensor " + name);
        const int64_t count = shape_size(it->second.shape);
        if (it->second.offset + count * sizeof(float) > payload_bytes) {
            throw ValidationError("checkpoint: tensor " + name + " overruns payload");
        }
        std::vector<float> data(static_cast<size_t>(count));
        std::memcpy(data.data(), bytes.data() + payload_start + it->second.offset, count * sizeof(float));
        Tensor t = Tensor::from_data(it->second.shape, std::move(data));
        t.set_requires_grad(true);
        return t;
    };

    for (uint32_t i = 0; i < blocks; ++i) {
        model.backbone.weights.push_back(read_tensor("backbone." + std::to_string(i) + ".weight"));
        model.backbone.biases.push_back(read_tensor("backbone." + std::to_string(i) + ".bias"));
    }

    switch (model.arch) {
        case ArchKind::Gem: {
            GemHead g;
            g.p = read_tensor("head.p");
            model.head = g;
            break;
        }
        case ArchKind::ConvAp: {
            ConvApHead c;
            c.block = ho.convap_block;
            model.head = c;
            break;
        }
        case ArchKind::MixVpr: {
            MixVprHead m;
            for (int n = 0; n < ho.mixvpr_blocks; ++n) {
                m.w1.push_back(read_tensor("head.w1." + std::to_string(n)));
                m.w2.push_back(read_tensor("head.w2." + std::to_string(n)));
            }
            m.wd = read_tensor("head.wd");
            m.wr = read_tensor("head.wr");
            m.hw = m.wr.dim(1);
            m.d_depth_original = static_cast<int>(d_depth_original);
            model.head = m;
            break;
        }
        case ArchKind::NetVlad: {
            NetVladHead v;
            v.centers = read_tensor("head.centers");
            v.assign_w = read_tensor("head.assign_w");
            v.assign_b = read_tensor("head.assign_b");
            v.clusters_original = static_cast<int>(clusters_original);
            model.head = v;
            break;
        }
    }
    return model;
}

void save_checkpoint(const Model& model, const std::string& path) {
    const auto bytes = serialize_model(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read checkpoint " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace vpr
