#include "vpr/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "vpr/checkpoint.hpp"

namespace vpr {
namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

struct KeyValueFile {
    std::map<std::string, std::string> entries;  // "section.key" -> value
    std::set<std::string> consumed;

    bool has(const std::string& key) const { return entries.count(key) > 0; }

    std::string take(const std::string& key, const std::string& fallback) {
        consumed.insert(key);
        auto it = entries.find(key);
        return it == entries.end() ? fallback : it->second;
    }
};

KeyValueFile parse_key_values(const std::string& text) {
    KeyValueFile kv;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty section");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
        if (section.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": key outside a section");
        const std::string full = section + "." + key;
        if (kv.entries.count(full)) throw ValidationError("config: duplicate key " + full);
        kv.entries[full] = value;
    }
    return kv;
}

double to_double(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config: " + key + " expects a number, got '" + value + "'");
    }
}

int64_t to_int(const std::string& key, const std::string& value) {
    int64_t v = 0;
    const auto result = std::from_chars(value.data(), value.data() + value.size(), v);
    if (result.ec != std::errc() || result.ptr != value.data() + value.size()) {
        throw ValidationError("config: " + key + " expects an integer, got '" + value + "'");
    }
    return v;
}

std::vector<int> to_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    std::istringstream in(value);
    std::string item;
    while (std::getline(in, item, ',')) {
        out.push_back(static_cast<int>(to_int(key, trim(item))));
    }
    if (out.empty()) throw ValidationError("config: " + key + " expects a comma-separated list");
    return out;
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ValidationError("config: " + message);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    KeyValueFile kv = parse_key_values(text);
    ExperimentConfig cfg;

    cfg.seed = static_cast<uint64_t>(to_int("run.seed", kv.take("run.seed", "42")));
    cfg.arch = arch_from_name(kv.take("run.arch", "convap"));

    cfg.dataset.places = static_cast<int>(to_int("dataset.places", kv.take("dataset.places", "32")));
    cfg.dataset.views = static_cast<int>(to_int("dataset.views", kv.take("dataset.views", "16")));
    cfg.dataset.image_size = static_cast<int>(to_int("dataset.image_size", kv.take("dataset.image_size", "32")));
    cfg.dataset.channels = static_cast<int>(to_int("dataset.channels", kv.take("dataset.channels", "3")));
    cfg.dataset.noise_sigma = to_double("dataset.noise_sigma", kv.take("dataset.noise_sigma", "0.03"));
    cfg.dataset.translation_frac = to_double("dataset.translation_frac", kv.take("dataset.translation_frac", "0.10"));
    cfg.dataset.brightness_jitter = to_double("dataset.brightness_jitter", kv.take("dataset.brightness_jitter", "0.10"));
    cfg.dataset.contrast_jitter = to_double("dataset.contrast_jitter", kv.take("dataset.contrast_jitter", "0.10"));
    cfg.db_views = static_cast<int>(to_int("dataset.db_views", kv.take("dataset.db_views", "12")));
    cfg.query_views = static_cast<int>(to_int("dataset.query_views", kv.take("dataset.query_views", "4")));

    cfg.backbone.in_channels = cfg.dataset.channels;
    cfg.backbone.in_h = cfg.dataset.image_size;
    cfg.backbone.in_w = cfg.dataset.image_size;
    const auto channels = to_int_list("backbone.channels", kv.take("backbone.channels", "16,32,64,64"));
    const auto kernels = to_int_list("backbone.kernels", kv.take("backbone.kernels", "3,3,3,3"));
    const auto strides = to_int_list("backbone.strides", kv.take("backbone.strides", "2,2,2,1"));
    const auto pads = to_int_list("backbone.pads", kv.take("backbone.pads", "1,1,1,1"));
    std::string default_groups;
    for (size_t i = 0; i < channels.size(); ++i) default_groups += i ? ",-1" : "-1";
    const auto groups = to_int_list("backbone.residual_groups", kv.take("backbone.residual_groups", default_groups));
    require(kernels.size() == channels.size() && strides.size() == channels.size() &&
                pads.size() == channels.size() && groups.size() == channels.size(),
            "backbone lists must all have the same length");
    for (size_t i = 0; i < channels.size(); ++i) {
        cfg.backbone.blocks.push_back({channels[i], kernels[i], strides[i], pads[i], groups[i]});
    }

    cfg.head.gem_p_init = to_double("head.gem_p_init", kv.take("head.gem_p_init", "3.0"));
    cfg.head.convap_block = static_cast<int>(to_int("head.convap_block", kv.take("head.convap_block", "2")));
    cfg.head.mixvpr_blocks = static_cast<int>(to_int("head.mixvpr_blocks", kv.take("head.mixvpr_blocks", "2")));
    cfg.head.mixvpr_depth = static_cast<int>(to_int("head.mixvpr_depth", kv.take("head.mixvpr_depth", "0")));
    cfg.head.netvlad_clusters = static_cast<int>(to_int("head.netvlad_clusters", kv.take("head.netvlad_clusters", "16")));

    cfg.schedule.rounds = static_cast<int>(to_int("schedule.rounds", kv.take("schedule.rounds", "10")));
    cfg.schedule.backbone_final = to_double("schedule.backbone_final_sparsity", kv.take("schedule.backbone_final_sparsity", "0.9"));
    cfg.schedule.gamma = to_double("schedule.gamma", kv.take("schedule.gamma", "0.0"));

    cfg.pretrain.epochs = static_cast<int>(to_int("trainer.pretrain_epochs", kv.take("trainer.pretrain_epochs", "30")));
    cfg.pretrain.base_lr = to_double("trainer.pretrain_lr", kv.take("trainer.pretrain_lr", "1e-3"));
    cfg.pretrain.lr_decay = to_double("trainer.lr_decay", kv.take("trainer.lr_decay", "0.3"));
    cfg.pretrain.lr_decay_period = static_cast<int>(to_int("trainer.lr_decay_period", kv.take("trainer.lr_decay_period", "5")));
    cfg.pretrain.places_per_batch = static_cast<int>(to_int("trainer.places_per_batch", kv.take("trainer.places_per_batch", "8")));
    cfg.pretrain.views_per_place = static_cast<int>(to_int("trainer.views_per_place", kv.take("trainer.views_per_place", "4")));
    cfg.imp.rounds = cfg.schedule.rounds;
    cfg.imp.epochs_per_round = static_cast<int>(to_int("trainer.finetune_epochs_per_round", kv.take("trainer.finetune_epochs_per_round", "2")));
    cfg.imp.finetune_lr = to_double("trainer.finetune_lr", kv.take("trainer.finetune_lr", "1e-4"));
    cfg.imp.lr_decay = cfg.pretrain.lr_decay;
    cfg.imp.lr_decay_period = cfg.pretrain.lr_decay_period;
    cfg.imp.places_per_batch = cfg.pretrain.places_per_batch;
    cfg.imp.views_per_place = cfg.pretrain.views_per_place;

    cfg.loss.alpha = to_double("loss.alpha", kv.take("loss.alpha", "2.0"));
    cfg.loss.beta = to_double("loss.beta", kv.take("loss.beta", "50.0"));
    cfg.loss.lambda = to_double("loss.lambda", kv.take("loss.lambda", "0.5"));
    cfg.loss.mining_epsilon = to_double("loss.mining_epsilon", kv.take("loss.mining_epsilon", "0.1"));
    cfg.loss.mining_base = to_double("loss.mining_base", kv.take("loss.mining_base", "1.0"));

    cfg.eval.warmup = static_cast<int>(to_int("eval.warmup", kv.take("eval.warmup", "10")));
    cfg.eval.trials = static_cast<int>(to_int("eval.trials", kv.take("eval.trials", "50")));

    // Reject anything the registry above did not consume.
    for (const auto& [key, value] : kv.entries) {
        (void)value;
        if (!kv.consumed.count(key)) throw ValidationError("config: unknown key '" + key + "'");
    }

    // Cross-field invariants, checked before any compute.
    require(cfg.dataset.places >= 2, "dataset.places must be >= 2");
    require(cfg.dataset.views >= 2, "dataset.views must be >= 2");
    require(cfg.db_views >= 2, "dataset.db_views must be >= 2 (training needs two views per place)");
    require(cfg.query_views >= 1, "dataset.query_views must be >= 1");
    require(cfg.db_views + cfg.query_views <= cfg.dataset.views, "db_views + query_views must fit in views");
    require(cfg.dataset.noise_sigma >= 0.0 && cfg.dataset.noise_sigma <= 0.05, "dataset.noise_sigma must lie in [0, 0.05]");
    require(cfg.dataset.translation_frac >= 0.0 && cfg.dataset.translation_frac <= 0.10,
            "dataset.translation_frac must lie in [0, 0.10]");
    require(cfg.schedule.rounds >= 1, "schedule.rounds must be >= 1");
    require(cfg.schedule.backbone_final >= 0.0 && cfg.schedule.backbone_final < 1.0,
            "schedule.backbone_final_sparsity must lie in [0,1)");
    require(cfg.schedule.gamma >= 0.0 && cfg.schedule.gamma < 1.0, "schedule.gamma must lie in [0,1)");
    require(cfg.pretrain.epochs >= 0, "trainer.pretrain_epochs must be >= 0");
    require(cfg.imp.epochs_per_round >= 0, "trainer.finetune_epochs_per_round must be >= 0");
    require(cfg.pretrain.places_per_batch >= 2, "trainer.places_per_batch must be >= 2");
    require(cfg.pretrain.views_per_place >= 2, "trainer.views_per_place must be >= 2");
    require(cfg.pretrain.views_per_place <= cfg.db_views, "trainer.views_per_place must fit in db_views");
    require(cfg.pretrain.places_per_batch <= cfg.dataset.places, "trainer.places_per_batch must fit in places");
    require(cfg.eval.trials >= 1, "eval.trials must be >= 1");
    validate_loss_params(cfg.loss);
    backbone_output_shape(cfg.backbone);  // validates block geometry
    if (cfg.arch == ArchKind::ConvAp) {
        const FeatureShape fs = backbone_output_shape(cfg.backbone);
        require(cfg.head.convap_block >= 1 && fs.h % cfg.head.convap_block == 0 &&
                    fs.w % cfg.head.convap_block == 0,
                "head.convap_block must divide the final feature map");
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

std::string default_config_text() {
    return
        "[run]\n"
        "seed = 42\n"
        "arch = convap\n"
        "\n"
        "[dataset]\n"
        "places = 32\n"
        "views = 16\n"
        "image_size = 32\n"
        "channels = 3\n"
        "db_views = 12\n"
        "query_views = 4\n"
        "noise_sigma = 0.03\n"
        "translation_frac = 0.10\n"
        "brightness_jitter = 0.10\n"
        "contrast_jitter = 0.10\n"
        "\n"
        "[backbone]\n"
        "channels = 16,32,64,64\n"
        "kernels = 3,3,3,3\n"
        "strides = 2,2,2,1\n"
        "pads = 1,1,1,1\n"
        "residual_groups = -1,-1,-1,-1\n"
        "\n"
        "[head]\n"
        "gem_p_init = 3.0\n"
        "convap_block = 2\n"
        "mixvpr_blocks = 2\n"
        "mixvpr_depth = 0\n"
        "netvlad_clusters = 16\n"
        "\n"
        "[schedule]\n"
        "rounds = 10\n"
        "backbone_final_sparsity = 0.9\n"
        "gamma = 0.0\n"
        "\n"
        "[trainer]\n"
        "pretrain_epochs = 30\n"
        "pretrain_lr = 1e-3\n"
        "finetune_epochs_per_round = 2\n"
        "finetune_lr = 1e-4\n"
        "lr_decay = 0.3\n"
        "lr_decay_period = 5\n"
        "places_per_batch = 8\n"
        "views_per_place = 4\n"
        "\n"
        "[loss]\n"
        "alpha = 2.0\n"
        "beta = 50.0\n"
        "lambda = 0.5\n"
        "mining_epsilon = 0.1\n"
        "mining_base = 1.0\n"
        "\n"
        "[eval]\n"
        "warmup = 10\n"
        "trials = 50\n";
}

}  // namespace vpr
