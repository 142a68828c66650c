#pragma once

#include <cstdint>
#include <string>

#include "vpr/dataset.hpp"
#include "vpr/model.hpp"
#include "vpr/prune.hpp"
#include "vpr/retrieval.hpp"
#include "vpr/trainer.hpp"

namespace vpr {

// Everything a run needs, parsed from a flat "key = value" file with one
// [section] per module. Unknown sections or keys are rejected, as are values
// violating any module invariant.
struct ExperimentConfig {
    uint64_t seed = 42;
    ArchKind arch = ArchKind::ConvAp;

    DatasetOptions dataset;
    int db_views = 12;
    int query_views = 4;

    BackboneSpec backbone;
    HeadOptions head;

    PruneSchedule schedule;
    TrainConfig pretrain;
    ImpConfig imp;
    LossParams loss;
    EvalProtocol eval;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// The defaults above rendered as a config file; `vpr init-config` emits it.
std::string default_config_text();

}  // namespace vpr
