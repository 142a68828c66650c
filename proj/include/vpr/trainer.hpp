#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vpr/model.hpp"
#include "vpr/prune.hpp"
#include "vpr/retrieval.hpp"

namespace vpr {

// Multi-similarity loss parameters. Pair mining compares each similarity
// against the per-anchor extremes clamped by mining_base: positives are kept
// when s_p - epsilon < max(hardest negative, mining_base), negatives when
// s_n + epsilon > min(hardest positive, mining_base).
struct LossParams {
    double alpha = 2.0;
    double beta = 50.0;
    double lambda = 0.5;
    double mining_epsilon = 0.1;
    double mining_base = 1.0;
};

void validate_loss_params(const LossParams& params);

// embeddings: [B,D] with l2-normalized rows; labels: place id per row.
// Throws when the batch holds a single place (no negative pairs exist).
Tensor multi_similarity_loss(Tape* tape, const Tensor& embeddings, const std::vector<int>& labels,
                             const LossParams& params);

// base_lr * multiplier^floor(epoch / period)
double lr_at(int epoch, double base_lr, double multiplier, int period);

// Standard Adam with bias correction. State is keyed by position in the
// parameter list, so it must be rebuilt after pruning surgery.
class Adam {
  public:
    explicit Adam(std::vector<Tensor> parameters, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-8);
    void step(double lr);
    int64_t steps_taken() const { return t_; }

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    double beta1_, beta2_, epsilon_;
    int64_t t_ = 0;
};

struct ImpConfig {
    int rounds = 25;
    int epochs_per_round = 2;
    double finetune_lr = 1e-4;
    double lr_decay = 0.3;
    int lr_decay_period = 5;
    int places_per_batch = 8;
    int views_per_place = 4;
};

struct TrainConfig {
    int epochs = 30;
    double base_lr = 1e-3;
    double lr_decay = 0.3;
    int lr_decay_period = 5;
    int places_per_batch = 8;
    int views_per_place = 4;
};

// One pass over every database view of every place, grouped into batches of
// places_per_batch x views_per_place. Returns the mean batch loss.
double train_epoch(Model& model, const PlaceDataset& ds, Adam& optimizer, double lr,
                   const LossParams& loss_params, int places_per_batch, int views_per_place,
                   uint64_t seed, uint64_t epoch_index);

// Dense pre-training; returns per-epoch mean losses.
std::vector<double> train_dense(Model& model, const PlaceDataset& ds, const TrainConfig& cfg,
                                const LossParams& loss_params, uint64_t seed);

using RoundSink = std::function<void(int round, const Model& model, const ResourceReport& report)>;

// The prune/fine-tune outer loop. Emits the dense evaluation as round 0, then
// for t = 1..R applies schedule targets, fine-tunes (with the learning-rate
// schedule reset each round), evaluates and reports. A failing round aborts
// the run after the sink has seen every completed round.
std::vector<ResourceReport> imp_run(Model& model, const PlaceDataset& ds,
                                    const PruneSchedule& schedule, const ImpConfig& cfg,
                                    const LossParams& loss_params, const EvalProtocol& protocol,
                                    uint64_t seed, const RoundSink& sink = {});

}  // namespace vpr
