#include "vpr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "vpr/ops.hpp"

namespace vpr {
namespace {

// Soft-plus aggregation over mined pairs of a precomputed similarity matrix;
// the backward step writes the closed-form dL/dS.
Tensor ms_loss_from_similarities(Tape* tape, const Tensor& sims, const std::vector<int>& labels,
                                 const LossParams& p) {
    const int b = sims.dim(0);
    double loss = 0.0;
    std::vector<double> grad_s(static_cast<size_t>(b) * b, 0.0);

    for (int i = 0; i < b; ++i) {
        double hardest_pos = 1e300, hardest_neg = -1e300;
        bool has_pos = false, has_neg = false;
        for (int j = 0; j < b; ++j) {
            if (j == i) continue;
            const double s = sims.data()[static_cast<int64_t>(i) * b + j];
            if (labels[j] == labels[i]) {
                hardest_pos = std::min(hardest_pos, s);
                has_pos = true;
            } else {
                hardest_neg = std::max(hardest_neg, s);
                has_neg = true;
            }
        }
        if (!has_pos || !has_neg) continue;
        const double neg_threshold = std::min(hardest_pos, p.mining_base) - p.mining_epsilon;
        const double pos_threshold = std::max(hardest_neg, p.mining_base) + p.mining_epsilon;

        double pos_sum = 0.0, neg_sum = 0.0;
        std::vector<int> pos_kept, neg_kept;
        for (int j = 0; j < b; ++j) {
            if (j == i) continue;
            const double s = sims.data()[static_cast<int64_t>(i) * b + j];
            if (labels[j] == labels[i]) {
                if (s < pos_threshold) {
                    pos_sum += std::exp(-p.alpha * (s - p.lambda));
                    pos_kept.push_back(j);
                }
            } else if (s > neg_threshold) {
                neg_sum += std::exp(p.beta * (s - p.lambda));
                neg_kept.push_back(j);
            }
        }
        loss += std::log1p(pos_sum) / p.alpha + std::log1p(neg_sum) / p.beta;
        for (int j : pos_kept) {
            const double s = sims.data()[static_cast<int64_t>(i) * b + j];
            grad_s[static_cast<size_t>(i) * b + j] +=
                -std::exp(-p.alpha * (s - p.lambda)) / (1.0 + pos_sum) / b;
        }
        for (int j : neg_kept) {
            const double s = sims.data()[static_cast<int64_t>(i) * b + j];
            grad_s[static_cast<size_t>(i) * b + j] +=
                std::exp(p.beta * (s - p.lambda)) / (1.0 + neg_sum) / b;
        }
    }

    Tensor out = Tensor::scalar(static_cast<float>(loss / b));
    const bool grad = tape != nullptr && sims.requires_grad();
    if (grad) {
        out.set_requires_grad(true);
        Tensor ts = sims, result = out;
        tape->record([ts, result, grad_s, b]() mutable {
            if (!result.has_grad()) return;
            const float g = result.grad()[0];
            auto& gs = ts.grad();
            for (size_t i = 0; i < grad_s.size(); ++i) gs[i] += static_cast<float>(g * grad_s[i]);
        });
    }
    return out;
}

}  // namespace

void validate_loss_params(const LossParams& p) {
    if (p.alpha <= 0.0 || p.beta <= 0.0) throw std::invalid_argument("loss: alpha and beta must be positive");
    if (p.lambda <= 0.0 || p.lambda >= 1.0) throw std::invalid_argument("loss: lambda must lie in (0,1)");
    if (p.mining_epsilon < 0.0) throw std::invalid_argument("loss: mining epsilon must be >= 0");
}

Tensor multi_similarity_loss(Tape* tape, const Tensor& embeddings, const std::vector<int>& labels,
                             const LossParams& params) {
    validate_loss_params(params);
    if (embeddings.ndim() != 2) throw std::invalid_argument("loss: embeddings must be [B,D]");
    const int b = embeddings.dim(0);
    if (static_cast<int>(labels.size()) != b) {
        throw std::invalid_argument("loss: label count != batch size");
    }
    bool multiple_places = false;
    for (int i = 1; i < b; ++i) multiple_places = multiple_places || labels[i] != labels[0];
    if (!multiple_places) {
        throw std::invalid_argument("loss: batch holds a single place, no negative pairs");
    }
    Tensor sims = matmul(tape, embeddings, transpose2d(tape, embeddings));
    return ms_loss_from_similarities(tape, sims, labels, params);
}

double lr_at(int epoch, double base_lr, double multiplier, int period) {
    if (epoch < 0 || period < 1) throw std::invalid_argument("lr_at: bad epoch or period");
    return base_lr * std::pow(multiplier, static_cast<double>(epoch / period));
}

Adam::Adam(std::vector<Tensor> parameters, double beta1, double beta2, double epsilon)
    : params_(std::move(parameters)), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t k = 0; k < params_.size(); ++k) {
        Tensor p = params_[k];
        const auto& g = p.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        float* w = p.data();
        for (int64_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            w[i] = static_cast<float>(w[i] - lr * mh / (std::sqrt(vh) + epsilon_));
        }
    }
}

namespace {

struct Batch {
    std::vector<int> image_indices;
    std::vector<int> labels;
};

// Deterministic batches: every database view of every place appears exactly
// once per epoch, grouped as places_per_batch x views_per_place.
std::vector<Batch> make_epoch_batches(const PlaceDataset& ds, int places_per_batch,
                                      int views_per_place, uint64_t seed, uint64_t epoch_index) {
    if (places_per_batch < 2) throw std::invalid_argument("trainer: need >= 2 places per batch");
    if (views_per_place < 2) throw std::invalid_argument("trainer: need >= 2 views per place");

    std::vector<std::vector<int>> views_per_place_list(ds.num_places);
    for (int i : ds.database_indices()) views_per_place_list[ds.place_ids[i]].push_back(i);
    for (int place = 0; place < ds.num_places; ++place) {
        if (static_cast<int>(views_per_place_list[place].size()) < views_per_place) {
            throw std::invalid_argument("trainer: place " + std::to_string(place) +
                                        " has fewer than views_per_place database views");
        }
        Rng rng = make_rng(seed, stream::kPretrain, epoch_index * 1000003ull + place);
        std::shuffle(views_per_place_list[place].begin(), views_per_place_list[place].end(), rng);
    }

    const int chunks = static_cast<int>(views_per_place_list[0].size()) / views_per_place;
    std::vector<Batch> batches;
    for (int chunk = 0; chunk < chunks; ++chunk) {
        std::vector<int> place_order(ds.num_places);
        std::iota(place_order.begin(), place_order.end(), 0);
        Rng rng = make_rng(seed, stream::kPretrain, epoch_index * 7919ull + chunk + 500000ull);
        std::shuffle(place_order.begin(), place_order.end(), rng);
        for (int start = 0; start + places_per_batch <= ds.num_places; start += places_per_batch) {
            Batch batch;
            for (int p = 0; p < places_per_batch; ++p) {
                const int place = place_order[start + p];
                for (int v = 0; v < views_per_place; ++v) {
                    batch.image_indices.push_back(views_per_place_list[place][chunk * views_per_place + v]);
                    batch.labels.push_back(place);
                }
            }
            batches.push_back(std::move(batch));
        }
    }
    if (batches.empty()) throw std::invalid_argument("trainer: dataset too small for one batch");
    return batches;
}

double run_batch(Model& model, const PlaceDataset& ds, const Batch& batch, Adam& optimizer,
                 double lr, const LossParams& loss_params) {
    Tape tape;
    std::vector<Tensor> descriptors;
    descriptors.reserve(batch.image_indices.size());
    for (int idx : batch.image_indices) descriptors.push_back(model.forward(&tape, ds.images[idx]));
    Tensor embeddings = stack_rows(&tape, descriptors);
    Tensor loss = multi_similarity_loss(&tape, embeddings, batch.labels, loss_params);
    model.zero_grad();
    tape.backward(loss);
    optimizer.step(lr);
    return loss.item();
}

}  // namespace

double train_epoch(Model& model, const PlaceDataset& ds, Adam& optimizer, double lr,
                   const LossParams& loss_params, int places_per_batch, int views_per_place,
                   uint64_t seed, uint64_t epoch_index) {
    const auto batches = make_epoch_batches(ds, places_per_batch, views_per_place, seed, epoch_index);
    double total = 0.0;
    for (const auto& batch : batches) {
        total += run_batch(model, ds, batch, optimizer, lr, loss_params);
    }
    return total / static_cast<double>(batches.size());
}

std::vector<double> train_dense(Model& model, const PlaceDataset& ds, const TrainConfig& cfg,
                                const LossParams& loss_params, uint64_t seed) {
    Adam optimizer(model.parameters());
    std::vector<double> losses;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg.base_lr, cfg.lr_decay, cfg.lr_decay_period);
        losses.push_back(train_epoch(model, ds, optimizer, lr, loss_params, cfg.places_per_batch,
                                     cfg.views_per_place, seed, static_cast<uint64_t>(epoch)));
    }
    return losses;
}

std::vector<ResourceReport> imp_run(Model& model, const PlaceDataset& ds,
                                    const PruneSchedule& schedule, const ImpConfig& cfg,
                                    const LossParams& loss_params, const EvalProtocol& protocol,
                                    uint64_t seed, const RoundSink& sink) {
    std::vector<ResourceReport> reports;
    reports.push_back(evaluate_model(model, ds, protocol, 0, 0.0, 0.0));
    if (sink) sink(0, model, reports.back());

    for (int round = 1; round <= schedule.rounds; ++round) {
        const RoundTargets targets = schedule_round(schedule, round);
        prune_round(model, targets.backbone, targets.aggregation,
                    derive_seed(seed, stream::kPrune, static_cast<uint64_t>(round)));

        // Fresh optimizer state and a reset learning-rate schedule per round.
        Adam optimizer(model.parameters());
        for (int epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
            const double lr = lr_at(epoch, cfg.finetune_lr, cfg.lr_decay, cfg.lr_decay_period);
            train_epoch(model, ds, optimizer, lr, loss_params, cfg.places_per_batch,
                        cfg.views_per_place, derive_seed(seed, stream::kFinetune, round),
                        static_cast<uint64_t>(epoch));
        }

        reports.push_back(evaluate_model(model, ds, protocol, round, targets.backbone, targets.aggregation));
        if (sink) sink(round, model, reports.back());
    }
    return reports;
}

}  // namespace vpr
