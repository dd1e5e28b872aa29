// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>

#include "vls/model.hpp"
#include "vls/rng.hpp"

namespace vls {

struct DatasetPool {
    struct Dataset {
        std::string name;
        std::vector<TrainingExample> examples;
    };
    std::vector<Dataset> datasets;

    std::vector<std::int64_t> sizes() const;
    void validate() const; // unique names, positive sizes
};

// w_i = p_i^s / sum_j p_j^s with p_i = size_i / sum(sizes).
std::vector<double> esw_weights(const std::vector<std::int64_t>& sizes, double s);

struct ESWSampler {
    double s = 0.5;
    std::vector<double> weights;

    static ESWSampler create(const std::vector<std::int64_t>& sizes, double s);
    std::size_t sample(SeededRng& rng) const;
};

struct TrainConfig {
    double lr = 1e-3;
    int batch_size = 8;
    int accumulation_steps = 1;
    std::int64_t max_steps = 1000;
    std::int64_t warmup_steps = 100; // linear warmup, then constant
    double clip_norm = 1.0;          // global-norm clip; <= 0 disables
    double esw_s = 0.5;
    std::uint64_t seed = 42;
    bool freeze_vision = true;
    bool freeze_speech = true;
    bool ablate_vision = false; // drop the vision segment from every input
    bool ablate_speech = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamState {
    struct Moments {
        std::vector<real> m;
        std::vector<real> v;
    };
    std::map<std::string, Moments> moments; // keyed by parameter name, created lazily
    std::int64_t step_count = 0;

    void drop(const std::string& name) { moments.erase(name); }
};

struct StepReport {
    std::int64_t step = 0;
    double loss = 0.0; // mean micro-batch loss, unscaled
    std::vector<std::string> datasets_used;
    double grad_norm = 0.0; // pre-clip global norm
};

double lr_at_step(const TrainConfig& cfg, std::int64_t step_index);

// Pre-clip global gradient norm over trainable parameters; rescales gradients
// in place when the norm exceeds max_norm (max_norm <= 0 only measures).
double clip_global_norm(TrimodalModel& model, double max_norm);

// One Adam update over non-frozen parameters, then zeroed gradients are the
// caller's job. Moments are created lazily per parameter.
void adam_apply(TrimodalModel& model, AdamState& opt, const TrainConfig& cfg, double lr);

// One optimizer step at `step_index`: accumulation_steps micro-batches, each
// drawn wholly from one ESW-sampled dataset, gradients scaled by
// 1/accumulation_steps, one Adam update, gradients zeroed. Batch selection is
// a pure function of (cfg.seed, step_index), so training is resumable.
StepReport train_step(TrimodalModel& model, const DatasetPool& pool, const Vocab& vocab,
                      const TrainConfig& cfg, AdamState& opt, std::int64_t step_index);

// Runs steps [start_step, end_step).
std::vector<StepReport> train_loop(TrimodalModel& model, const DatasetPool& pool,
                                   const Vocab& vocab, const TrainConfig& cfg, AdamState& opt,
                                   std::int64_t start_step, std::int64_t end_step,
                                   const std::function<void(const StepReport&)>& on_step = {});

// Flags every parameter of the named encoders; optimizer state of newly
// frozen parameters is dropped (recreated lazily on unfreeze).
void set_frozen(TrimodalModel& model, AdamState* opt, bool vision, bool speech);

// Mean teacher-forced loss over a whole dataset (no gradients).
double dataset_loss(const TrimodalModel& model, const std::vector<TrainingExample>& examples,
                    const Vocab& vocab, bool ablate_vision = false, bool ablate_speech = false);

// Checkpoint directory: `manifest` + one tensor file per parameter and
// optimizer moment. Round trips are bitwise.
void save_checkpoint(const TrimodalModel& model, const AdamState& opt,
                     const std::map<std::string, std::string>& config_kv, const Vocab& vocab,
                     const std::string& dir);
std::map<std::string, std::string> checkpoint_config(const std::string& dir);
std::int64_t checkpoint_step(const std::string& dir);
void load_checkpoint_into(TrimodalModel& model, AdamState& opt, const std::string& dir);
Vocab checkpoint_vocab(const std::string& dir);
// name -> content hash, as recorded in the manifest
std::map<std::string, std::string> checkpoint_param_hashes(const std::string& dir);

} // namespace vls
