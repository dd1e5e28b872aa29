// SPDX-License-Identifier: Apache-2.0
#include "vls/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "vls/io.hpp"

namespace fs = std::filesystem;

namespace vls {

std::vector<std::int64_t> DatasetPool::sizes() const {
    std::vector<std::int64_t> out;
    out.reserve(datasets.size());
    for (const auto& d : datasets) out.push_back(static_cast<std::int64_t>(d.examples.size()));
    return out;
}

void DatasetPool::validate() const {
    if (datasets.empty()) throw usage_error("dataset pool is empty");
    std::set<std::string> names;
    for (const auto& d : datasets) {
        if (d.examples.empty()) throw usage_error("dataset '" + d.name + "' has no examples");
        if (!names.insert(d.name).second) {
            throw usage_error("duplicate dataset name '" + d.name + "'");
        }
    }
}

std::vector<double> esw_weights(const std::vector<std::int64_t>& sizes, double s) {
    if (sizes.empty()) throw usage_error("esw_weights: no dataset sizes");
    if (s <= 0.0 || s > 1.0) throw usage_error("esw_weights: S must be in (0,1]");
    double total = 0.0;
    for (auto sz : sizes) {
        if (sz <= 0) throw usage_error("esw_weights: dataset sizes must be positive");
        total += static_cast<double>(sz);
    }
    std::vector<double> w(sizes.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        w[i] = std::pow(static_cast<double>(sizes[i]) / total, s);
        norm += w[i];
    }
    for (auto& x : w) x /= norm;
    return w;
}

ESWSampler ESWSampler::create(const std::vector<std::int64_t>& sizes, double s) {
    ESWSampler sampler;
    sampler.s = s;
    sampler.weights = esw_weights(sizes, s);
    return sampler;
}

std::size_t ESWSampler::sample(SeededRng& rng) const {
    return rng.categorical(weights);
}

double lr_at_step(const TrainConfig& cfg, std::int64_t step_index) {
    if (cfg.warmup_steps <= 0) return cfg.lr;
    const double frac = static_cast<double>(step_index + 1) / static_cast<double>(cfg.warmup_steps);
    return cfg.lr * std::min(1.0, frac);
}

double clip_global_norm(TrimodalModel& model, double max_norm) {
    double sq = 0.0;
    for (auto* p : model.params.in_order()) {
        if (p->frozen) continue;
        for (real g : p->value->grad) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const real scale = static_cast<real>(max_norm / norm);
        for (auto* p : model.params.in_order()) {
            if (p->frozen) continue;
            for (auto& g : p->value->grad) g *= scale;
        }
    }
    return norm;
}

void adam_apply(TrimodalModel& model, AdamState& opt, const TrainConfig& cfg, double lr) {
    opt.step_count += 1;
    const double t = static_cast<double>(opt.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto* p : model.params.in_order()) {
        if (p->frozen) continue;
        auto& mom = opt.moments[p->name];
        if (mom.m.size() != p->value->data.size()) {
            mom.m.assign(p->value->data.size(), real(0));
            mom.v.assign(p->value->data.size(), real(0));
        }
        p->value->ensure_grad();
        for (std::size_t i = 0; i < p->value->data.size(); ++i) {
            double g = static_cast<double>(p->value->grad[i]);
            if (cfg.weight_decay != 0.0) {
                g += cfg.weight_decay * static_cast<double>(p->value->data[i]);
            }
            const double m = cfg.beta1 * static_cast<double>(mom.m[i]) + (1.0 - cfg.beta1) * g;
            const double v = cfg.beta2 * static_cast<double>(mom.v[i]) + (1.0 - cfg.beta2) * g * g;
            mom.m[i] = static_cast<real>(m);
            mom.v[i] = static_cast<real>(v);
            const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps);
            p->value->data[i] -= static_cast<real>(update);
        }
    }
}

namespace {

SeededRng step_rng(const TrainConfig& cfg, std::int64_t step_index) {
    // batch composition is a pure function of (seed, step) so interrupted
    // runs resume on the exact trajectory
    return SeededRng(cfg.seed ^
                     (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(step_index + 1)));
}

} // namespace

StepReport train_step(TrimodalModel& model, const DatasetPool& pool, const Vocab& vocab,
                      const TrainConfig& cfg, AdamState& opt, std::int64_t step_index) {
    pool.validate();
    if (cfg.accumulation_steps < 1) throw usage_error("accumulation_steps must be >= 1");
    if (cfg.batch_size < 1) throw usage_error("batch_size must be >= 1");
    const auto sampler = ESWSampler::create(pool.sizes(), cfg.esw_s);
    auto rng = step_rng(cfg, step_index);

    model.params.zero_grads();
    StepReport report;
    report.step = step_index;
    double loss_sum = 0.0;
    const real micro_scale = real(1) / static_cast<real>(cfg.accumulation_steps);

    for (int micro = 0; micro < cfg.accumulation_steps; ++micro) {
        const std::size_t di = sampler.sample(rng);
        const auto& ds = pool.datasets[di];
        report.datasets_used.push_back(ds.name);

        Tape tape;
        std::vector<TensorPtr> losses;
        std::vector<std::int64_t> positions;
        std::int64_t total_positions = 0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto idx = rng.below(ds.examples.size());
            auto el = example_loss(tape, model, ds.examples[idx], vocab, cfg.ablate_vision,
                                   cfg.ablate_speech);
            losses.push_back(el.loss);
            positions.push_back(el.positions);
            total_positions += el.positions;
        }
        // pool the per-example means into one batch mean over positions
        TensorPtr batch_loss;
        for (std::size_t i = 0; i < losses.size(); ++i) {
            const real w = static_cast<real>(static_cast<double>(positions[i]) /
                                             static_cast<double>(total_positions));
            auto weighted = ops::scale(tape, losses[i], w);
            batch_loss = batch_loss ? ops::add(tape, batch_loss, weighted) : weighted;
        }
        const double loss_value = static_cast<double>(batch_loss->data[0]);
        if (!std::isfinite(loss_value)) {
            throw training_error("non-finite loss on dataset '" + ds.name + "' at step " +
                                 std::to_string(step_index));
        }
        loss_sum += loss_value;
        auto scaled = ops::scale(tape, batch_loss, micro_scale);
        backward(scaled, tape);
    }

    report.loss = loss_sum / cfg.accumulation_steps;
    report.grad_norm = clip_global_norm(model, cfg.clip_norm);
    adam_apply(model, opt, cfg, lr_at_step(cfg, step_index));
    model.params.zero_grads();
    return report;
}

std::vector<StepReport> train_loop(TrimodalModel& model, const DatasetPool& pool,
                                   const Vocab& vocab, const TrainConfig& cfg, AdamState& opt,
                                   std::int64_t start_step, std::int64_t end_step,
                                   const std::function<void(const StepReport&)>& on_step) {
    std::vector<StepReport> reports;
    for (std::int64_t s = start_step; s < end_step; ++s) {
        reports.push_back(train_step(model, pool, vocab, cfg, opt, s));
        if (on_step) on_step(reports.back());
    }
    return reports;
}

void set_frozen(TrimodalModel& model, AdamState* opt, bool vision, bool speech) {
    model.params.set_frozen_prefix("vision.", vision);
    model.params.set_frozen_prefix("speech.", speech);
    if (opt) {
        for (auto* p : model.params.in_order()) {
            if (p->frozen) opt->drop(p->name);
        }
    }
}

double dataset_loss(const TrimodalModel& model, const std::vector<TrainingExample>& examples,
                    const Vocab& vocab, bool ablate_vision, bool ablate_speech) {
    if (examples.empty()) throw usage_error("dataset_loss: no examples");
    Tape t(false);
    double weighted = 0.0;
    std::int64_t total = 0;
    for (const auto& ex : examples) {
        auto el = example_loss(t, model, ex, vocab, ablate_vision, ablate_speech);
        weighted += static_cast<double>(el.loss->data[0]) * static_cast<double>(el.positions);
        total += el.positions;
    }
    return weighted / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// checkpointing
// ---------------------------------------------------------------------------

namespace {

std::string tensor_hash(const std::vector<real>& data) {
    return hash_bytes_hex(data.data(), data.size() * sizeof(real));
}

} // namespace

void save_checkpoint(const TrimodalModel& model, const AdamState& opt,
                     const std::map<std::string, std::string>& config_kv, const Vocab& vocab,
                     const std::string& dir) {
    fs::create_directories(fs::path(dir) / "params");
    fs::create_directories(fs::path(dir) / "opt");
    vocab.save((fs::path(dir) / "vocab.txt").string());

    std::ostringstream manifest;
    manifest << "format mmckpt1\n";
    manifest << "opt_step " << opt.step_count << "\n";
    for (const auto& [k, v] : config_kv) manifest << "config " << k << " " << v << "\n";
    manifest << "vocab vocab.txt\n";
    for (const auto* p : model.params.in_order()) {
        const std::string rel = "params/" + p->name + ".mmt";
        save_tensor_file((fs::path(dir) / rel).string(), p->value->shape, p->value->data);
        manifest << "param " << p->name << " " << tensor_hash(p->value->data) << " " << rel
                 << "\n";
    }
    for (const auto& [name, mom] : opt.moments) {
        const auto* p = const_cast<TrimodalModel&>(model).params.find(name);
        if (!p) continue;
        const std::string rel_m = "opt/" + name + ".m.mmt";
        const std::string rel_v = "opt/" + name + ".v.mmt";
        save_tensor_file((fs::path(dir) / rel_m).string(), p->value->shape, mom.m);
        save_tensor_file((fs::path(dir) / rel_v).string(), p->value->shape, mom.v);
        manifest << "moment " << name << " " << tensor_hash(mom.m) << " " << tensor_hash(mom.v)
                 << "\n";
    }
    manifest << "end\n";
    // manifest written last: a directory without one is not a checkpoint
    atomic_write_file((fs::path(dir) / "manifest").string(), manifest.str());
}

namespace {

struct Manifest {
    std::map<std::string, std::string> config;
    std::int64_t opt_step = 0;
    std::vector<std::tuple<std::string, std::string, std::string>> params; // name, hash, rel
    std::vector<std::tuple<std::string, std::string, std::string>> moments; // name, hash_m, hash_v
    bool complete = false;
};

Manifest read_manifest(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest");
    if (!f) throw integrity_error("checkpoint '" + dir + "' has no manifest");
    Manifest man;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (first) {
            if (kind != "format") throw integrity_error("checkpoint manifest: bad header");
            first = false;
            continue;
        }
        if (kind == "opt_step") {
            ls >> man.opt_step;
        } else if (kind == "config") {
            std::string key, value;
            ls >> key;
            std::getline(ls, value);
            if (!value.empty() && value[0] == ' ') value.erase(0, 1);
            man.config[key] = value;
        } else if (kind == "param") {
            std::string name, hash, rel;
            ls >> name >> hash >> rel;
            man.params.emplace_back(name, hash, rel);
        } else if (kind == "moment") {
            std::string name, hm, hv;
            ls >> name >> hm >> hv;
            man.moments.emplace_back(name, hm, hv);
        } else if (kind == "end") {
            man.complete = true;
        }
    }
    if (!man.complete) throw integrity_error("checkpoint manifest in '" + dir + "' is truncated");
    return man;
}

} // namespace

std::map<std::string, std::string> checkpoint_config(const std::string& dir) {
    return read_manifest(dir).config;
}

std::int64_t checkpoint_step(const std::string& dir) {
    return read_manifest(dir).opt_step;
}

Vocab checkpoint_vocab(const std::string& dir) {
    return Vocab::load((fs::path(dir) / "vocab.txt").string());
}

std::map<std::string, std::string> checkpoint_param_hashes(const std::string& dir) {
    std::map<std::string, std::string> out;
    for (const auto& [name, hash, rel] : read_manifest(dir).params) out[name] = hash;
    return out;
}

void load_checkpoint_into(TrimodalModel& model, AdamState& opt, const std::string& dir) {
    const auto man = read_manifest(dir);
    std::set<std::string> manifest_names;
    std::vector<std::string> missing;

    for (const auto& [name, hash, rel] : man.params) {
        manifest_names.insert(name);
        auto* p = model.params.find(name);
        if (!p) {
            missing.push_back(name + " (not in model)");
            continue;
        }
        auto loaded = load_tensor_file((fs::path(dir) / rel).string());
        if (loaded.shape != p->value->shape) {
            throw integrity_error("checkpoint parameter '" + name + "' has mismatched shape");
        }
        if (tensor_hash(loaded.data) != hash) {
            throw integrity_error("checkpoint parameter '" + name + "' failed its hash check");
        }
        p->value->data = std::move(loaded.data);
    }
    for (const auto* p : model.params.in_order()) {
        if (!manifest_names.count(p->name)) missing.push_back(p->name + " (not in checkpoint)");
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += "\n  " + m;
        throw integrity_error("checkpoint/model parameter mismatch:" + list);
    }

    opt.moments.clear();
    opt.step_count = man.opt_step;
    for (const auto& [name, hm, hv] : man.moments) {
        auto* p = model.params.find(name);
        if (!p) continue;
        auto m = load_tensor_file((fs::path(dir) / ("opt/" + name + ".m.mmt")).string());
        auto v = load_tensor_file((fs::path(dir) / ("opt/" + name + ".v.mmt")).string());
        if (tensor_hash(m.data) != hm || tensor_hash(v.data) != hv) {
            throw integrity_error("checkpoint moments for '" + name + "' failed their hash check");
        }
        AdamState::Moments mom;
        mom.m = std::move(m.data);
        mom.v = std::move(v.data);
        opt.moments.emplace(name, std::move(mom));
    }
}

} // namespace vls
