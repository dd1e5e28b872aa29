// SPDX-License-Identifier: Apache-2.0
#include "vls/commands.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vls/model.hpp"
#include "vls/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vls::commands {

namespace {

Vocab load_vocab_for(const RunConfig& cfg) {
    const std::string path = cfg.vocab_file.empty()
                                 ? (fs::path(cfg.data_dir) / "vocab.txt").string()
                                 : cfg.vocab_file;
    return Vocab::load(path);
}

std::string step_report_json(const StepReport& r) {
    json j;
    j["step"] = r.step;
    j["loss"] = r.loss;
    j["grad_norm"] = r.grad_norm;
    j["datasets"] = r.datasets_used;
    return j.dump();
}

std::string run_training(const RunConfig& cfg, TrimodalModel& model, const Vocab& vocab,
                         const TrainConfig& tc, AdamState& opt, std::int64_t start_step) {
    if (cfg.out_dir.empty()) throw usage_error("config: out_dir is required");
    fs::create_directories(cfg.out_dir);
    const auto pool = load_dataset_pool(cfg, vocab);

    std::ofstream log(fs::path(cfg.out_dir) / "train.log", std::ios::app);
    const auto kv = cfg.to_kv();
    train_loop(model, pool, vocab, tc, opt, start_step, cfg.max_steps,
               [&](const StepReport& r) {
                   log << step_report_json(r) << "\n";
                   log.flush();
                   if (cfg.checkpoint_every > 0 && (r.step + 1) % cfg.checkpoint_every == 0 &&
                       r.step + 1 < cfg.max_steps) {
                       save_checkpoint(model, opt, kv, vocab,
                                       (fs::path(cfg.out_dir) /
                                        ("checkpoint_" + std::to_string(r.step + 1)))
                                           .string());
                   }
               });
    const std::string final_dir = (fs::path(cfg.out_dir) / "checkpoint").string();
    save_checkpoint(model, opt, kv, vocab, final_dir);
    return final_dir;
}

} // namespace

void synth(const SyntheticCorpusSpec& spec, const std::string& out_dir) {
    generate_synthetic_corpus(spec, out_dir);
}

std::string pretrain(const RunConfig& cfg) {
    const auto vocab = load_vocab_for(cfg);
    TrimodalModel model(cfg.model_config(static_cast<std::int64_t>(vocab.size())));
    AdamState opt;
    const auto tc = cfg.train_config(/*default_freeze=*/true);
    set_frozen(model, &opt, tc.freeze_vision, tc.freeze_speech);
    return run_training(cfg, model, vocab, tc, opt, 0);
}

std::string finetune(const RunConfig& cfg, const std::string& checkpoint_dir) {
    // model dims come from the checkpoint; training knobs from the new config
    const auto ckpt_cfg = RunConfig::from_kv(checkpoint_config(checkpoint_dir));
    const auto vocab = checkpoint_vocab(checkpoint_dir);
    TrimodalModel model(ckpt_cfg.model_config(static_cast<std::int64_t>(vocab.size())));
    AdamState loaded;
    load_checkpoint_into(model, loaded, checkpoint_dir);

    AdamState opt; // finetuning restarts optimizer state
    const auto tc = cfg.train_config(/*default_freeze=*/false);
    set_frozen(model, &opt, tc.freeze_vision, tc.freeze_speech);
    return run_training(cfg, model, vocab, tc, opt, 0);
}

namespace {

MultimodalInput input_from_record(RawRecord rec, const RunConfig& cfg, const Vocab& vocab,
                                  const std::string& base_dir, std::size_t index) {
    const TaskKind task = task_from_name(rec.task);
    attach_record_media(rec, base_dir);
    std::string prompt = rec.style.has_value() ? prompt_for(task, *rec.style) : prompt_for(task);
    std::string input_text = rec.text_input.value_or("");
    const bool reconstruction = task == TaskKind::VisionTextReconstruction ||
                                task == TaskKind::SpeechTextReconstruction ||
                                task == TaskKind::LanguageReconstruction;
    if (reconstruction && input_text.empty() && !rec.text_target.empty()) {
        SpanMaskSpec mask;
        mask.mask_rate = cfg.mask_rate;
        mask.mean_span_len = cfg.mean_span_len;
        mask.seed = cfg.seed ^ (0x100000001b3ull * (index + 1));
        const auto res = corrupt_spans(vocab.encode(rec.text_target), mask);
        input_text = vocab.decode(res.masked_input);
    }
    MultimodalInput input;
    if (!cfg.ablate_vision) {
        input.image = std::move(rec.image);
        input.video = std::move(rec.video);
    }
    if (!cfg.ablate_speech) input.audio = std::move(rec.audio);
    input.text_ids = vocab.encode(prompt + input_text);
    return input;
}

} // namespace

std::vector<std::string> generate_outputs(const RunConfig& cfg, const std::string& checkpoint_dir,
                                          const std::string& records_path) {
    const auto ckpt_cfg = RunConfig::from_kv(checkpoint_config(checkpoint_dir));
    const auto vocab = checkpoint_vocab(checkpoint_dir);
    TrimodalModel model(ckpt_cfg.model_config(static_cast<std::int64_t>(vocab.size())));
    AdamState opt;
    load_checkpoint_into(model, opt, checkpoint_dir);

    const auto records = load_records(records_path);
    const std::string base_dir = fs::path(records_path).parent_path().string();
    const auto gc = cfg.generation_config();
    std::vector<std::string> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto input = input_from_record(records[i], cfg, vocab, base_dir, i);
        out.push_back(vocab.decode(generate(model, input, gc)));
    }
    return out;
}

metrics::EvalReport eval_files(const std::string& hyp_path, const std::string& ref_path,
                               const std::vector<std::string>& metric_names,
                               const std::vector<std::string>& label_set) {
    auto read_lines = [](const std::string& path) {
        std::ifstream f(path);
        if (!f) throw usage_error("cannot read file: " + path);
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(f, line)) lines.push_back(line);
        return lines;
    };
    const auto hyp = read_lines(hyp_path);
    const auto ref = read_lines(ref_path);
    if (hyp.size() != ref.size()) {
        throw usage_error("line count mismatch: " + std::to_string(hyp.size()) + " hypotheses vs " +
                          std::to_string(ref.size()) + " references");
    }
    std::vector<std::string> core;
    bool want_label_accuracy = false;
    for (const auto& name : metric_names) {
        if (name == "label_accuracy") {
            want_label_accuracy = true;
        } else {
            core.push_back(name);
        }
    }
    auto report = metrics::evaluate_corpus(hyp, ref, core);
    report.example_count = static_cast<std::int64_t>(hyp.size());
    if (want_label_accuracy) {
        if (label_set.empty()) {
            throw usage_error("label_accuracy requires a label set (--labels a,b,...)");
        }
        report.scores["label_accuracy"] = metrics::label_accuracy(hyp, ref, label_set);
    }
    return report;
}

std::string report_to_json(const metrics::EvalReport& report) {
    json j;
    j["example_count"] = report.example_count;
    for (const auto& [name, score] : report.scores) j["metrics"][name] = score;
    return j.dump();
}

void synth_cmd(const std::string& spec_path, const std::string& out_dir) {
    synth(SyntheticCorpusSpec::parse_file(spec_path), out_dir);
}

void pretrain_cmd(const std::string& config_path) {
    pretrain(RunConfig::parse_file(config_path));
}

void finetune_cmd(const std::string& config_path, const std::string& checkpoint_dir) {
    finetune(RunConfig::parse_file(config_path), checkpoint_dir);
}

void generate_cmd(const std::string& config_path, const std::string& checkpoint_dir,
                  const std::string& input_path, const std::string& output_path) {
    const auto cfg = RunConfig::parse_file(config_path);
    const auto lines = generate_outputs(cfg, checkpoint_dir, input_path);
    std::string out;
    for (const auto& line : lines) out += line + '\n';
    atomic_write_file(output_path, out);
}

void eval_cmd(const std::string& hyp_path, const std::string& ref_path,
              const std::string& metrics_csv, const std::string& labels_csv,
              const std::string& out_path) {
    auto split_csv = [](const std::string& csv) {
        std::vector<std::string> items;
        std::istringstream ss(csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) items.push_back(item);
        }
        return items;
    };
    auto names = split_csv(metrics_csv);
    if (names.empty()) names = metrics::known_metric_names();
    const auto report = eval_files(hyp_path, ref_path, names, split_csv(labels_csv));
    const auto text = report_to_json(report) + "\n";
    if (out_path.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        atomic_write_file(out_path, text);
    }
}

} // namespace vls::commands
