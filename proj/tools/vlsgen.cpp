// SPDX-License-Identifier: Apache-2.0
//
// Trimodal (vision / speech / text) sequence-to-sequence toolkit:
//   synth     build a synthetic paired corpus
//   pretrain  multitask pretraining with ESW dataset sampling
//   finetune  continue training from a checkpoint
//   generate  decode one output line per input record
//   eval      score hypotheses against references

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "vls/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"vlsgen: trimodal text-completion training and generation"};
    app.require_subcommand(1);

    std::string spec_path, out_dir;
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    synth->add_option("--spec", spec_path, "synth spec file")->required();
    synth->add_option("--out", out_dir, "output directory")->required();

    std::string pre_config;
    auto* pretrain = app.add_subcommand("pretrain", "multitask pretraining");
    pretrain->add_option("--config", pre_config, "run config file")->required();

    std::string ft_config, ft_checkpoint;
    auto* finetune = app.add_subcommand("finetune", "finetune from a checkpoint");
    finetune->add_option("--config", ft_config, "run config file")->required();
    finetune->add_option("--checkpoint", ft_checkpoint, "checkpoint directory")->required();

    std::string gen_config, gen_checkpoint, gen_input, gen_output;
    auto* generate = app.add_subcommand("generate", "decode records to text");
    generate->add_option("--config", gen_config, "run config file")->required();
    generate->add_option("--checkpoint", gen_checkpoint, "checkpoint directory")->required();
    generate->add_option("--input", gen_input, "input record file (jsonl)")->required();
    generate->add_option("--output", gen_output, "output text file, one line per record")
        ->required();

    std::string eval_hyp, eval_ref, eval_metrics, eval_labels, eval_out;
    auto* eval = app.add_subcommand("eval", "score hypotheses against references");
    eval->add_option("--hyp", eval_hyp, "hypothesis file, one per line")->required();
    eval->add_option("--ref", eval_ref, "reference file, one per line")->required();
    eval->add_option("--metrics", eval_metrics,
                     "comma-separated metrics (default: all of rouge1,rouge2,rougeL,wer,token_f1,bleu4;"
                     " label_accuracy needs --labels)");
    eval->add_option("--labels", eval_labels, "comma-separated label set for label_accuracy");
    eval->add_option("--out", eval_out, "report file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) {
            vls::commands::synth_cmd(spec_path, out_dir);
        } else if (pretrain->parsed()) {
            vls::commands::pretrain_cmd(pre_config);
        } else if (finetune->parsed()) {
            vls::commands::finetune_cmd(ft_config, ft_checkpoint);
        } else if (generate->parsed()) {
            vls::commands::generate_cmd(gen_config, gen_checkpoint, gen_input, gen_output);
        } else if (eval->parsed()) {
            vls::commands::eval_cmd(eval_hyp, eval_ref, eval_metrics, eval_labels, eval_out);
        }
    } catch (const vls::usage_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const vls::schema_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const vls::integrity_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
