// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "vls/io.hpp"
#include "vls/metrics.hpp"
#include "vls/synth.hpp"

namespace vls::commands {

// Programmatic command entry points; the CLI wraps these and maps exceptions
// onto exit codes (usage/schema -> 2, integrity -> 3).

void synth(const SyntheticCorpusSpec& spec, const std::string& out_dir);

// Trains on the configured task pool with encoders frozen by default, writes
// step reports to out_dir/train.log and the final state to
// out_dir/checkpoint (plus periodic checkpoint_<step> directories when
// configured). Returns the final checkpoint path.
std::string pretrain(const RunConfig& cfg);

// Same loop seeded from an existing checkpoint, encoders unfrozen by
// default, fresh optimizer.
std::string finetune(const RunConfig& cfg, const std::string& checkpoint_dir);

// One generated string per input record, line-aligned.
std::vector<std::string> generate_outputs(const RunConfig& cfg, const std::string& checkpoint_dir,
                                          const std::string& records_path);

// label_set is only consulted by the label_accuracy metric.
metrics::EvalReport eval_files(const std::string& hyp_path, const std::string& ref_path,
                               const std::vector<std::string>& metric_names,
                               const std::vector<std::string>& label_set = {});

std::string report_to_json(const metrics::EvalReport& report);

// File-level wrappers used by the CLI.
void synth_cmd(const std::string& spec_path, const std::string& out_dir);
void pretrain_cmd(const std::string& config_path);
void finetune_cmd(const std::string& config_path, const std::string& checkpoint_dir);
void generate_cmd(const std::string& config_path, const std::string& checkpoint_dir,
                  const std::string& input_path, const std::string& output_path);
void eval_cmd(const std::string& hyp_path, const std::string& ref_path,
              const std::string& metrics_csv, const std::string& labels_csv,
              const std::string& out_path);

} // namespace vls::commands
