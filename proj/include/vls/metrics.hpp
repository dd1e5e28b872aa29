// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "vls/common.hpp"

namespace vls::metrics {

// All metrics tokenize by whitespace and case-fold; no stemming. Scores are
// double regardless of the model precision build.

// n-gram overlap F1 (n = 1 or 2). Both empty -> 1, exactly one empty -> 0.
double rouge_n(const std::string& candidate, const std::string& reference, int n);

// Longest-common-subsequence F1 over tokens.
double rouge_l(const std::string& candidate, const std::string& reference);

// Token-level edit distance / reference length. Empty reference -> usage_error.
double wer(const std::string& hypothesis, const std::string& reference);

// Bag-of-tokens F1 with multiplicity (clipped counts).
double token_f1(const std::string& candidate, const std::string& reference);

// Geometric mean of clipped 1..4-gram precisions times the brevity penalty,
// with add-1 smoothing applied to zero n-gram counts.
double bleu4(const std::string& candidate, const std::vector<std::string>& references);

// Fraction of generations whose nearest label matches the reference label.
double label_accuracy(const std::vector<std::string>& generations,
                      const std::vector<std::string>& references,
                      const std::vector<std::string>& label_set);

struct EvalReport {
    std::map<std::string, double> scores;
    std::int64_t example_count = 0;
};

// Corpus-level scores: similarity metrics averaged per pair, WER pooled
// (total edits / total reference words). `metric_names` picks from
// rouge1, rouge2, rougeL, wer, token_f1, bleu4.
EvalReport evaluate_corpus(const std::vector<std::string>& hypotheses,
                           const std::vector<std::string>& references,
                           const std::vector<std::string>& metric_names);

std::vector<std::string> known_metric_names();

} // namespace vls::metrics
