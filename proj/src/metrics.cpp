// SPDX-License-Identifier: Apache-2.0
#include "vls/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "vls/objectives.hpp"
#include "vls/tokenizer.hpp"

namespace vls::metrics {

namespace {

std::vector<std::string> norm_tokens(const std::string& text) {
    std::string folded = text;
    std::transform(folded.begin(), folded.end(), folded.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return split_whitespace(folded);
}

using Counts = std::map<std::vector<std::string>, std::int64_t>;

Counts ngram_counts(const std::vector<std::string>& toks, int n) {
    Counts out;
    if (static_cast<int>(toks.size()) < n) return out;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i) {
        ++out[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                       toks.begin() + static_cast<std::ptrdiff_t>(i) + n)];
    }
    return out;
}

double f1(double precision, double recall) {
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::int64_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::int64_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<std::int64_t>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<std::int64_t>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const std::int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

std::int64_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::int64_t> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
        std::fill(cur.begin(), cur.end(), 0);
    }
    return prev[m];
}

std::int64_t wer_edits(const std::string& hypothesis, const std::string& reference) {
    return edit_distance(norm_tokens(hypothesis), norm_tokens(reference));
}

} // namespace

double rouge_n(const std::string& candidate, const std::string& reference, int n) {
    if (n != 1 && n != 2) throw usage_error("rouge_n: n must be 1 or 2");
    const auto cand = norm_tokens(candidate);
    const auto ref = norm_tokens(reference);
    if (cand.empty() && ref.empty()) return 1.0;
    if (cand.empty() || ref.empty()) return 0.0;
    const auto cc = ngram_counts(cand, n);
    const auto rc = ngram_counts(ref, n);
    std::int64_t overlap = 0, cand_total = 0, ref_total = 0;
    for (const auto& [g, c] : cc) {
        cand_total += c;
        auto it = rc.find(g);
        if (it != rc.end()) overlap += std::min(c, it->second);
    }
    for (const auto& [g, c] : rc) ref_total += c;
    if (cand_total == 0 || ref_total == 0) return 0.0;
    const double p = static_cast<double>(overlap) / static_cast<double>(cand_total);
    const double r = static_cast<double>(overlap) / static_cast<double>(ref_total);
    return f1(p, r);
}

double rouge_l(const std::string& candidate, const std::string& reference) {
    const auto cand = norm_tokens(candidate);
    const auto ref = norm_tokens(reference);
    if (cand.empty() && ref.empty()) return 1.0;
    if (cand.empty() || ref.empty()) return 0.0;
    const auto lcs = static_cast<double>(lcs_length(cand, ref));
    const double p = lcs / static_cast<double>(cand.size());
    const double r = lcs / static_cast<double>(ref.size());
    return f1(p, r);
}

double wer(const std::string& hypothesis, const std::string& reference) {
    const auto ref = norm_tokens(reference);
    if (ref.empty()) throw usage_error("wer: reference must be non-empty");
    return static_cast<double>(wer_edits(hypothesis, reference)) /
           static_cast<double>(ref.size());
}

double token_f1(const std::string& candidate, const std::string& reference) {
    const auto cand = norm_tokens(candidate);
    const auto ref = norm_tokens(reference);
    if (cand.empty() && ref.empty()) return 1.0;
    if (cand.empty() || ref.empty()) return 0.0;
    std::map<std::string, std::int64_t> rc;
    for (const auto& t : ref) ++rc[t];
    std::map<std::string, std::int64_t> cc;
    for (const auto& t : cand) ++cc[t];
    std::int64_t overlap = 0;
    for (const auto& [t, c] : cc) {
        auto it = rc.find(t);
        if (it != rc.end()) overlap += std::min(c, it->second);
    }
    const double p = static_cast<double>(overlap) / static_cast<double>(cand.size());
    const double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
    return f1(p, r);
}

double bleu4(const std::string& candidate, const std::vector<std::string>& references) {
    const auto cand = norm_tokens(candidate);
    std::vector<std::vector<std::string>> refs;
    refs.reserve(references.size());
    for (const auto& r : references) refs.push_back(norm_tokens(r));
    if (cand.empty()) return 0.0;

    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        const auto cc = ngram_counts(cand, n);
        // per-gram clip against the max count over references
        Counts max_ref;
        for (const auto& ref : refs) {
            for (const auto& [g, c] : ngram_counts(ref, n)) {
                max_ref[g] = std::max(max_ref[g], c);
            }
        }
        std::int64_t matched = 0, total = 0;
        for (const auto& [g, c] : cc) {
            total += c;
            auto it = max_ref.find(g);
            if (it != max_ref.end()) matched += std::min(c, it->second);
        }
        // add-1 smoothing whenever the clipped count is zero (including the
        // degenerate case of a candidate shorter than n)
        double p;
        if (matched == 0) {
            p = 1.0 / static_cast<double>(total + 1);
        } else {
            p = static_cast<double>(matched) / static_cast<double>(total);
        }
        log_sum += std::log(p);
    }
    const double geo = std::exp(log_sum / 4.0);

    // brevity penalty against the reference length closest to the candidate
    // (ties toward the shorter reference)
    std::int64_t ref_len = 0;
    std::int64_t best_gap = -1;
    for (const auto& ref : refs) {
        const auto len = static_cast<std::int64_t>(ref.size());
        const std::int64_t gap = std::abs(len - static_cast<std::int64_t>(cand.size()));
        if (best_gap < 0 || gap < best_gap || (gap == best_gap && len < ref_len)) {
            best_gap = gap;
            ref_len = len;
        }
    }
    double bp = 1.0;
    if (static_cast<std::int64_t>(cand.size()) < ref_len) {
        bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand.size()));
    }
    return bp * geo;
}

double label_accuracy(const std::vector<std::string>& generations,
                      const std::vector<std::string>& references,
                      const std::vector<std::string>& label_set) {
    if (generations.size() != references.size()) {
        throw usage_error("label_accuracy: " + std::to_string(generations.size()) +
                          " generations vs " + std::to_string(references.size()) + " references");
    }
    if (generations.empty()) return 0.0;
    std::int64_t hit = 0;
    for (std::size_t i = 0; i < generations.size(); ++i) {
        if (label_of_generation(generations[i], label_set) == references[i]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(generations.size());
}

EvalReport evaluate_corpus(const std::vector<std::string>& hypotheses,
                           const std::vector<std::string>& references,
                           const std::vector<std::string>& metric_names) {
    if (hypotheses.size() != references.size()) {
        throw usage_error("evaluate_corpus: " + std::to_string(hypotheses.size()) +
                          " hypotheses vs " + std::to_string(references.size()) + " references");
    }
    EvalReport report;
    report.example_count = static_cast<std::int64_t>(hypotheses.size());
    const std::size_t n = hypotheses.size();
    for (const auto& name : metric_names) {
        double score = 0.0;
        if (name == "wer") {
            std::int64_t edits = 0, ref_words = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto ref = norm_tokens(references[i]);
                if (ref.empty()) throw usage_error("wer: reference must be non-empty");
                edits += wer_edits(hypotheses[i], references[i]);
                ref_words += static_cast<std::int64_t>(ref.size());
            }
            score = ref_words == 0 ? 0.0
                                   : static_cast<double>(edits) / static_cast<double>(ref_words);
        } else {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (name == "rouge1") {
                    sum += rouge_n(hypotheses[i], references[i], 1);
                } else if (name == "rouge2") {
                    sum += rouge_n(hypotheses[i], references[i], 2);
                } else if (name == "rougeL") {
                    sum += rouge_l(hypotheses[i], references[i]);
                } else if (name == "token_f1") {
                    sum += token_f1(hypotheses[i], references[i]);
                } else if (name == "bleu4") {
                    sum += bleu4(hypotheses[i], {references[i]});
                } else {
                    std::string valid;
                    for (const auto& v : known_metric_names()) valid += " " + v;
                    throw usage_error("unknown metric '" + name + "'; valid metrics:" + valid);
                }
            }
            score = n == 0 ? 0.0 : sum / static_cast<double>(n);
        }
        report.scores[name] = score;
    }
    return report;
}

std::vector<std::string> known_metric_names() {
    return {"rouge1", "rouge2", "rougeL", "wer", "token_f1", "bleu4"};
}

} // namespace vls::metrics
