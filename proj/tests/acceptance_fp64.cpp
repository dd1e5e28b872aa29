// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite, 64-bit build: gradient correctness, fusion/causality
// invariants, and metric/oracle equivalence. Prints one pass/fail line per
// criterion; exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "metric_oracles.hpp"
#include "vls/metrics.hpp"
#include "vls/model.hpp"
#include "vls/rng.hpp"

using namespace vls;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void criterion(const std::string& name, bool ok, const std::string& detail = "") {
    std::printf("[%s] %s%s%s\n", ok ? "PASS" : "FAIL", name.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    if (!ok) ++g_failures;
}

Parameter random_param(const std::string& name, std::vector<std::int64_t> shape, SeededRng& rng,
                       double lo = -1.0, double hi = 1.0) {
    auto t = make_tensor(std::move(shape));
    for (auto& v : t->data) v = static_cast<real>(rng.uniform(lo, hi));
    return Parameter(name, t);
}

TensorPtr weighted_sum(Tape& t, const TensorPtr& x, std::uint64_t seed) {
    auto w = make_tensor(x->shape);
    SeededRng rng(seed);
    for (auto& v : w->data) v = static_cast<real>(rng.uniform(-1.0, 1.0));
    return ops::sum_all(t, ops::mul(t, x, w));
}

ModelConfig tiny_config(std::uint64_t seed) {
    ModelConfig mc;
    mc.d_text = 16;
    mc.joint_layers = 1;
    mc.dec_layers = 1;
    mc.heads = 2;
    mc.ffn_mult = 2;
    mc.max_text_len = 32;
    mc.max_target_len = 16;
    mc.vocab_size = 48;
    mc.seed = seed;
    mc.vision.patch = 2;
    mc.vision.temporal_stride = 2;
    mc.vision.d_mod = 8;
    mc.vision.layers = 1;
    mc.vision.heads = 2;
    mc.vision.ffn_mult = 2;
    mc.vision.max_len = 64;
    mc.speech.stride1 = 2;
    mc.speech.stride2 = 3;
    mc.speech.c1 = 4;
    mc.speech.d_mod = 8;
    mc.speech.layers = 1;
    mc.speech.heads = 2;
    mc.speech.ffn_mult = 2;
    mc.speech.max_len = 64;
    mc.speech.rel_buckets = 16;
    mc.speech.rel_max_distance = 64;
    return mc;
}

ImageTensor random_image(std::int64_t h, std::int64_t w, std::uint64_t seed) {
    ImageTensor img;
    img.height = h;
    img.width = w;
    img.channels = 3;
    img.values.resize(static_cast<std::size_t>(h * w * 3));
    SeededRng rng(seed);
    for (auto& v : img.values) v = static_cast<real>(rng.uniform(0.0, 1.0));
    return img;
}

AudioTensor random_audio(std::int64_t n, std::uint64_t seed) {
    AudioTensor a;
    a.samples.resize(static_cast<std::size_t>(n));
    SeededRng rng(seed);
    for (auto& v : a.samples) v = static_cast<real>(rng.uniform(-1.0, 1.0));
    return a;
}

std::vector<int> random_ids(std::int64_t n, std::int64_t vocab, std::uint64_t seed) {
    std::vector<int> ids;
    SeededRng rng(seed);
    for (std::int64_t i = 0; i < n; ++i) {
        ids.push_back(kNumReserved +
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - kNumReserved))));
    }
    return ids;
}

// --- criterion 1 ------------------------------------------------------------

double op_level_max_error() {
    GradCheckOptions opts;
    opts.step = 1e-5;
    double worst = 0.0;
    auto track = [&](double e) { worst = std::max(worst, e); };

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SeededRng rng(5000 + seed);
        const std::int64_t r = 2 + static_cast<std::int64_t>(rng.below(6));
        const std::int64_t c = 2 + static_cast<std::int64_t>(rng.below(6));
        const std::int64_t k = 2 + static_cast<std::int64_t>(rng.below(6));
        auto a = random_param("a", {r, c}, rng);
        auto b = random_param("b", {r, c}, rng);
        auto m2 = random_param("m2", {c, k}, rng);
        auto gain = random_param("gain", {c}, rng, 0.5, 1.5);
        auto bias = random_param("bias", {c}, rng, -0.5, 0.5);
        auto sc = random_param("sc", {1}, rng);

        track(finite_diff_check(
            [&](Tape& t) {
                return weighted_sum(t, ops::scale(t, ops::mul(t, ops::add(t, a.value, b.value), a.value), real(0.7)), 11 + seed);
            },
            {&a, &b}, opts));
        track(finite_diff_check(
            [&](Tape& t) { return weighted_sum(t, ops::sub(t, a.value, b.value), 13 + seed); },
            {&a, &b}, opts));
        track(finite_diff_check(
            [&](Tape& t) { return weighted_sum(t, ops::matmul(t, a.value, m2.value), 17 + seed); },
            {&a, &m2}, opts));
        track(finite_diff_check(
            [&](Tape& t) { return weighted_sum(t, ops::transpose(t, a.value), 19 + seed); }, {&a},
            opts));
        track(finite_diff_check(
            [&](Tape& t) { return weighted_sum(t, ops::reshape(t, a.value, {c, r}), 23 + seed); },
            {&a}, opts));
        track(finite_diff_check(
            [&](Tape& t) {
                auto rows = ops::slice_rows(t, a.value, 0, r - 1);
                auto cols = ops::slice_cols(t, a.value, 1, c);
                return ops::add(t, weighted_sum(t, rows, 29 + seed), weighted_sum(t, cols, 31 + seed));
            },
            {&a}, opts));
        track(finite_diff_check(
            [&](Tape& t) {
                auto cr = ops::concat_rows(t, {a.value, b.value});
                auto cc = ops::concat_cols(t, {a.value, b.value});
                return ops::add(t, weighted_sum(t, cr, 37 + seed), weighted_sum(t, cc, 41 + seed));
            },
            {&a, &b}, opts));
        track(finite_diff_check(
            [&](Tape& t) { return weighted_sum(t, ops::softmax(t, a.value, 1), 43 + seed); }, {&a},
            opts));
        track(finite_diff_check(
            [&](Tape& t) {
                return weighted_sum(t, ops::layer_norm(t, a.value, gain.value, bias.value, real(1e-5)), 47 + seed);
            },
            {&a, &gain, &bias}, opts));
        track(finite_diff_check(
            [&](Tape& t) { return weighted_sum(t, ops::gelu(t, a.value), 53 + seed); }, {&a}, opts));
        track(finite_diff_check(
            [&](Tape& t) { return weighted_sum(t, ops::sigmoid(t, a.value), 59 + seed); }, {&a},
            opts));
        track(finite_diff_check(
            [&](Tape& t) { return weighted_sum(t, ops::add_bias(t, a.value, bias.value), 61 + seed); },
            {&a, &bias}, opts));
        track(finite_diff_check(
            [&](Tape& t) {
                return weighted_sum(t, ops::mul_scalar_tensor(t, a.value, sc.value), 67 + seed);
            },
            {&a, &sc}, opts));

        std::vector<int> ids;
        for (int i = 0; i < 5; ++i) {
            ids.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(r))));
        }
        track(finite_diff_check(
            [&](Tape& t) { return weighted_sum(t, ops::embedding(t, a.value, ids), 71 + seed); },
            {&a}, opts));

        auto vec = random_param("vec", {7}, rng);
        std::vector<std::int64_t> gidx;
        for (int i = 0; i < 6; ++i) gidx.push_back(static_cast<std::int64_t>(rng.below(7)));
        track(finite_diff_check(
            [&](Tape& t) {
                return weighted_sum(t, ops::gather(t, vec.value, gidx, {2, 3}), 73 + seed);
            },
            {&vec}, opts));

        std::vector<std::uint8_t> valid(static_cast<std::size_t>(r * c), 1);
        for (std::size_t i = 0; i < valid.size(); ++i) {
            if (rng.uniform() < 0.25) valid[i] = 0;
        }
        for (std::int64_t row = 0; row < r; ++row) valid[static_cast<std::size_t>(row * c)] = 1;
        track(finite_diff_check(
            [&](Tape& t) {
                return weighted_sum(t, ops::masked_softmax_rows(t, a.value, valid), 79 + seed);
            },
            {&a}, opts));

        auto q = random_param("q", {r, k}, rng);
        auto kk = random_param("k", {c, k}, rng);
        auto vv = random_param("v", {c, k}, rng);
        auto ab = random_param("ab", {r, c}, rng, -0.3, 0.3);
        track(finite_diff_check(
            [&](Tape& t) {
                return weighted_sum(t, ops::attention(t, q.value, kk.value, vv.value, valid, ab.value), 83 + seed);
            },
            {&q, &kk, &vv, &ab}, opts));

        std::vector<int> targets;
        for (std::int64_t i = 0; i < r; ++i) {
            targets.push_back(i == 0 ? -100 : static_cast<int>(rng.below(static_cast<std::uint64_t>(c))));
        }
        track(finite_diff_check(
            [&](Tape& t) { return ops::cross_entropy_with_logits(t, a.value, targets, -100); },
            {&a}, opts));
    }
    return worst;
}

double model_level_max_error() {
    GradCheckOptions opts;
    opts.step = 1e-5;
    opts.max_elements_per_param = 6;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        TrimodalModel model(tiny_config(800 + seed));
        MultimodalInput in1;
        in1.image = random_image(4, 4, seed * 5 + 1);
        in1.text_ids = random_ids(3, 48, seed * 5 + 2);
        MultimodalInput in2;
        in2.audio = random_audio(12, seed * 5 + 3);
        in2.text_ids = random_ids(2, 48, seed * 5 + 4);
        const std::vector<int> dec1 = {kBosId, kNumReserved + 1, kNumReserved + 2};
        const std::vector<int> lab1 = {kNumReserved + 1, kNumReserved + 2, kEosId};
        const std::vector<int> dec2 = {kBosId, kNumReserved + 4};
        const std::vector<int> lab2 = {kNumReserved + 4, kEosId};
        auto f = [&](Tape& t) {
            auto l1 = ops::cross_entropy_with_logits(
                t, forward_teacher_forced(t, model, fuse_and_encode(t, model, in1), dec1), lab1, kPadId);
            auto l2 = ops::cross_entropy_with_logits(
                t, forward_teacher_forced(t, model, fuse_and_encode(t, model, in2), dec2), lab2, kPadId);
            return ops::add(t, ops::scale(t, l1, real(0.6)), ops::scale(t, l2, real(0.4)));
        };
        opts.select_seed = seed;
        worst = std::max(worst, finite_diff_check(f, model.params.in_order(), opts));
    }
    return worst;
}

// --- criterion 4 ------------------------------------------------------------

bool fusion_and_causality() {
    TrimodalModel model(tiny_config(42));
    Tape t(false);
    const auto img = random_image(4, 4, 5);
    const auto audio = random_audio(12, 6);
    const auto text = random_ids(3, 48, 7);

    // memory lengths over all seven present/absent combinations
    for (int mask = 1; mask < 8; ++mask) {
        MultimodalInput input;
        std::int64_t expect = 0;
        if (mask & 1) {
            input.image = img;
            expect += 4;
        }
        if (mask & 2) {
            input.audio = audio;
            expect += 2;
        }
        if (mask & 4) {
            input.text_ids = text;
            expect += 3;
        }
        auto mem = fuse_and_encode(t, model, input);
        if (mem.length() != expect || mem.states->dim(0) != expect) return false;
    }

    // causality: perturbing a later target position leaves earlier logits
    // bitwise unchanged
    MultimodalInput input;
    input.image = img;
    input.text_ids = text;
    const auto mem = fuse_and_encode(t, model, input);
    std::vector<int> ids = {kBosId};
    const auto tail = random_ids(6, 48, 8);
    ids.insert(ids.end(), tail.begin(), tail.end());
    const auto logits = forward_teacher_forced(t, model, mem, ids);
    for (std::size_t pos = 1; pos < ids.size(); ++pos) {
        auto perturbed = ids;
        perturbed[pos] += 1;
        const auto logits2 = forward_teacher_forced(t, model, mem, perturbed);
        const std::int64_t v = logits->dim(1);
        if (std::memcmp(logits->data.data(), logits2->data.data(),
                        static_cast<std::size_t>(pos * v) * sizeof(real)) != 0) {
            return false;
        }
    }

    // a padded-out segment behaves like an absent one
    MultimodalInput without;
    without.image = img;
    without.text_ids = text;
    MultimodalInput padded = without;
    padded.audio = audio;
    padded.speech_valid.assign(2, 0);
    std::vector<int> dec = {kBosId, kNumReserved + 5, kNumReserved + 6};
    std::vector<int> lab = {kNumReserved + 5, kNumReserved + 6, kEosId};
    auto la = ops::cross_entropy_with_logits(
        t, forward_teacher_forced(t, model, fuse_and_encode(t, model, without), dec), lab, kPadId);
    auto lb = ops::cross_entropy_with_logits(
        t, forward_teacher_forced(t, model, fuse_and_encode(t, model, padded), dec), lab, kPadId);
    return std::abs(static_cast<double>(la->data[0]) - static_cast<double>(lb->data[0])) < 1e-5;
}

// --- criterion 9 ------------------------------------------------------------

bool metrics_match_oracles() {
    SeededRng rng(424242);
    const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f"};
    auto make = [&](bool allow_empty) {
        std::string s;
        const auto len = (allow_empty ? 0 : 1) + rng.below(8);
        for (std::uint64_t i = 0; i < len; ++i) {
            if (i) s += ' ';
            s += words[rng.below(words.size())];
        }
        return s;
    };
    for (int trial = 0; trial < 500; ++trial) {
        const std::string cand = make(true);
        const std::string ref = make(false);
        if (std::abs(metrics::rouge_n(cand, ref, 1) - oracle::rouge_n(cand, ref, 1)) > 1e-12) return false;
        if (std::abs(metrics::rouge_n(cand, ref, 2) - oracle::rouge_n(cand, ref, 2)) > 1e-12) return false;
        if (std::abs(metrics::rouge_l(cand, ref) - oracle::rouge_l(cand, ref)) > 1e-12) return false;
        if (std::abs(metrics::wer(cand, ref) - oracle::wer(cand, ref)) > 1e-12) return false;
        if (std::abs(metrics::token_f1(cand, ref) - oracle::token_f1(cand, ref)) > 1e-12) return false;
        if (std::abs(metrics::bleu4(cand, {ref}) - oracle::bleu4(cand, ref)) > 1e-12) return false;
    }

    // frozen hand cases
    if (std::abs(metrics::rouge_n("a b c", "a b d", 1) - 2.0 / 3.0) > 1e-12) return false;
    if (std::abs(metrics::rouge_l("a c e", "a b c d e") - 0.75) > 1e-12) return false;
    if (std::abs(metrics::rouge_l("c b a", "a b c") - 1.0 / 3.0) > 1e-12) return false;
    if (std::abs(metrics::wer("a x c", "a b c") - 1.0 / 3.0) > 1e-12) return false;
    if (std::abs(metrics::wer("", "a b c d") - 1.0) > 1e-12) return false;
    if (std::abs(metrics::wer("p q r s t u", "a b c") - 2.0) > 1e-12) return false;
    if (std::abs(metrics::token_f1("a a b", "a b b") - 2.0 / 3.0) > 1e-12) return false;
    if (std::abs(metrics::bleu4("a b c d e", {"a b c d e"}) - 1.0) > 1e-12) return false;
    if (std::abs(metrics::bleu4("a b c d", {"a b c d e f g h"}) - std::exp(-1.0)) > 1e-12) return false;
    std::string cand24, ref24;
    for (int i = 0; i < 24; ++i) {
        cand24 += "c" + std::to_string(i) + " ";
        ref24 += "r" + std::to_string(i) + " ";
    }
    const double smoothed = metrics::bleu4(cand24, {ref24});
    return smoothed > 0.0 && smoothed < 0.05;
}

} // namespace

int main() {
    {
        const auto t0 = Clock::now();
        double op_err = -1.0, model_err = -1.0;
        bool ok = true;
        std::string detail;
        try {
            op_err = op_level_max_error();
            model_err = model_level_max_error();
        } catch (const std::exception& e) {
            ok = false;
            detail = e.what();
        }
        const std::chrono::duration<double> dt = Clock::now() - t0;
        if (ok) {
            ok = op_err < 1e-4 && model_err < 1e-4 && dt.count() < 120.0;
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "op max rel err %.3g, model max rel err %.3g, %.1fs (10 seeds each)",
                          op_err, model_err, dt.count());
            detail = buf;
        }
        criterion("criterion 1: gradient correctness (64-bit, <1e-4, <2min)", ok, detail);
    }
    {
        bool ok = false;
        std::string detail;
        try {
            ok = fusion_and_causality();
        } catch (const std::exception& e) {
            detail = e.what();
        }
        criterion("criterion 4: fusion lengths, causality, padded==absent", ok, detail);
    }
    {
        bool ok = false;
        std::string detail;
        try {
            ok = metrics_match_oracles();
        } catch (const std::exception& e) {
            detail = e.what();
        }
        criterion("criterion 9: metrics match brute-force oracles (500 pairs, 1e-12)", ok, detail);
    }
    if (g_failures) std::printf("%d criterion(s) failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
