#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aum/core_math.hpp"
#include "aum/data.hpp"
#include "aum/errors.hpp"
#include "aum/logit_log.hpp"
#include "aum/threshold.hpp"
#include "aum/trainer.hpp"

namespace aum {

inline constexpr double kDefaultPercentile = 99.0;

struct AumEntry {
    double aum = 0.0;
    bool is_threshold = false;
    int assigned_label = 0;

    friend bool operator==(const AumEntry&, const AumEntry&) = default;
};

struct AumTable {
    std::map<SampleId, AumEntry> entries;
    int epochs_used = 0;

    friend bool operator==(const AumTable&, const AumTable&) = default;
};

using MarginTraces = std::map<SampleId, MarginTrace>;

/// Per-sample margin traces from a log, checking that every sample in the log
/// has exactly one record for each epoch 1..T and a constant assigned label.
inline MarginTraces margin_traces(const LogitLog& log) {
    const int T = log.header().epochs_logged;
    const double missing = std::numeric_limits<double>::quiet_NaN();
    MarginTraces traces;
    std::map<SampleId, int> labels;
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto r = log[i];
        auto [lit, fresh] = labels.emplace(r.sample_id, r.assigned_label);
        if (!fresh && lit->second != r.assigned_label)
            throw corrupt_log_error("corrupt log: sample " + std::to_string(r.sample_id) +
                                    " changes assigned label at epoch " + std::to_string(r.epoch));
        auto& trace = traces[r.sample_id];
        if (trace.empty()) trace.assign(static_cast<std::size_t>(T), missing);
        double& slot = trace[static_cast<std::size_t>(r.epoch - 1)];
        if (!std::isnan(slot))
            throw corrupt_log_error("corrupt log: duplicate record for epoch " + std::to_string(r.epoch) +
                                    ", sample " + std::to_string(r.sample_id));
        slot = margin(r.logits, static_cast<std::size_t>(r.assigned_label));
    }
    if (traces.empty()) throw corrupt_log_error("corrupt log: no records");
    for (const auto& [id, trace] : traces)
        for (int t = 0; t < T; ++t)
            if (std::isnan(trace[static_cast<std::size_t>(t)]))
                throw corrupt_log_error("corrupt log: missing record for epoch " + std::to_string(t + 1) +
                                        ", sample " + std::to_string(id));
    return traces;
}

inline std::map<SampleId, int> logged_labels(const LogitLog& log) {
    std::map<SampleId, int> labels;
    for (std::size_t i = 0; i < log.size(); ++i) labels.emplace(log[i].sample_id, log[i].assigned_label);
    return labels;
}

/// AUM of every logged sample: the mean margin over all logged epochs, taken
/// against the label the sample was trained with (the extra class for
/// threshold samples).
inline AumTable compute_aum_table(const LogitLog& log, const IdSet& threshold_ids) {
    const auto traces = margin_traces(log);
    const auto labels = logged_labels(log);
    for (SampleId id : threshold_ids)
        if (!traces.count(id))
            throw std::invalid_argument("compute_aum_table: threshold id " + std::to_string(id) + " is not in the log");
    AumTable table;
    table.epochs_used = log.header().epochs_logged;
    for (const auto& [id, trace] : traces)
        table.entries.emplace(id, AumEntry{aum(trace), threshold_ids.count(id) != 0, labels.at(id)});
    return table;
}

inline std::vector<double> threshold_aums(const AumTable& table) {
    std::vector<double> values;
    for (const auto& [id, e] : table.entries)
        if (e.is_threshold) values.push_back(e.aum);
    return values;
}

/// The q-th nearest-rank percentile of the threshold samples' AUMs.
inline double compute_alpha(const AumTable& table, double q) {
    const auto values = threshold_aums(table);
    if (values.empty()) throw std::invalid_argument("compute_alpha: table has no threshold samples");
    return percentile_nearest_rank(values, q);
}

struct IdentificationMetrics {
    double precision = 1.0;
    double recall = 1.0;
    std::size_t num_flagged = 0;
    std::size_t num_mislabeled = 0;

    friend bool operator==(const IdentificationMetrics&, const IdentificationMetrics&) = default;
};

struct IdentificationReport {
    double alpha_round1 = std::numeric_limits<double>::quiet_NaN();
    double alpha_round2 = std::numeric_limits<double>::quiet_NaN();
    double percentile_q = kDefaultPercentile;
    IdSet flagged_ids;
    std::map<SampleId, int> judged_by;  // sample id -> round (1 or 2)
    std::optional<IdentificationMetrics> metrics;

    double alpha(int round) const { return round == 1 ? alpha_round1 : alpha_round2; }
};

/// Two-round verdicts. Samples in s1 were threshold samples in round 1 and
/// are judged by round 2; everything else is judged by round 1. A sample is
/// flagged iff its AUM in the judging round is <= that round's alpha.
inline IdentificationReport flag_mislabeled(const AumTable& t1, const AumTable& t2, const ThresholdPlan& plan,
                                            double q) {
    auto check_markers = [](const AumTable& table, const IdSet& subset, int round) {
        for (SampleId id : subset)
            if (!table.entries.count(id))
                throw std::invalid_argument("flag_mislabeled: round " + std::to_string(round) + " table lacks id " +
                                            std::to_string(id));
        for (const auto& [id, e] : table.entries)
            if (e.is_threshold != (subset.count(id) != 0))
                throw std::invalid_argument("flag_mislabeled: round " + std::to_string(round) +
                                            " threshold markers disagree with the plan at id " + std::to_string(id));
    };
    check_markers(t1, plan.s1, 1);
    check_markers(t2, plan.s2, 2);

    IdentificationReport report;
    report.percentile_q = q;
    report.alpha_round1 = compute_alpha(t1, q);
    report.alpha_round2 = compute_alpha(t2, q);
    for (const auto& [id, e1] : t1.entries) {
        auto e2 = t2.entries.find(id);
        if (e2 == t2.entries.end())
            throw std::invalid_argument("flag_mislabeled: round 2 table lacks id " + std::to_string(id));
        const int round = plan.s1.count(id) ? 2 : 1;
        const double value = round == 1 ? e1.aum : e2->second.aum;
        report.judged_by.emplace(id, round);
        if (value <= report.alpha(round)) report.flagged_ids.insert(id);
    }
    for (const auto& [id, e2] : t2.entries)
        if (!t1.entries.count(id))
            throw std::invalid_argument("flag_mislabeled: round 1 table lacks id " + std::to_string(id));
    return report;
}

/// Single-round verdicts: non-threshold samples with AUM <= alpha are flagged;
/// threshold samples receive no verdict.
inline IdentificationReport flag_single_round(const AumTable& table, double q, int round) {
    if (round != 1 && round != 2) throw std::invalid_argument("flag_single_round: round must be 1 or 2");
    IdentificationReport report;
    report.percentile_q = q;
    const double alpha = compute_alpha(table, q);
    (round == 1 ? report.alpha_round1 : report.alpha_round2) = alpha;
    for (const auto& [id, e] : table.entries) {
        if (e.is_threshold) continue;
        report.judged_by.emplace(id, round);
        if (e.aum <= alpha) report.flagged_ids.insert(id);
    }
    return report;
}

/// Precision and recall of the flagged set against ground truth. An empty
/// flagged set has precision 1; an empty positive set has recall 1.
inline IdentificationMetrics score_identification(const IdentificationReport& report, const Dataset& ds) {
    if (!ds.has_ground_truth()) throw std::invalid_argument("score_identification: dataset lacks true labels");
    const IdSet positives = ds.mislabeled_ids();
    std::size_t hits = 0;
    for (SampleId id : report.flagged_ids) {
        if (!ds.contains(id))
            throw std::invalid_argument("score_identification: flagged id " + std::to_string(id) + " not in dataset");
        if (positives.count(id)) ++hits;
    }
    IdentificationMetrics m;
    m.num_flagged = report.flagged_ids.size();
    m.num_mislabeled = positives.size();
    m.precision = report.flagged_ids.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(m.num_flagged);
    m.recall = positives.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(m.num_mislabeled);
    return m;
}

/// The dataset without its flagged samples; labels are the original ones.
inline Dataset clean_dataset(const Dataset& ds, const IdentificationReport& report) {
    for (SampleId id : report.flagged_ids)
        if (!ds.contains(id))
            throw std::invalid_argument("clean_dataset: flagged id " + std::to_string(id) + " not in dataset");
    std::string step = "cleaned(flagged=" + std::to_string(report.flagged_ids.size()) +
                       ",q=" + detail::format_double(report.percentile_q);
    if (!std::isnan(report.alpha_round1)) step += ",alpha1=" + detail::format_double(report.alpha_round1);
    if (!std::isnan(report.alpha_round2)) step += ",alpha2=" + detail::format_double(report.alpha_round2);
    step += ")";
    return select_samples(ds, report.flagged_ids, false, step);
}

/// Batch size that keeps the iteration count when a fraction of the data is removed.
inline std::size_t adjusted_batch_size(std::size_t original, double removed_fraction) {
    if (original < 1) throw std::invalid_argument("adjusted_batch_size: batch size must be >= 1");
    if (!(removed_fraction >= 0.0 && removed_fraction < 1.0))
        throw std::invalid_argument("adjusted_batch_size: removed fraction must lie in [0, 1)");
    const double scaled = static_cast<double>(original) * (1.0 - removed_fraction);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(scaled)));
}

/// AUM of each sample in the round that judges it.
inline std::map<SampleId, double> judged_aums(const IdentificationReport& report, const AumTable& t1,
                                              const AumTable& t2) {
    std::map<SampleId, double> out;
    for (const auto& [id, round] : report.judged_by) out.emplace(id, (round == 1 ? t1 : t2).entries.at(id).aum);
    return out;
}

struct IdentificationRun {
    ThresholdPlan plan;
    TrainConfig round_config[2];
    LogitLog log1;
    LogitLog log2;
    AumTable table1;
    AumTable table2;
    IdentificationReport report;

    const LogitLog& log(int round) const { return round == 1 ? log1 : log2; }
    const AumTable& table(int round) const { return round == 1 ? table1 : table2; }
};

/// Training configuration for identification round `round` (1 or 2).
inline TrainConfig round_config(const TrainConfig& id_cfg, int round) {
    TrainConfig cfg = id_cfg;
    cfg.seed = derive_seed(id_cfg.seed, static_cast<std::uint64_t>(round));
    return cfg;
}

/// Plan threshold subsets, train one fresh network per round up to the first
/// learning-rate drop, tabulate AUMs, and flag samples at or below alpha.
/// Metrics are attached when the dataset carries ground truth.
inline IdentificationRun run_identification(const Dataset& ds, const TrainConfig& id_cfg, double q,
                                            std::uint64_t seed) {
    if (!id_cfg.stop_at_first_drop)
        throw std::invalid_argument("run_identification: identification config must stop at the first drop");
    id_cfg.validate();
    if (!(q > 0.0 && q <= 100.0)) throw std::invalid_argument("run_identification: q must lie in (0, 100]");

    IdentificationRun run;
    run.plan = plan_rounds(ds, seed);
    run.round_config[0] = round_config(id_cfg, 1);
    run.round_config[1] = round_config(id_cfg, 2);
    const Dataset d1 = build_round_dataset(ds, run.plan.s1);
    const Dataset d2 = build_round_dataset(ds, run.plan.s2);

    // The rounds share nothing mutable; run the second one alongside the first.
    auto second = std::async(std::launch::async, [&] { return train_logged(d2, run.round_config[1]).log; });
    run.log1 = train_logged(d1, run.round_config[0]).log;
    run.log2 = second.get();

    run.table1 = compute_aum_table(run.log1, run.plan.s1);
    run.table2 = compute_aum_table(run.log2, run.plan.s2);
    run.report = flag_mislabeled(run.table1, run.table2, run.plan, q);
    if (ds.has_ground_truth()) run.report.metrics = score_identification(run.report, ds);
    return run;
}

/// Same tables, different percentile: only alpha and the verdicts change.
inline IdentificationReport rethreshold(const IdentificationRun& run, const Dataset& ds, double q) {
    IdentificationReport report = flag_mislabeled(run.table1, run.table2, run.plan, q);
    if (ds.has_ground_truth()) report.metrics = score_identification(report, ds);
    return report;
}

// ---------------------------------------------------------------------------
// Ablations

enum class RemovalMode { aum_ranked, random };

inline const char* to_string(RemovalMode mode) { return mode == RemovalMode::aum_ranked ? "aum-ranked" : "random"; }

inline RemovalMode parse_removal_mode(std::string_view name) {
    if (name == "aum-ranked" || name == "aum") return RemovalMode::aum_ranked;
    if (name == "random") return RemovalMode::random;
    throw std::invalid_argument("unknown removal mode '" + std::string(name) + "'");
}

struct SweepPoint {
    double fraction = 0.0;
    std::size_t removed = 0;
    std::size_t batch_size = 0;
    double test_error = 0.0;
};

/// Removes round(fraction * N) training samples per point (lowest AUM first,
/// ties by id, or a seeded uniform draw), retrains the full schedule with the
/// iteration-preserving batch size, and reports error on `holdout`.
/// `aums` must cover every training sample in aum-ranked mode.
inline std::vector<SweepPoint> removal_sweep(const Dataset& train_set, const Dataset& holdout,
                                             const std::map<SampleId, double>& aums,
                                             const std::vector<double>& fractions, RemovalMode mode,
                                             const TrainConfig& train_cfg, std::uint64_t seed) {
    if (fractions.empty()) throw std::invalid_argument("removal_sweep: no fractions given");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] >= 0.0 && fractions[i] < 1.0))
            throw std::invalid_argument("removal_sweep: fractions must lie in [0, 1)");
        for (std::size_t j = 0; j < i; ++j)
            if (fractions[j] == fractions[i]) throw std::invalid_argument("removal_sweep: fractions must be distinct");
    }

    std::vector<SampleId> removal_order;
    for (const auto& s : train_set.samples()) removal_order.push_back(s.id);
    std::sort(removal_order.begin(), removal_order.end());
    if (mode == RemovalMode::aum_ranked) {
        for (SampleId id : removal_order)
            if (!aums.count(id))
                throw std::invalid_argument("removal_sweep: no AUM for training sample " + std::to_string(id));
        std::stable_sort(removal_order.begin(), removal_order.end(),
                         [&](SampleId a, SampleId b) { return aums.at(a) < aums.at(b); });
    } else {
        Rng rng(seed);
        rng.shuffle(removal_order);
    }

    std::vector<SweepPoint> points;
    for (double fraction : fractions) {
        const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train_set.size())));
        if (k >= train_set.size()) throw std::invalid_argument("removal_sweep: fraction removes every sample");
        IdSet removed(removal_order.begin(), removal_order.begin() + static_cast<std::ptrdiff_t>(k));
        const Dataset kept = select_samples(train_set, removed, false,
                                            std::string("removed(") + to_string(mode) +
                                                ",fraction=" + detail::format_double(fraction) + ")");
        TrainConfig cfg = train_cfg;
        cfg.stop_at_first_drop = false;
        cfg.batch_size = adjusted_batch_size(train_cfg.batch_size, fraction);
        const Model model = train(init_model(kept.feature_dim(), kept.num_classes(), cfg), kept, cfg);
        points.push_back({fraction, k, cfg.batch_size, evaluate(model, holdout)});
    }
    return points;
}

/// Pairwise Spearman correlation of non-threshold AUMs between networks
/// trained with different configurations on the same round-1 dataset.
inline std::vector<std::vector<double>> consistency_check(const Dataset& ds, const std::vector<TrainConfig>& cfgs,
                                                          std::uint64_t plan_seed) {
    if (cfgs.size() < 2) throw std::invalid_argument("consistency_check: need at least two configurations");
    for (const auto& cfg : cfgs) {
        TrainConfig a = cfg, b = cfgs.front();
        a.seed = b.seed = 0;
        a.hidden_width = b.hidden_width = 0;
        if (a.canonical() != b.canonical())
            throw std::invalid_argument("consistency_check: configurations may differ only in seed and hidden width");
    }
    const ThresholdPlan plan = plan_rounds(ds, plan_seed);
    const Dataset round_ds = build_round_dataset(ds, plan.s1);

    std::vector<std::vector<double>> aums;
    for (const auto& cfg : cfgs) {
        TrainConfig run_cfg = cfg;
        run_cfg.stop_at_first_drop = !run_cfg.lr_drop_epochs.empty();
        const AumTable table = compute_aum_table(train_logged(round_ds, run_cfg).log, plan.s1);
        std::vector<double> values;
        for (const auto& [id, e] : table.entries)
            if (!e.is_threshold) values.push_back(e.aum);
        aums.push_back(std::move(values));
    }
    const std::size_t n = cfgs.size();
    std::vector<std::vector<double>> matrix(n, std::vector<double>(n, 1.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) matrix[i][j] = matrix[j][i] = spearman(aums[i], aums[j]);
    return matrix;
}

}  // namespace aum
