#include <gtest/gtest.h>

#include <cmath>

#include "aum/pipeline.hpp"
#include "fixture.hpp"
#include "oracle.hpp"
#include "support.hpp"

using testing_support::small_synthetic;

namespace {

aum::LogitLog make_log(int c, int epochs) { return aum::LogitLog(aum::LogitLogHeader{1, c, epochs, 0, {}, {}, {}}); }

void put(aum::LogitLog& log, int epoch, aum::SampleId id, int label, std::vector<double> z) {
    log.record(epoch, id, label, z);
}

/// Table with the given non-threshold and threshold AUMs; ids run 0.. in that order.
aum::AumTable table_of(const std::vector<double>& regular, const std::vector<double>& threshold) {
    aum::AumTable t;
    t.epochs_used = 1;
    aum::SampleId id = 0;
    for (double v : regular) t.entries[id++] = {v, false, 0};
    for (double v : threshold) t.entries[id++] = {v, true, 2};
    return t;
}

aum::IdentificationReport report_flagging(aum::IdSet ids) {
    aum::IdentificationReport r;
    r.flagged_ids = std::move(ids);
    return r;
}

}  // namespace

TEST(AumTable, HandBuiltTwoEpochLog) {
    auto log = make_log(2, 2);
    put(log, 1, 0, 0, {2, 0});
    put(log, 2, 0, 0, {0, 2});
    const auto t = aum::compute_aum_table(log, {});
    EXPECT_EQ(t.epochs_used, 2);
    EXPECT_EQ(t.entries.at(0).aum, 0.0);
    EXPECT_FALSE(t.entries.at(0).is_threshold);
}

TEST(AumTable, SingleEpochEqualsMargin) {
    auto log = make_log(3, 1);
    put(log, 1, 4, 2, {0.5, -1.0, 2.0});
    put(log, 1, 9, 0, {0.5, 1.25, 0.0});
    const auto t = aum::compute_aum_table(log, {9});
    EXPECT_EQ(t.entries.at(4).aum, aum::margin(std::vector<double>{0.5, -1.0, 2.0}, 2));
    EXPECT_EQ(t.entries.at(9).aum, -0.75);
    EXPECT_TRUE(t.entries.at(9).is_threshold);
    EXPECT_EQ(t.entries.at(9).assigned_label, 0);
}

TEST(AumTable, TrainerLogMatchesCoreMargins) {
    const auto ds = small_synthetic(3, 6, 2);
    auto cfg = aum::TrainConfig::full(3, 5, 1);
    cfg.hidden_width = 8;
    const auto run = aum::train_logged(ds, cfg);
    const auto traces = aum::margin_traces(run.log);
    for (std::size_t i = 0; i < run.log.size(); ++i) {
        const auto r = run.log[i];
        EXPECT_NEAR(traces.at(r.sample_id)[r.epoch - 1],
                    aum::margin(r.logits, static_cast<std::size_t>(r.assigned_label)), 1e-12);
    }
}

TEST(AumTable, CorruptLogs) {
    auto gap = make_log(2, 2);
    put(gap, 1, 0, 0, {1, 0});
    put(gap, 2, 0, 0, {1, 0});
    put(gap, 1, 1, 0, {1, 0});
    try {
        aum::compute_aum_table(gap, {});
        FAIL();
    } catch (const aum::corrupt_log_error& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 2, sample 1"), std::string::npos);
    }
    auto dup = make_log(2, 1);
    put(dup, 1, 0, 0, {1, 0});
    put(dup, 1, 0, 0, {1, 0});
    EXPECT_THROW(aum::compute_aum_table(dup, {}), aum::corrupt_log_error);
    auto relabel = make_log(2, 2);
    put(relabel, 1, 0, 0, {1, 0});
    put(relabel, 2, 0, 1, {1, 0});
    EXPECT_THROW(aum::compute_aum_table(relabel, {}), aum::corrupt_log_error);
    EXPECT_THROW(aum::compute_aum_table(make_log(2, 1), {}), aum::corrupt_log_error);
}

TEST(AumTable, UnknownThresholdId) {
    auto log = make_log(2, 1);
    put(log, 1, 0, 0, {1, 0});
    EXPECT_THROW(aum::compute_aum_table(log, {5}), std::invalid_argument);
}

TEST(Alpha, Examples) {
    std::vector<double> thr;
    for (int i = 1; i <= 100; ++i) thr.push_back(i);
    EXPECT_EQ(aum::compute_alpha(table_of({0.5}, thr), 99), 99.0);
    for (double q : {1.0, 50.0, 99.0, 100.0}) EXPECT_EQ(aum::compute_alpha(table_of({3.0, 4.0}, {-0.25}), q), -0.25);
    EXPECT_THROW(aum::compute_alpha(table_of({1.0}, {}), 99), std::invalid_argument);
}

namespace {

/// Two tables for ids 0..9 with s1 = {0, 1}, s2 = {2, 3}.
struct TwoRounds {
    aum::ThresholdPlan plan{{0, 1}, {2, 3}, 2, 0};
    aum::AumTable t1, t2;
    TwoRounds(const std::vector<double>& a1, const std::vector<double>& a2) {
        t1.epochs_used = t2.epochs_used = 1;
        for (aum::SampleId id = 0; id < 10; ++id) {
            t1.entries[id] = {a1[id], plan.s1.count(id) != 0, 0};
            t2.entries[id] = {a2[id], plan.s2.count(id) != 0, 0};
        }
    }
};

}  // namespace

TEST(Flag, AllAboveAlphaFlagsNothing) {
    TwoRounds r({-1, -2, 5, 5, 5, 5, 5, 5, 5, 5}, {5, 5, -1, -2, 5, 5, 5, 5, 5, 5});
    const auto report = aum::flag_mislabeled(r.t1, r.t2, r.plan, 99);
    EXPECT_TRUE(report.flagged_ids.empty());
    EXPECT_EQ(report.alpha_round1, -1.0);
    EXPECT_EQ(report.alpha_round2, -1.0);
    EXPECT_EQ(report.judged_by.size(), 10u);
}

TEST(Flag, EqualToAlphaIsFlagged) {
    TwoRounds r({-1, -2, 5, 5, -1, 5, 5, 5, 5, 5}, {-2, 5, -3, -2, 5, 5, 5, 5, 5, 5});
    const auto report = aum::flag_mislabeled(r.t1, r.t2, r.plan, 99);
    EXPECT_EQ(report.flagged_ids, (aum::IdSet{0, 4}));  // id 4 via round 1, id 0 via round 2
    EXPECT_EQ(report.judged_by.at(0), 2);
    EXPECT_EQ(report.judged_by.at(2), 1);
}

TEST(Flag, PlanMismatch) {
    TwoRounds r({0, 0, 1, 1, 1, 1, 1, 1, 1, 1}, {1, 1, 0, 0, 1, 1, 1, 1, 1, 1});
    auto plan = r.plan;
    plan.s1 = {0, 5};
    EXPECT_THROW(aum::flag_mislabeled(r.t1, r.t2, plan, 99), std::invalid_argument);
    auto t2 = r.t2;
    t2.entries.erase(7);
    EXPECT_THROW(aum::flag_mislabeled(r.t1, t2, r.plan, 99), std::invalid_argument);
    auto t1 = r.t1;
    t1.entries.erase(1);
    EXPECT_THROW(aum::flag_mislabeled(t1, r.t2, r.plan, 99), std::invalid_argument);
}

TEST(Flag, TotalityAndBoundaryOnRandomTables) {
    aum::Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto ds = small_synthetic(3, 20, static_cast<std::uint64_t>(trial));
        const auto plan = aum::plan_rounds(ds, static_cast<std::uint64_t>(trial));
        aum::AumTable t1, t2;
        for (auto id : ds.ids()) {
            t1.entries[id] = {std::round(rng.normal() * 4.0) / 4.0, plan.s1.count(id) != 0, 0};
            t2.entries[id] = {std::round(rng.normal() * 4.0) / 4.0, plan.s2.count(id) != 0, 0};
        }
        const double q = 1.0 + static_cast<double>(rng.below(100));
        const auto report = aum::flag_mislabeled(t1, t2, plan, q);
        aum::IdSet judged1, judged2;
        for (const auto& [id, round] : report.judged_by) (round == 1 ? judged1 : judged2).insert(id);
        EXPECT_EQ(judged2, plan.s1);
        for (auto id : judged1) EXPECT_FALSE(judged2.count(id));
        EXPECT_EQ(judged1.size() + judged2.size(), ds.size());
        for (const auto& [id, round] : report.judged_by) {
            const double a = (round == 1 ? t1 : t2).entries.at(id).aum;
            EXPECT_EQ(report.flagged_ids.count(id) == 1, a <= report.alpha(round));
        }
        const auto lower = aum::flag_mislabeled(t1, t2, plan, q / 2.0);
        for (auto id : lower.flagged_ids) EXPECT_TRUE(report.flagged_ids.count(id));
    }
}

TEST(Flag, SingleRound) {
    const auto t = table_of({-3.0, 0.5, 2.0}, {0.5, -1.0});
    const auto report = aum::flag_single_round(t, 99, 2);
    EXPECT_EQ(report.alpha_round2, 0.5);
    EXPECT_TRUE(std::isnan(report.alpha_round1));
    EXPECT_EQ(report.flagged_ids, (aum::IdSet{0, 1}));
    EXPECT_EQ(report.judged_by.size(), 3u);
}

TEST(Score, Examples) {
    // Samples 0..5; 2, 3, 4 mislabeled.
    std::vector<aum::Sample> samples;
    for (aum::SampleId id = 0; id < 6; ++id) {
        const bool wrong = id >= 2 && id <= 4;
        samples.push_back({id, {1.0}, wrong ? 1 : 0, 0});
    }
    const aum::Dataset ds(samples, 2);
    auto m = aum::score_identification(report_flagging({2, 3, 4}), ds);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    m = aum::score_identification(report_flagging({}), ds);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 0.0);
    m = aum::score_identification(report_flagging({1, 2, 3}), ds);
    EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
    EXPECT_EQ(m.num_flagged, 3u);
    EXPECT_EQ(m.num_mislabeled, 3u);
    EXPECT_THROW(aum::score_identification(report_flagging({9}), ds), std::invalid_argument);
    const aum::Dataset no_truth({{0, {1.0}, 0, std::nullopt}}, 2);
    EXPECT_THROW(aum::score_identification(report_flagging({}), no_truth), std::invalid_argument);
}

TEST(Clean, Examples) {
    const auto ds = small_synthetic(10, 500, 1, 2);
    EXPECT_EQ(aum::clean_dataset(ds, report_flagging({})).samples(), ds.samples());
    aum::IdSet flagged;
    for (aum::SampleId id = 0; id < 5000; id += 10) flagged.insert(id);
    const auto cleaned = aum::clean_dataset(ds, report_flagging(flagged));
    EXPECT_EQ(cleaned.size(), 4500u);
    EXPECT_EQ(cleaned.size() + flagged.size(), ds.size());
    for (auto id : flagged) EXPECT_FALSE(cleaned.contains(id));
    for (const auto& s : cleaned.samples()) EXPECT_EQ(s, ds.at(s.id));
    EXPECT_THROW(aum::clean_dataset(ds, report_flagging({5000})), std::invalid_argument);
}

TEST(AdjustedBatchSize, Examples) {
    EXPECT_EQ(aum::adjusted_batch_size(256, 0.25), 192u);
    for (std::size_t b : {1u, 7u, 64u, 256u}) EXPECT_EQ(aum::adjusted_batch_size(b, 0.0), b);
    EXPECT_EQ(aum::adjusted_batch_size(64, 0.40), 38u);
    EXPECT_EQ(aum::adjusted_batch_size(1, 0.9), 1u);
    EXPECT_THROW(aum::adjusted_batch_size(256, 1.0), std::invalid_argument);
    EXPECT_THROW(aum::adjusted_batch_size(256, -0.1), std::invalid_argument);
}

TEST(Identification, RequiresFirstDropSchedule) {
    const auto ds = small_synthetic(3, 10, 1);
    EXPECT_THROW(aum::run_identification(ds, aum::TrainConfig::full(4, 8, 1), 99, 1), std::invalid_argument);
    EXPECT_THROW(aum::run_identification(ds, aum::TrainConfig::identification(4, 8, 1), 0, 1), std::invalid_argument);
}

TEST(Identification, SmallRunIsDeterministicAndTotal) {
    const auto ds = aum::corrupt_uniform(small_synthetic(3, 20, 1), 0.3, 2);
    auto cfg = aum::TrainConfig::identification(8, 8, 3);
    cfg.hidden_width = 16;
    const auto a = aum::run_identification(ds, cfg, 99, 4);
    const auto b = aum::run_identification(ds, cfg, 99, 4);
    EXPECT_EQ(aum::to_text(a.log1), aum::to_text(b.log1));
    EXPECT_EQ(aum::to_text(a.log2), aum::to_text(b.log2));
    EXPECT_EQ(a.report.flagged_ids, b.report.flagged_ids);
    EXPECT_EQ(a.report.judged_by.size(), ds.size());
    EXPECT_EQ(a.table1.epochs_used, 4);
    EXPECT_NE(a.round_config[0].seed, a.round_config[1].seed);
    ASSERT_TRUE(a.report.metrics);
    for (auto id : a.report.flagged_ids) EXPECT_FALSE(a.plan.s1.count(id) && a.report.judged_by.at(id) == 1);
}

TEST(Identification, CleanFixtureFlagsFew) {
    const auto ds = fixture::clean();
    const auto run = aum::run_identification(ds, fixture::identification_config(), 99, fixture::kPlanSeed);
    const double flagged = static_cast<double>(run.report.flagged_ids.size()) / static_cast<double>(ds.size());
    RecordProperty("flagged_fraction", std::to_string(flagged));
    EXPECT_LE(flagged, 0.05);
}

TEST(Identification, NoisyFixtureAlphaSeparatesModes) {
    const auto ds = fixture::noisy();
    const auto run = aum::run_identification(ds, fixture::identification_config(), 99, fixture::kPlanSeed);
    for (int round : {1, 2}) {
        double clean_sum = 0, wrong_sum = 0;
        int clean_n = 0, wrong_n = 0;
        for (const auto& [id, e] : run.table(round).entries) {
            if (e.is_threshold) continue;
            if (ds.at(id).is_mislabeled()) {
                wrong_sum += e.aum;
                ++wrong_n;
            } else {
                clean_sum += e.aum;
                ++clean_n;
            }
        }
        EXPECT_LT(wrong_sum / wrong_n, run.report.alpha(round));
        EXPECT_LT(run.report.alpha(round), clean_sum / clean_n);
    }
    const auto q90 = aum::rethreshold(run, ds, 90);
    EXPECT_LE(q90.alpha_round1, run.report.alpha_round1);
    for (auto id : q90.flagged_ids) EXPECT_TRUE(run.report.flagged_ids.count(id));
}

TEST(Sweep, Validation) {
    const auto ds = small_synthetic(3, 10, 1);
    const auto cfg = aum::TrainConfig::full(2, 4, 1);
    std::map<aum::SampleId, double> aums;
    for (auto id : ds.ids()) aums[id] = static_cast<double>(id);
    EXPECT_THROW(aum::removal_sweep(ds, ds, aums, {0.1, 0.1}, aum::RemovalMode::random, cfg, 1), std::invalid_argument);
    EXPECT_THROW(aum::removal_sweep(ds, ds, aums, {1.0}, aum::RemovalMode::random, cfg, 1), std::invalid_argument);
    EXPECT_THROW(aum::removal_sweep(ds, ds, aums, {}, aum::RemovalMode::random, cfg, 1), std::invalid_argument);
    aums.erase(3);
    EXPECT_THROW(aum::removal_sweep(ds, ds, aums, {0.1}, aum::RemovalMode::aum_ranked, cfg, 1), std::invalid_argument);
    EXPECT_EQ(aum::parse_removal_mode("aum-ranked"), aum::RemovalMode::aum_ranked);
    EXPECT_THROW(aum::parse_removal_mode("greedy"), std::invalid_argument);
}

TEST(Sweep, ZeroFractionAgreesAcrossModes) {
    const auto ds = aum::corrupt_uniform(small_synthetic(3, 20, 1), 0.3, 2);
    const auto holdout = aum::with_true_labels(small_synthetic(3, 10, 5));
    auto cfg = aum::TrainConfig::full(4, 8, 3);
    cfg.hidden_width = 16;
    std::map<aum::SampleId, double> aums;
    for (const auto& s : ds.samples()) aums[s.id] = s.is_mislabeled() ? -1.0 : 1.0;
    const auto ranked = aum::removal_sweep(ds, holdout, aums, {0.0, 0.25}, aum::RemovalMode::aum_ranked, cfg, 7);
    const auto random = aum::removal_sweep(ds, holdout, aums, {0.0, 0.25}, aum::RemovalMode::random, cfg, 7);
    EXPECT_EQ(ranked[0].test_error, random[0].test_error);
    EXPECT_EQ(ranked[0].batch_size, 8u);
    EXPECT_EQ(ranked[1].removed, 15u);
    EXPECT_EQ(ranked[1].batch_size, 6u);
}

TEST(Consistency, MatrixShape) {
    const auto ds = aum::corrupt_uniform(small_synthetic(3, 20, 1), 0.3, 2);
    auto a = aum::TrainConfig::identification(8, 8, 1);
    a.hidden_width = 16;
    auto b = a;
    b.seed = 2;
    b.hidden_width = 24;
    const auto m = aum::consistency_check(ds, {a, b, a}, 5);
    ASSERT_EQ(m.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(m[i][i], 1.0);
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(m[i][j], m[j][i]);
    }
    EXPECT_DOUBLE_EQ(m[0][2], 1.0);  // identical configs
    EXPECT_THROW(aum::consistency_check(ds, {a}, 5), std::invalid_argument);
    auto c = a;
    c.lr_initial = 0.05;
    EXPECT_THROW(aum::consistency_check(ds, {a, c}, 5), std::invalid_argument);
}

TEST(GoldenLog, MatchesBruteForceRecomputation) {
    const std::string log_path = std::string(AUM_TEST_DATA) + "/golden.logits";
    const auto plan = aum::read_plan(std::string(AUM_TEST_DATA) + "/golden_plan.txt");
    const auto table = aum::compute_aum_table(aum::read_logit_log(log_path), plan.s1);
    const auto expected = oracle::recompute_aums(log_path);
    ASSERT_EQ(table.entries.size(), expected.size());
    ASSERT_EQ(table.entries.size(), 36u);
    double worst = 0.0;
    for (const auto& [id, value] : expected) {
        ASSERT_TRUE(table.entries.count(id));
        worst = std::max(worst, std::abs(table.entries.at(id).aum - value));
        EXPECT_EQ(table.entries.at(id).is_threshold, plan.s1.count(id) == 1);
    }
    EXPECT_LE(worst, 1e-12);
}
