#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "aum/data.hpp"
#include "aum/detail/text.hpp"
#include "aum/errors.hpp"
#include "aum/rng.hpp"

namespace aum {

/// The two disjoint threshold-sample subsets for the two identification rounds.
struct ThresholdPlan {
    IdSet s1;
    IdSet s2;
    int num_classes = 0;
    std::uint64_t seed = 0;

    const IdSet& subset(int round) const {
        if (round != 1 && round != 2) throw std::invalid_argument("plan: round must be 1 or 2");
        return round == 1 ? s1 : s2;
    }

    friend bool operator==(const ThresholdPlan&, const ThresholdPlan&) = default;
};

/// floor(n / (c + 1)). Datasets with n <= 2c are rejected as too small for
/// two identification rounds.
inline std::size_t threshold_count(std::size_t n, int num_classes) {
    if (num_classes < 2) throw std::invalid_argument("threshold_count: need at least two classes");
    const auto c = static_cast<std::size_t>(num_classes);
    if (n < 2 * c + 1)
        throw std::invalid_argument("threshold_count: " + std::to_string(n) + " samples are too few to build both "
                                    "identification rounds (two disjoint threshold subsets of size floor(N/(c+1))) "
                                    "for c = " + std::to_string(num_classes) + "; need N >= " +
                                    std::to_string(2 * c + 1));
    return n / (c + 1);
}

/// Shuffles the sorted id list with `seed`; s1 takes the first k ids and s2
/// the next k, so s2 is a uniform draw from the complement of s1.
inline ThresholdPlan plan_rounds(const Dataset& ds, std::uint64_t seed) {
    const std::size_t k = threshold_count(ds.size(), ds.num_classes());
    std::vector<SampleId> ids;
    ids.reserve(ds.size());
    for (const auto& s : ds.samples()) ids.push_back(s.id);
    std::sort(ids.begin(), ids.end());
    Rng rng(seed);
    rng.shuffle(ids);
    ThresholdPlan plan;
    plan.num_classes = ds.num_classes();
    plan.seed = seed;
    plan.s1.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
    plan.s2.insert(ids.begin() + static_cast<std::ptrdiff_t>(k), ids.begin() + static_cast<std::ptrdiff_t>(2 * k));
    return plan;
}

/// The modified training set: c + 1 classes, threshold ids relabelled to the
/// extra class c. True labels are left untouched.
inline Dataset build_round_dataset(const Dataset& ds, const IdSet& threshold_ids) {
    for (SampleId id : threshold_ids)
        if (!ds.contains(id))
            throw std::invalid_argument("build_round_dataset: unknown threshold id " + std::to_string(id));
    const int fake = ds.num_classes();
    std::vector<Sample> out = ds.samples();
    for (auto& s : out)
        if (threshold_ids.count(s.id)) s.assigned_label = fake;
    return Dataset(std::move(out), fake + 1,
                   extend_provenance(ds.provenance(),
                                     "threshold-round(class=" + std::to_string(fake) +
                                         ",count=" + std::to_string(threshold_ids.size()) + ")"));
}

// Plan file, one key per line:
//   # aum threshold plan
//   version=1
//   seed=<seed>
//   num_classes=<c>
//   s1=<id>,<id>,...      ascending
//   s2=<id>,<id>,...

namespace detail {

inline std::string join_ids(const IdSet& ids) {
    std::string out;
    for (SampleId id : ids) {
        if (!out.empty()) out += ',';
        append_int(out, id);
    }
    return out;
}

inline IdSet parse_ids(std::string_view text, std::size_t line) {
    IdSet out;
    if (trim(text).empty()) return out;
    for (auto part : split(text, ',')) {
        auto id = parse_number<SampleId>(trim(part));
        if (!id) throw parse_error("bad sample id '" + std::string(part) + "'", line);
        if (!out.insert(*id).second) throw parse_error("repeated sample id " + std::to_string(*id), line);
    }
    return out;
}

}  // namespace detail

inline std::string format_plan(const ThresholdPlan& plan) {
    std::string out = "# aum threshold plan\nversion=1\n";
    out += "seed=" + std::to_string(plan.seed) + "\n";
    out += "num_classes=" + std::to_string(plan.num_classes) + "\n";
    out += "s1=" + detail::join_ids(plan.s1) + "\n";
    out += "s2=" + detail::join_ids(plan.s2) + "\n";
    return out;
}

inline ThresholdPlan parse_plan(std::string_view text) {
    ThresholdPlan plan;
    bool have_seed = false, have_c = false, have_s1 = false, have_s2 = false;
    std::size_t line_no = 0;
    for (auto raw : detail::split(text, '\n')) {
        ++line_no;
        auto line = detail::trim(raw);
        if (line.empty() || line.starts_with("#")) continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos) throw parse_error("expected key=value", line_no);
        auto key = detail::trim(line.substr(0, eq));
        auto value = detail::trim(line.substr(eq + 1));
        if (key == "version") {
            if (value != "1") throw parse_error("unsupported plan version '" + std::string(value) + "'", line_no);
        } else if (key == "seed") {
            auto v = detail::parse_number<std::uint64_t>(value);
            if (!v) throw parse_error("bad seed", line_no);
            plan.seed = *v;
            have_seed = true;
        } else if (key == "num_classes") {
            auto v = detail::parse_number<int>(value);
            if (!v || *v < 2) throw parse_error("bad num_classes", line_no);
            plan.num_classes = *v;
            have_c = true;
        } else if (key == "s1") {
            plan.s1 = detail::parse_ids(value, line_no);
            have_s1 = true;
        } else if (key == "s2") {
            plan.s2 = detail::parse_ids(value, line_no);
            have_s2 = true;
        } else {
            throw parse_error("unknown plan key '" + std::string(key) + "'", line_no);
        }
    }
    if (!(have_seed && have_c && have_s1 && have_s2))
        throw parse_error("plan must define seed, num_classes, s1 and s2", 0);
    for (SampleId id : plan.s1)
        if (plan.s2.count(id)) throw parse_error("sample " + std::to_string(id) + " is in both s1 and s2", 0);
    return plan;
}

inline void write_plan(const ThresholdPlan& plan, const std::filesystem::path& path) {
    write_text_file(path, format_plan(plan));
}

inline ThresholdPlan read_plan(const std::filesystem::path& path) {
    try {
        return parse_plan(read_text_file(path));
    } catch (const parse_error& e) {
        throw e.located(path.string());
    }
}

}  // namespace aum
