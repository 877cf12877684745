#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aum/core_math.hpp"
#include "aum/data.hpp"
#include "aum/detail/text.hpp"
#include "aum/logit_log.hpp"
#include "aum/pipeline.hpp"
#include "aum/threshold.hpp"

// Identification output directory:
//
//   plan.txt                threshold plan
//   round1.logits           logit logs of the two rounds
//   round2.logits
//   aum_round1.csv          sample_id,aum,is_threshold,assigned,true
//   aum_round2.csv
//   flags.csv               sample_id,judged_round,aum,alpha,flagged
//   report.txt              key=value summary
//   hist.csv                bin,lo,hi,clean,mislabeled,threshold,unknown
//   trajectories/<id>.csv   epoch,margin,running_aum
//
// `true` is -1 when no ground truth is known.

namespace aum {

inline constexpr std::size_t kHistogramBins = 50;

/// Fixed-range histogram of AUM values for the four sample groups.
struct AumHistogram {
    enum Group { clean = 0, mislabeled = 1, threshold = 2, unknown = 3 };
    double lo = 0.0;
    double hi = 1.0;
    std::vector<std::array<std::size_t, 4>> counts;

    std::size_t total(Group g) const {
        std::size_t n = 0;
        for (const auto& row : counts) n += row[g];
        return n;
    }
};

/// 50 uniform bins spanning the pooled range of all values; the top edge is
/// inclusive. A degenerate range becomes [v, v + 1).
inline AumHistogram make_histogram(const std::array<std::vector<double>, 4>& groups,
                                   std::size_t bins = kHistogramBins) {
    AumHistogram h;
    h.counts.assign(bins, {0, 0, 0, 0});
    bool any = false;
    for (const auto& g : groups)
        for (double v : g) {
            if (!any) h.lo = h.hi = v;
            h.lo = std::min(h.lo, v);
            h.hi = std::max(h.hi, v);
            any = true;
        }
    if (!any) return h;
    if (h.hi == h.lo) h.hi = h.lo + 1.0;
    const double width = (h.hi - h.lo) / static_cast<double>(bins);
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (double v : groups[g]) {
            auto bin = static_cast<std::size_t>((v - h.lo) / width);
            h.counts[std::min(bin, bins - 1)][g] += 1;
        }
    return h;
}

inline std::string format_histogram(const AumHistogram& h) {
    std::string out = "bin,lo,hi,clean,mislabeled,threshold,unknown\n";
    const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        const double lo = h.lo + width * static_cast<double>(b);
        const double hi = b + 1 == h.counts.size() ? h.hi : h.lo + width * static_cast<double>(b + 1);
        out += std::to_string(b) + "," + detail::format_double(lo) + "," + detail::format_double(hi);
        for (std::size_t n : h.counts[b]) out += "," + std::to_string(n);
        out += '\n';
    }
    return out;
}

inline std::string format_aum_table(const AumTable& table, const Dataset* truth) {
    std::string out = "sample_id,aum,is_threshold,assigned,true\n";
    for (const auto& [id, e] : table.entries) {
        int true_label = -1;
        if (truth && truth->contains(id) && truth->at(id).true_label) true_label = *truth->at(id).true_label;
        detail::append_int(out, id);
        out += ',';
        detail::append_double(out, e.aum);
        out += e.is_threshold ? ",1," : ",0,";
        detail::append_int(out, e.assigned_label);
        out += ',';
        detail::append_int(out, true_label);
        out += '\n';
    }
    return out;
}

inline std::string format_trajectory(std::span<const double> trace) {
    const auto running = running_average(trace);
    std::string out = "epoch,margin,running_aum\n";
    for (std::size_t t = 0; t < trace.size(); ++t) {
        detail::append_int(out, t + 1);
        out += ',';
        detail::append_double(out, trace[t]);
        out += ',';
        detail::append_double(out, running[t]);
        out += '\n';
    }
    return out;
}

/// Everything emit_report may draw on. Round-2 members may be null for a
/// single-round analysis; `truth` is optional.
struct ReportSources {
    const IdentificationReport* report = nullptr;
    const AumTable* table1 = nullptr;
    const AumTable* table2 = nullptr;
    const LogitLog* log1 = nullptr;
    const LogitLog* log2 = nullptr;
    const Dataset* truth = nullptr;
    std::vector<SampleId> trajectory_ids;

    const AumTable* table(int round) const { return round == 1 ? table1 : table2; }
    const LogitLog* log(int round) const { return round == 1 ? log1 : log2; }
};

inline std::string format_flags(const ReportSources& src) {
    const auto& report = *src.report;
    std::string out = "sample_id,judged_round,aum,alpha,flagged\n";
    for (const auto& [id, round] : report.judged_by) {
        const AumTable* table = src.table(round);
        if (!table) throw std::invalid_argument("report: no AUM table for round " + std::to_string(round));
        detail::append_int(out, id);
        out += ',';
        detail::append_int(out, round);
        out += ',';
        detail::append_double(out, table->entries.at(id).aum);
        out += ',';
        detail::append_double(out, report.alpha(round));
        out += report.flagged_ids.count(id) ? ",1\n" : ",0\n";
    }
    return out;
}

inline std::string format_summary(const ReportSources& src) {
    const auto& report = *src.report;
    std::string out = "# aum identification report\n";
    out += "q=" + detail::format_double(report.percentile_q) + "\n";
    for (int round : {1, 2}) {
        if (std::isnan(report.alpha(round))) continue;
        const auto r = std::to_string(round);
        out += "alpha_round" + r + "=" + detail::format_double(report.alpha(round)) + "\n";
        if (const AumTable* t = src.table(round)) {
            out += "epochs_round" + r + "=" + std::to_string(t->epochs_used) + "\n";
            out += "threshold_samples_round" + r + "=" + std::to_string(threshold_aums(*t).size()) + "\n";
        }
    }
    std::size_t judged[2] = {0, 0};
    for (const auto& [id, round] : report.judged_by) ++judged[round - 1];
    out += "judged_round1=" + std::to_string(judged[0]) + "\n";
    out += "judged_round2=" + std::to_string(judged[1]) + "\n";
    out += "num_judged=" + std::to_string(report.judged_by.size()) + "\n";
    out += "num_flagged=" + std::to_string(report.flagged_ids.size()) + "\n";
    if (report.metrics) {
        out += "num_mislabeled=" + std::to_string(report.metrics->num_mislabeled) + "\n";
        out += "precision=" + detail::format_double(report.metrics->precision) + "\n";
        out += "recall=" + detail::format_double(report.metrics->recall) + "\n";
    }
    return out;
}

inline AumHistogram report_histogram(const ReportSources& src) {
    std::array<std::vector<double>, 4> groups;
    for (const auto& [id, round] : src.report->judged_by) {
        const double value = src.table(round)->entries.at(id).aum;
        if (src.truth && src.truth->contains(id) && src.truth->at(id).true_label)
            groups[src.truth->at(id).is_mislabeled() ? AumHistogram::mislabeled : AumHistogram::clean].push_back(value);
        else
            groups[AumHistogram::unknown].push_back(value);
    }
    for (const AumTable* t : {src.table1, src.table2})
        if (t)
            for (double v : threshold_aums(*t)) groups[AumHistogram::threshold].push_back(v);
    return make_histogram(groups);
}

/// Writes aum_round*.csv, flags.csv, report.txt, hist.csv and the requested
/// trajectories into `out_dir`. Returns the paths written, in order.
inline std::vector<std::filesystem::path> emit_report(const ReportSources& src, const std::filesystem::path& out_dir) {
    if (!src.report) throw std::invalid_argument("emit_report: no report");
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    auto put = [&](const std::filesystem::path& path, const std::string& text) {
        write_text_file(path, text);
        written.push_back(path);
    };
    for (int round : {1, 2})
        if (const AumTable* t = src.table(round))
            put(out_dir / ("aum_round" + std::to_string(round) + ".csv"), format_aum_table(*t, src.truth));
    put(out_dir / "flags.csv", format_flags(src));
    put(out_dir / "report.txt", format_summary(src));
    put(out_dir / "hist.csv", format_histogram(report_histogram(src)));

    if (!src.trajectory_ids.empty()) {
        std::map<int, MarginTraces> traces;
        std::filesystem::create_directories(out_dir / "trajectories");
        for (SampleId id : src.trajectory_ids) {
            int round = 0;
            if (auto it = src.report->judged_by.find(id); it != src.report->judged_by.end())
                round = it->second;
            else if (src.table1 && src.table1->entries.count(id))
                round = 1;
            else if (src.table2 && src.table2->entries.count(id))
                round = 2;
            if (round == 0 || !src.log(round))
                throw std::invalid_argument("emit_report: no logged trajectory for sample " + std::to_string(id));
            if (!traces.count(round)) traces.emplace(round, margin_traces(*src.log(round)));
            put(out_dir / "trajectories" / (std::to_string(id) + ".csv"), format_trajectory(traces[round].at(id)));
        }
    }
    return written;
}

/// Persists a full identification run. An `INCOMPLETE` marker exists in
/// `out_dir` until every file has been written.
inline std::vector<std::filesystem::path> persist_identification(const IdentificationRun& run, const Dataset* truth,
                                                                  const std::filesystem::path& out_dir,
                                                                  std::vector<SampleId> trajectory_ids = {}) {
    std::filesystem::create_directories(out_dir);
    const auto marker = out_dir / "INCOMPLETE";
    write_text_file(marker, "identification output is incomplete\n");
    std::vector<std::filesystem::path> written;
    write_plan(run.plan, out_dir / "plan.txt");
    written.push_back(out_dir / "plan.txt");
    write_logit_log(run.log1, out_dir / "round1.logits");
    written.push_back(out_dir / "round1.logits");
    write_logit_log(run.log2, out_dir / "round2.logits");
    written.push_back(out_dir / "round2.logits");
    ReportSources src{&run.report, &run.table1, &run.table2, &run.log1, &run.log2, truth, std::move(trajectory_ids)};
    for (auto& p : emit_report(src, out_dir)) written.push_back(std::move(p));
    std::filesystem::remove(marker);
    return written;
}

/// Reads report.txt and flags.csv back into a report.
inline IdentificationReport read_report(const std::filesystem::path& dir) {
    if (std::filesystem::exists(dir / "INCOMPLETE"))
        throw std::runtime_error("'" + dir.string() + "' holds an incomplete identification run");
    IdentificationReport report;
    const auto summary_path = dir / "report.txt";
    const auto summary = read_text_file(summary_path);
    std::optional<double> precision, recall;
    std::optional<std::size_t> mislabeled;
    std::size_t line_no = 0;
    for (auto raw : detail::split(summary, '\n')) {
        ++line_no;
        auto line = detail::trim(raw);
        if (line.empty() || line.starts_with("#")) continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos) throw parse_error("expected key=value", line_no).located(summary_path.string());
        auto key = line.substr(0, eq);
        auto value = line.substr(eq + 1);
        auto number = [&] {
            auto v = detail::parse_number<double>(value);
            if (!v) throw parse_error("bad value for " + std::string(key), line_no).located(summary_path.string());
            return *v;
        };
        if (key == "q") report.percentile_q = number();
        else if (key == "alpha_round1") report.alpha_round1 = number();
        else if (key == "alpha_round2") report.alpha_round2 = number();
        else if (key == "precision") precision = number();
        else if (key == "recall") recall = number();
        else if (key == "num_mislabeled") mislabeled = static_cast<std::size_t>(number());
    }

    const auto flags_path = dir / "flags.csv";
    const auto flags = read_text_file(flags_path);
    line_no = 0;
    for (auto raw : detail::split(flags, '\n')) {
        ++line_no;
        if (line_no == 1) {
            if (detail::trim(raw) != "sample_id,judged_round,aum,alpha,flagged")
                throw parse_error("unexpected flags.csv header", 1).located(flags_path.string());
            continue;
        }
        if (detail::trim(raw).empty()) continue;
        auto cols = detail::split(detail::trim(raw), ',');
        if (cols.size() != 5) throw parse_error("expected 5 columns", line_no).located(flags_path.string());
        auto id = detail::parse_number<SampleId>(cols[0]);
        auto round = detail::parse_number<int>(cols[1]);
        if (!id || !round || (*round != 1 && *round != 2) || (cols[4] != "0" && cols[4] != "1"))
            throw parse_error("malformed row", line_no).located(flags_path.string());
        if (!report.judged_by.emplace(*id, *round).second)
            throw parse_error("duplicate sample id " + std::to_string(*id), line_no).located(flags_path.string());
        if (cols[4] == "1") report.flagged_ids.insert(*id);
    }
    if (precision && recall)
        report.metrics = IdentificationMetrics{*precision, *recall, report.flagged_ids.size(), mislabeled.value_or(0)};
    return report;
}

}  // namespace aum
