#pragma once

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aum/data.hpp"
#include "aum/detail/text.hpp"
#include "aum/errors.hpp"

namespace aum {

// Logit log file
//
//   line 1   #aum-logitlog version=1 num_classes=<c> epochs_logged=<T> [seed=<s>]
//            [dataset_digest=<hex>] [config_digest=<hex>] [provenance=<rest of line>]
//   line 2+  <epoch>,<sample_id>,<assigned_label>,<logit0>,...,<logit{c-1}>
//
// Header fields are space-separated key=value pairs; unknown keys are
// ignored so other writers may add metadata. `provenance` must come last
// because its value runs to the end of the line. Epochs are 1-based. Floats
// use the shortest round-trip decimal form; LF line endings.

inline constexpr std::string_view kLogitLogMagic = "#aum-logitlog";

struct LogitLogHeader {
    int version = 1;
    int num_classes = 0;
    int epochs_logged = 0;
    std::uint64_t seed = 0;
    std::string dataset_digest;
    std::string config_digest;
    std::string provenance;

    friend bool operator==(const LogitLogHeader&, const LogitLogHeader&) = default;
};

struct LogitRecordView {
    int epoch;
    SampleId sample_id;
    int assigned_label;
    std::span<const double> logits;
};

/// Anything the trainer can stream per-sample logits into.
template <class S>
concept LogitSink = requires(S& sink, int epoch, SampleId id, int label, std::span<const double> logits) {
    sink.record(epoch, id, label, logits);
};

/// In-memory append-only logit log.
class LogitLog {
public:
    LogitLog() = default;
    explicit LogitLog(LogitLogHeader header) : header_(std::move(header)) {
        if (header_.num_classes < 2) throw std::invalid_argument("logit log: num_classes must be >= 2");
        if (header_.epochs_logged < 1) throw std::invalid_argument("logit log: epochs_logged must be >= 1");
    }

    const LogitLogHeader& header() const { return header_; }
    std::size_t size() const { return meta_.size(); }

    void record(int epoch, SampleId id, int assigned_label, std::span<const double> logits) {
        if (logits.size() != static_cast<std::size_t>(header_.num_classes))
            throw std::invalid_argument("logit log: record has " + std::to_string(logits.size()) +
                                        " logits, header says " + std::to_string(header_.num_classes));
        if (epoch < 1 || epoch > header_.epochs_logged)
            throw std::invalid_argument("logit log: epoch " + std::to_string(epoch) + " outside [1, " +
                                        std::to_string(header_.epochs_logged) + "]");
        meta_.push_back({epoch, id, assigned_label});
        values_.insert(values_.end(), logits.begin(), logits.end());
    }

    LogitRecordView operator[](std::size_t i) const {
        const auto c = static_cast<std::size_t>(header_.num_classes);
        const Meta& m = meta_[i];
        return {m.epoch, m.id, m.label, std::span<const double>(values_.data() + i * c, c)};
    }

    friend bool operator==(const LogitLog& a, const LogitLog& b) {
        return a.header_ == b.header_ && a.meta_ == b.meta_ && a.values_ == b.values_;
    }

private:
    struct Meta {
        int epoch;
        SampleId id;
        int label;
        friend bool operator==(const Meta&, const Meta&) = default;
    };

    LogitLogHeader header_;
    std::vector<Meta> meta_;
    std::vector<double> values_;
};

static_assert(LogitSink<LogitLog>);

namespace detail {

inline std::string format_log_header(const LogitLogHeader& h) {
    std::string out(kLogitLogMagic);
    out += " version=" + std::to_string(h.version);
    out += " num_classes=" + std::to_string(h.num_classes);
    out += " epochs_logged=" + std::to_string(h.epochs_logged);
    out += " seed=" + std::to_string(h.seed);
    if (!h.dataset_digest.empty()) out += " dataset_digest=" + h.dataset_digest;
    if (!h.config_digest.empty()) out += " config_digest=" + h.config_digest;
    if (!h.provenance.empty()) out += " provenance=" + h.provenance;
    out += '\n';
    return out;
}

inline void append_log_record(std::string& out, int epoch, SampleId id, int label, std::span<const double> logits) {
    append_int(out, epoch);
    out += ',';
    append_int(out, id);
    out += ',';
    append_int(out, label);
    for (double z : logits) {
        out += ',';
        append_double(out, z);
    }
    out += '\n';
}

inline LogitLogHeader parse_log_header(std::string_view line) {
    if (!line.starts_with(kLogitLogMagic)) throw parse_error("missing '#aum-logitlog' header", 1);
    line.remove_prefix(kLogitLogMagic.size());
    LogitLogHeader h;
    h.version = 0;
    bool have_c = false, have_t = false;
    while (true) {
        line = trim(line);
        if (line.empty()) break;
        if (line.starts_with("provenance=")) {
            h.provenance = std::string(line.substr(11));
            break;
        }
        auto space = line.find(' ');
        auto token = line.substr(0, space);
        line = space == std::string_view::npos ? std::string_view{} : line.substr(space + 1);
        auto eq = token.find('=');
        if (eq == std::string_view::npos) throw parse_error("header token '" + std::string(token) + "' is not key=value", 1);
        auto key = token.substr(0, eq);
        auto value = token.substr(eq + 1);
        if (key == "version") {
            auto v = parse_number<int>(value);
            if (!v) throw parse_error("bad version", 1);
            h.version = *v;
        } else if (key == "num_classes") {
            auto v = parse_number<int>(value);
            if (!v || *v < 2) throw parse_error("bad num_classes", 1);
            h.num_classes = *v;
            have_c = true;
        } else if (key == "epochs_logged") {
            auto v = parse_number<int>(value);
            if (!v || *v < 1) throw parse_error("bad epochs_logged", 1);
            h.epochs_logged = *v;
            have_t = true;
        } else if (key == "seed") {
            auto v = parse_number<std::uint64_t>(value);
            if (!v) throw parse_error("bad seed", 1);
            h.seed = *v;
        } else if (key == "dataset_digest") {
            h.dataset_digest = std::string(value);
        } else if (key == "config_digest") {
            h.config_digest = std::string(value);
        }
    }
    if (h.version != 1) throw parse_error("unsupported or missing log version", 1);
    if (!have_c || !have_t) throw parse_error("header must define num_classes and epochs_logged", 1);
    return h;
}

}  // namespace detail

inline std::string to_text(const LogitLog& log) {
    std::string out = detail::format_log_header(log.header());
    for (std::size_t i = 0; i < log.size(); ++i) {
        auto r = log[i];
        detail::append_log_record(out, r.epoch, r.sample_id, r.assigned_label, r.logits);
    }
    return out;
}

inline LogitLog parse_logit_log(std::string_view text) {
    auto first_end = text.find('\n');
    LogitLog log(detail::parse_log_header(text.substr(0, first_end)));
    if (first_end == std::string_view::npos) return log;
    const auto c = static_cast<std::size_t>(log.header().num_classes);
    std::vector<double> logits(c);
    std::size_t pos = first_end + 1;
    std::size_t line_no = 1;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) {
            if (pos >= text.size()) break;
            throw parse_error("empty record", line_no);
        }
        auto cols = detail::split(line, ',');
        if (cols.size() != c + 3)
            throw parse_error("record has " + std::to_string(cols.size()) + " fields, expected " +
                                  std::to_string(c + 3),
                              line_no);
        auto epoch = detail::parse_number<int>(cols[0]);
        auto id = detail::parse_number<SampleId>(cols[1]);
        auto label = detail::parse_number<int>(cols[2]);
        if (!epoch || *epoch < 1 || *epoch > log.header().epochs_logged)
            throw parse_error("bad epoch '" + std::string(cols[0]) + "'", line_no);
        if (!id) throw parse_error("bad sample id '" + std::string(cols[1]) + "'", line_no);
        if (!label || *label < 0 || *label >= log.header().num_classes)
            throw parse_error("bad assigned label '" + std::string(cols[2]) + "'", line_no);
        for (std::size_t k = 0; k < c; ++k) {
            auto z = detail::parse_number<double>(cols[k + 3]);
            if (!z || !std::isfinite(*z)) throw parse_error("bad logit '" + std::string(cols[k + 3]) + "'", line_no);
            logits[k] = *z;
        }
        log.record(*epoch, *id, *label, logits);
    }
    return log;
}

inline void write_logit_log(const LogitLog& log, const std::filesystem::path& path) {
    write_text_file(path, to_text(log));
}

inline LogitLog read_logit_log(const std::filesystem::path& path) {
    try {
        return parse_logit_log(read_text_file(path));
    } catch (const parse_error& e) {
        throw e.located(path.string());
    }
}

/// Streams records straight to a file instead of holding them in memory.
class LogitLogWriter {
public:
    LogitLogWriter(const std::filesystem::path& path, const LogitLogHeader& header)
        : out_(path, std::ios::binary | std::ios::trunc), header_(header), path_(path) {
        if (!out_) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
        const auto text = detail::format_log_header(header);
        out_.write(text.data(), static_cast<std::streamsize>(text.size()));
    }

    void record(int epoch, SampleId id, int label, std::span<const double> logits) {
        if (logits.size() != static_cast<std::size_t>(header_.num_classes))
            throw std::invalid_argument("logit log: record width does not match num_classes");
        buffer_.clear();
        detail::append_log_record(buffer_, epoch, id, label, logits);
        out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
        if (!out_) throw std::runtime_error("write failed for '" + path_.string() + "'");
    }

private:
    std::ofstream out_;
    LogitLogHeader header_;
    std::filesystem::path path_;
    std::string buffer_;
};

static_assert(LogitSink<LogitLogWriter>);

/// Discards everything; for training runs whose logits are not needed.
struct NullLogitSink {
    void record(int, SampleId, int, std::span<const double>) {}
};

}  // namespace aum
