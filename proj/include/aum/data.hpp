#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "aum/detail/text.hpp"
#include "aum/errors.hpp"
#include "aum/rng.hpp"

namespace aum {

using SampleId = std::uint64_t;
using IdSet = std::set<SampleId>;

struct Sample {
    SampleId id = 0;
    std::vector<double> features;
    int assigned_label = 0;
    std::optional<int> true_label;

    bool is_mislabeled() const { return true_label && *true_label != assigned_label; }
    friend bool operator==(const Sample&, const Sample&) = default;
};

/// An immutable labelled sample collection. Construction validates: ids are
/// unique, every sample has `feature_dim` finite features, labels lie in
/// [0, num_classes), num_classes >= 2 and there is at least one sample.
class Dataset {
public:
    Dataset(std::vector<Sample> samples, int num_classes, std::string provenance = {})
        : samples_(std::move(samples)), num_classes_(num_classes), provenance_(std::move(provenance)) {
        if (num_classes_ < 2) throw std::invalid_argument("dataset: need at least two classes");
        if (samples_.empty()) throw std::invalid_argument("dataset: need at least one sample");
        feature_dim_ = samples_.front().features.size();
        if (feature_dim_ == 0) throw std::invalid_argument("dataset: samples have no features");
        index_.reserve(samples_.size());
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            const Sample& s = samples_[i];
            if (!index_.emplace(s.id, i).second)
                throw std::invalid_argument("dataset: duplicate sample id " + std::to_string(s.id));
            if (s.features.size() != feature_dim_)
                throw std::invalid_argument("dataset: sample " + std::to_string(s.id) + " has " +
                                            std::to_string(s.features.size()) + " features, expected " +
                                            std::to_string(feature_dim_));
            for (double f : s.features)
                if (!std::isfinite(f))
                    throw std::invalid_argument("dataset: sample " + std::to_string(s.id) +
                                                " has a non-finite feature");
            check_label(s.assigned_label, s.id, "assigned");
            if (s.true_label) check_label(*s.true_label, s.id, "true");
        }
    }

    const std::vector<Sample>& samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }
    int num_classes() const { return num_classes_; }
    std::size_t feature_dim() const { return feature_dim_; }
    const std::string& provenance() const { return provenance_; }

    bool contains(SampleId id) const { return index_.count(id) != 0; }
    const Sample& at(SampleId id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw std::invalid_argument("dataset: unknown sample id " + std::to_string(id));
        return samples_[it->second];
    }

    bool has_ground_truth() const {
        for (const auto& s : samples_)
            if (!s.true_label) return false;
        return true;
    }

    IdSet ids() const {
        IdSet out;
        for (const auto& s : samples_) out.insert(s.id);
        return out;
    }

    IdSet mislabeled_ids() const {
        IdSet out;
        for (const auto& s : samples_)
            if (s.is_mislabeled()) out.insert(s.id);
        return out;
    }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.num_classes_ == b.num_classes_ && a.provenance_ == b.provenance_ && a.samples_ == b.samples_;
    }

private:
    void check_label(int label, SampleId id, const char* which) const {
        if (label < 0 || label >= num_classes_)
            throw std::invalid_argument(std::string("dataset: sample ") + std::to_string(id) + " has " + which +
                                        " label " + std::to_string(label) + " outside [0, " +
                                        std::to_string(num_classes_) + ")");
    }

    std::vector<Sample> samples_;
    int num_classes_;
    std::size_t feature_dim_ = 0;
    std::string provenance_;
    std::unordered_map<SampleId, std::size_t> index_;
};

/// Appends a lineage step to a provenance string.
inline std::string extend_provenance(const std::string& base, const std::string& step) {
    return base.empty() ? step : base + " | " + step;
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Radius of the circle carrying the class means when none is given. With the
/// reference fixture (10 classes, spread 0.35) it keeps the Bayes error near 1%.
inline constexpr double kDefaultClusterRadius = 3.0;

struct SyntheticSpec {
    int num_classes = 10;
    std::size_t feature_dim = 20;
    std::size_t per_class = 500;
    double spread = 0.35;
    std::uint64_t seed = 0;
    double radius = kDefaultClusterRadius;
};

/// Mean of cluster k: radius * (cos 2πk/c, sin 2πk/c, 0, ..., 0).
inline std::vector<double> cluster_mean(int k, int num_classes, std::size_t feature_dim, double radius) {
    std::vector<double> mean(feature_dim, 0.0);
    const double angle = 2.0 * std::numbers::pi * k / num_classes;
    mean[0] = radius * std::cos(angle);
    mean[1] = radius * std::sin(angle);
    return mean;
}

/// Isotropic Gaussian clusters, one per class, with means equally spaced on a
/// circle in the first two feature dimensions. Samples are class-major with
/// ids 0..N-1; assigned and true labels both equal the generating cluster.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes < 2) throw std::invalid_argument("synthetic: need at least two classes");
    if (spec.feature_dim < 2) throw std::invalid_argument("synthetic: need at least two feature dimensions");
    if (spec.per_class < 1) throw std::invalid_argument("synthetic: need at least one sample per class");
    if (!(spec.spread >= 0.0) || !std::isfinite(spec.spread))
        throw std::invalid_argument("synthetic: spread must be a finite non-negative number");
    if (!(spec.radius > 0.0) || !std::isfinite(spec.radius))
        throw std::invalid_argument("synthetic: radius must be positive");

    Rng rng(spec.seed);
    std::vector<Sample> samples;
    samples.reserve(spec.per_class * static_cast<std::size_t>(spec.num_classes));
    SampleId next_id = 0;
    for (int k = 0; k < spec.num_classes; ++k) {
        const auto mean = cluster_mean(k, spec.num_classes, spec.feature_dim, spec.radius);
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            Sample s;
            s.id = next_id++;
            s.features.resize(spec.feature_dim);
            for (std::size_t j = 0; j < spec.feature_dim; ++j) s.features[j] = mean[j] + spec.spread * rng.normal();
            s.assigned_label = k;
            s.true_label = k;
            samples.push_back(std::move(s));
        }
    }
    std::ostringstream prov;
    prov << "synthetic(c=" << spec.num_classes << ",d=" << spec.feature_dim << ",n_per_class=" << spec.per_class
         << ",spread=" << detail::format_double(spec.spread) << ",radius=" << detail::format_double(spec.radius)
         << ",seed=" << spec.seed << ")";
    return Dataset(std::move(samples), spec.num_classes, prov.str());
}

// ---------------------------------------------------------------------------
// Label noise

enum class NoiseModel { uniform, asymmetric };

inline const char* to_string(NoiseModel model) {
    return model == NoiseModel::uniform ? "uniform" : "asymmetric";
}

inline NoiseModel parse_noise_model(std::string_view name) {
    if (name == "uniform") return NoiseModel::uniform;
    if (name == "asymmetric") return NoiseModel::asymmetric;
    throw std::invalid_argument("unknown noise model '" + std::string(name) + "'");
}

struct NoiseSpec {
    NoiseModel model = NoiseModel::uniform;
    double rate = 0.0;
    std::uint64_t seed = 0;
};

namespace detail {

inline void check_corruptible(const Dataset& ds, double rate) {
    if (!(rate >= 0.0 && rate <= 1.0))
        throw std::invalid_argument("corrupt: noise rate must lie in [0, 1]");
    if (!ds.has_ground_truth()) throw std::invalid_argument("corrupt: every sample needs a true label");
}

}  // namespace detail

/// With probability p a sample gets a label drawn uniformly from the c-1
/// classes other than its true class; otherwise its label is the true class.
inline Dataset corrupt_uniform(const Dataset& ds, double rate, std::uint64_t seed) {
    detail::check_corruptible(ds, rate);
    Rng rng(seed);
    const int c = ds.num_classes();
    std::vector<Sample> out = ds.samples();
    for (auto& s : out) {
        const int truth = *s.true_label;
        s.assigned_label = truth;
        if (rng.bernoulli(rate)) {
            const int draw = static_cast<int>(rng.below(static_cast<std::uint64_t>(c - 1)));
            s.assigned_label = draw < truth ? draw : draw + 1;
        }
    }
    return Dataset(std::move(out), c,
                   extend_provenance(ds.provenance(), "uniform(p=" + detail::format_double(rate) +
                                                          ",seed=" + std::to_string(seed) + ")"));
}

/// With probability p a sample is relabelled to (true + 1) mod c.
inline Dataset corrupt_asymmetric(const Dataset& ds, double rate, std::uint64_t seed) {
    detail::check_corruptible(ds, rate);
    Rng rng(seed);
    const int c = ds.num_classes();
    std::vector<Sample> out = ds.samples();
    for (auto& s : out) {
        const int truth = *s.true_label;
        s.assigned_label = rng.bernoulli(rate) ? (truth + 1) % c : truth;
    }
    return Dataset(std::move(out), c,
                   extend_provenance(ds.provenance(), "asymmetric(p=" + detail::format_double(rate) +
                                                          ",seed=" + std::to_string(seed) + ")"));
}

inline Dataset corrupt(const Dataset& ds, const NoiseSpec& spec) {
    return spec.model == NoiseModel::uniform ? corrupt_uniform(ds, spec.rate, spec.seed)
                                             : corrupt_asymmetric(ds, spec.rate, spec.seed);
}

/// Copy whose assigned labels are reset to the true labels (for clean holdout evaluation).
inline Dataset with_true_labels(const Dataset& ds) {
    if (!ds.has_ground_truth()) throw std::invalid_argument("with_true_labels: dataset lacks ground truth");
    std::vector<Sample> out = ds.samples();
    for (auto& s : out) s.assigned_label = *s.true_label;
    return Dataset(std::move(out), ds.num_classes(), extend_provenance(ds.provenance(), "true-labels"));
}

/// Keeps the samples whose id is (or, with keep=false, is not) in `ids`, in original order.
inline Dataset select_samples(const Dataset& ds, const IdSet& ids, bool keep, const std::string& step) {
    std::vector<Sample> out;
    for (const auto& s : ds.samples())
        if ((ids.count(s.id) != 0) == keep) out.push_back(s);
    return Dataset(std::move(out), ds.num_classes(), extend_provenance(ds.provenance(), step));
}

// ---------------------------------------------------------------------------
// Holdout split

struct Split {
    Dataset train;
    Dataset test;
};

/// Stratified split: within every class (true label when all samples have
/// one, else assigned label) the sorted ids are shuffled and the first
/// round(fraction * class size) go to the test part.
inline Split split_holdout(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("split: test fraction must lie in (0, 1)");
    const bool by_truth = ds.has_ground_truth();
    std::map<int, std::vector<SampleId>> strata;
    for (const auto& s : ds.samples()) strata[by_truth ? *s.true_label : s.assigned_label].push_back(s.id);

    Rng rng(seed);
    IdSet test_ids;
    for (auto& [label, ids] : strata) {
        std::sort(ids.begin(), ids.end());
        rng.shuffle(ids);
        const auto take = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(ids.size())));
        test_ids.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(take, ids.size())));
    }
    if (test_ids.empty() || test_ids.size() == ds.size())
        throw std::invalid_argument("split: test fraction " + detail::format_double(test_fraction) +
                                    " leaves one part empty");
    const std::string tag = "fraction=" + detail::format_double(test_fraction) + ",seed=" + std::to_string(seed);
    return Split{select_samples(ds, test_ids, false, "holdout-train(" + tag + ")"),
                 select_samples(ds, test_ids, true, "holdout-test(" + tag + ")")};
}

// ---------------------------------------------------------------------------
// CSV
//
//   # num_classes=<c>              optional metadata lines before the header
//   # provenance=<free text>
//   id,assigned_label,true_label,f0,...,f{d-1}
//   <id>,<label>,<label or -1>,<float>,...
//
// Floats use the shortest round-trip decimal form; LF line endings.

inline std::string to_csv(const Dataset& ds) {
    std::string out;
    out += "# num_classes=" + std::to_string(ds.num_classes()) + "\n";
    if (!ds.provenance().empty()) out += "# provenance=" + ds.provenance() + "\n";
    out += "id,assigned_label,true_label";
    for (std::size_t j = 0; j < ds.feature_dim(); ++j) out += ",f" + std::to_string(j);
    out += '\n';
    for (const auto& s : ds.samples()) {
        detail::append_int(out, s.id);
        out += ',';
        detail::append_int(out, s.assigned_label);
        out += ',';
        detail::append_int(out, s.true_label ? *s.true_label : -1);
        for (double f : s.features) {
            out += ',';
            detail::append_double(out, f);
        }
        out += '\n';
    }
    return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_csv(const Dataset& ds, const std::filesystem::path& path) { write_text_file(path, to_csv(ds)); }

inline Dataset parse_csv(std::string_view text) {
    std::optional<int> declared_classes;
    std::string provenance;
    std::size_t feature_dim = 0;
    bool have_header = false;
    std::vector<Sample> samples;
    std::unordered_map<SampleId, std::size_t> first_line;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (!have_header) {
            if (line.starts_with("#")) {
                auto body = detail::trim(line.substr(1));
                if (body.starts_with("num_classes=")) {
                    auto c = detail::parse_number<int>(body.substr(12));
                    if (!c || *c < 2) throw parse_error("bad num_classes metadata", line_no);
                    declared_classes = *c;
                } else if (body.starts_with("provenance=")) {
                    provenance = std::string(body.substr(11));
                }
                continue;
            }
            auto cols = detail::split(line, ',');
            if (cols.size() < 4 || cols[0] != "id" || cols[1] != "assigned_label" || cols[2] != "true_label")
                throw parse_error("expected header 'id,assigned_label,true_label,f0,...'", line_no);
            for (std::size_t j = 3; j < cols.size(); ++j)
                if (cols[j] != "f" + std::to_string(j - 3))
                    throw parse_error("header column " + std::to_string(j + 1) + " should be f" +
                                          std::to_string(j - 3),
                                      line_no);
            feature_dim = cols.size() - 3;
            have_header = true;
            continue;
        }
        if (line.empty()) {
            if (pos >= text.size()) break;
            throw parse_error("empty row", line_no);
        }
        auto cols = detail::split(line, ',');
        if (cols.size() != feature_dim + 3)
            throw parse_error("row has " + std::to_string(cols.size()) + " columns, expected " +
                                  std::to_string(feature_dim + 3),
                              line_no);
        Sample s;
        auto id = detail::parse_number<SampleId>(cols[0]);
        if (!id) throw parse_error("bad sample id '" + std::string(cols[0]) + "'", line_no);
        s.id = *id;
        auto assigned = detail::parse_number<int>(cols[1]);
        if (!assigned || *assigned < 0) throw parse_error("bad assigned_label '" + std::string(cols[1]) + "'", line_no);
        s.assigned_label = *assigned;
        auto truth = detail::parse_number<int>(cols[2]);
        if (!truth || *truth < -1) throw parse_error("bad true_label '" + std::string(cols[2]) + "'", line_no);
        if (*truth >= 0) s.true_label = *truth;
        s.features.resize(feature_dim);
        for (std::size_t j = 0; j < feature_dim; ++j) {
            auto f = detail::parse_number<double>(cols[j + 3]);
            if (!f || !std::isfinite(*f))
                throw parse_error("bad feature f" + std::to_string(j) + " '" + std::string(cols[j + 3]) + "'",
                                  line_no);
            s.features[j] = *f;
        }
        if (declared_classes) {
            if (s.assigned_label >= *declared_classes || (s.true_label && *s.true_label >= *declared_classes))
                throw parse_error("label outside [0, " + std::to_string(*declared_classes) + ")", line_no);
        }
        auto [it, fresh] = first_line.emplace(s.id, line_no);
        if (!fresh)
            throw parse_error("duplicate sample id " + std::to_string(s.id) + " (first seen on line " +
                                  std::to_string(it->second) + ")",
                              line_no);
        samples.push_back(std::move(s));
    }
    if (!have_header) throw parse_error("missing header", line_no);
    if (samples.empty()) throw std::invalid_argument("dataset file has no samples");

    int classes = 2;
    if (declared_classes) {
        classes = *declared_classes;
    } else {
        for (const auto& s : samples) {
            classes = std::max(classes, s.assigned_label + 1);
            if (s.true_label) classes = std::max(classes, *s.true_label + 1);
        }
    }
    return Dataset(std::move(samples), classes, std::move(provenance));
}

inline Dataset read_csv(const std::filesystem::path& path) {
    try {
        return parse_csv(read_text_file(path));
    } catch (const parse_error& e) {
        throw e.located(path.string());
    }
}

}  // namespace aum
