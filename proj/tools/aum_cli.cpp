// aum: command-line front end for mislabeled-sample identification.
//
// Every subcommand takes explicit seeds, writes its outputs plus a JSON run
// manifest, and on failure prints a single line
//   error: kind=<kind> message="<text>"
// to stderr with a nonzero exit status.

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "aum/aum.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string sha256_file(const fs::path& path) {
    const std::string bytes = aum::read_text_file(path);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class Manifest {
public:
    Manifest(std::string command, const std::vector<std::string>& argv) {
        doc_["tool"] = "aum";
        doc_["command"] = std::move(command);
        doc_["argv"] = argv;
        doc_["seeds"] = json::object();
        doc_["config_digests"] = json::object();
        doc_["inputs"] = json::array();
        doc_["outputs"] = json::array();
    }

    void seed(const std::string& name, std::uint64_t value) { doc_["seeds"][name] = value; }
    void config(const std::string& name, const aum::TrainConfig& cfg) {
        doc_["config_digests"][name] = cfg.digest();
    }
    void input(const fs::path& path) { doc_["inputs"].push_back(entry(path)); }
    void output(const fs::path& path) { doc_["outputs"].push_back(entry(path)); }
    void result(const std::string& key, json value) { doc_["result"][key] = std::move(value); }

    void write(const fs::path& path) {
        doc_["timestamp"] = utc_timestamp();
        aum::write_text_file(path, doc_.dump(2) + "\n");
    }

private:
    static json entry(const fs::path& path) { return {{"path", path.string()}, {"sha256", sha256_file(path)}}; }
    json doc_;
};

/// Schedule for identification runs: `id_epochs` is the first drop of a
/// schedule twice as long.
aum::TrainConfig identification_config(int id_epochs, std::size_t batch, std::size_t hidden, std::uint64_t seed) {
    if (id_epochs < 1) throw std::invalid_argument("--id-epochs must be >= 1");
    aum::TrainConfig cfg = aum::TrainConfig::identification(2 * id_epochs, batch, seed);
    cfg.hidden_width = hidden;
    return cfg;
}

struct HoldoutPair {
    aum::Dataset train;
    aum::Dataset holdout;
};

/// Splits `ds` unless an explicit holdout file is given; the holdout is
/// scored against true labels whenever it has them.
HoldoutPair make_holdout(const aum::Dataset& ds, const std::string& holdout_path, double test_fraction,
                         std::uint64_t seed, Manifest& manifest) {
    auto truthful = [](const aum::Dataset& d) { return d.has_ground_truth() ? aum::with_true_labels(d) : d; };
    if (!holdout_path.empty()) {
        manifest.input(holdout_path);
        return {ds, truthful(aum::read_csv(holdout_path))};
    }
    auto split = aum::split_holdout(ds, test_fraction, aum::derive_seed(seed, 7));
    return {split.train, truthful(split.test)};
}

std::string escape(std::string text) {
    std::string out;
    for (char ch : text) {
        if (ch == '"' || ch == '\\') out += '\\';
        if (ch == '\n') {
            out += "\\n";
            continue;
        }
        out += ch;
    }
    return out;
}

int fail(const std::string& kind, const std::string& message) {
    std::cerr << "error: kind=" << kind << " message=\"" << escape(message) << "\"" << std::endl;
    return kind == "usage" ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Identify mislabeled training samples with the area-under-the-margin statistic"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");
    const std::vector<std::string> args(argv, argv + argc);
    std::string manifest_path;

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a Gaussian-cluster dataset");
    aum::SyntheticSpec synth_spec;
    std::string synth_out;
    synth->add_option("--classes,-c", synth_spec.num_classes, "Number of classes")->capture_default_str();
    synth->add_option("--dim,-d", synth_spec.feature_dim, "Feature dimension")->capture_default_str();
    synth->add_option("--n-per-class,-n", synth_spec.per_class, "Samples per class")->capture_default_str();
    synth->add_option("--spread", synth_spec.spread, "Per-class standard deviation")->capture_default_str();
    synth->add_option("--radius", synth_spec.radius, "Radius of the circle of class means")->capture_default_str();
    synth->add_option("--seed", synth_spec.seed, "Random seed")->required();
    synth->add_option("--out,-o", synth_out, "Output CSV")->required();

    // corrupt
    auto* corrupt = app.add_subcommand("corrupt", "Inject label noise");
    std::string corrupt_in, corrupt_out, corrupt_model = "uniform";
    double corrupt_rate = 0.0;
    std::uint64_t corrupt_seed = 0;
    corrupt->add_option("--in,-i", corrupt_in, "Input dataset CSV")->required()->check(CLI::ExistingFile);
    corrupt->add_option("--model,-m", corrupt_model, "Noise model")
        ->check(CLI::IsMember({"uniform", "asymmetric"}))
        ->capture_default_str();
    corrupt->add_option("--rate,-p", corrupt_rate, "Noise rate p in [0, 1]")->required()->check(CLI::Range(0.0, 1.0));
    corrupt->add_option("--seed", corrupt_seed, "Random seed")->required();
    corrupt->add_option("--out,-o", corrupt_out, "Output CSV")->required();

    // identify
    auto* identify = app.add_subcommand("identify", "Run the two-round threshold-sample identification");
    std::string identify_in, identify_out;
    double identify_q = aum::kDefaultPercentile;
    int id_epochs = aum::kDefaultEpochs / 2;
    std::size_t id_batch = aum::kDefaultIdentificationBatchSize, id_hidden = 128;
    std::uint64_t identify_seed = 0;
    std::vector<aum::SampleId> trajectory_ids;
    identify->add_option("--in,-i", identify_in, "Dataset CSV")->required()->check(CLI::ExistingFile);
    identify->add_option("--q", identify_q, "Threshold percentile")->check(CLI::Range(0.0, 100.0))->capture_default_str();
    identify->add_option("--id-epochs", id_epochs, "Epochs per identification run (the first LR drop)")
        ->capture_default_str();
    identify->add_option("--id-batch-size", id_batch, "Identification batch size")->capture_default_str();
    identify->add_option("--hidden", id_hidden, "Hidden width")->capture_default_str();
    identify->add_option("--seed", identify_seed, "Random seed")->required();
    identify->add_option("--out-dir,-o", identify_out, "Output directory")->required();
    identify->add_option("--trajectories", trajectory_ids, "Sample ids whose margin trajectories are written");

    // score
    auto* score = app.add_subcommand("score", "Precision/recall of a report against ground truth");
    std::string score_report, score_dataset;
    score->add_option("--report,-r", score_report, "Identification output directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    score->add_option("--dataset,-d", score_dataset, "Dataset CSV with true labels")->required()->check(CLI::ExistingFile);

    // clean
    auto* clean = app.add_subcommand("clean", "Drop flagged samples");
    std::string clean_in, clean_report, clean_out;
    clean->add_option("--in,-i", clean_in, "Dataset CSV")->required()->check(CLI::ExistingFile);
    clean->add_option("--report,-r", clean_report, "Identification output directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    clean->add_option("--out,-o", clean_out, "Output CSV")->required();

    // retrain
    auto* retrain = app.add_subcommand("retrain", "Train the full schedule and print holdout error");
    std::string retrain_in, retrain_holdout;
    int retrain_epochs = aum::kDefaultEpochs;
    std::size_t retrain_batch = aum::kDefaultBatchSize, retrain_hidden = 128;
    double removed_fraction = 0.0, test_fraction = 0.2;
    std::uint64_t retrain_seed = 0;
    retrain->add_option("--in,-i", retrain_in, "Training dataset CSV")->required()->check(CLI::ExistingFile);
    retrain->add_option("--epochs", retrain_epochs, "Total epochs")->capture_default_str();
    retrain->add_option("--batch-size", retrain_batch, "Batch size before adjustment")->capture_default_str();
    retrain->add_option("--removed-fraction", removed_fraction,
                        "Fraction of data removed upstream; scales the batch size to keep the iteration count")
        ->check(CLI::Range(0.0, 0.999999))
        ->capture_default_str();
    retrain->add_option("--hidden", retrain_hidden, "Hidden width")->capture_default_str();
    retrain->add_option("--holdout", retrain_holdout, "Holdout CSV (default: split off --test-fraction)")
        ->check(CLI::ExistingFile);
    retrain->add_option("--test-fraction", test_fraction, "Holdout fraction when splitting")->capture_default_str();
    retrain->add_option("--seed", retrain_seed, "Random seed")->required();

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Holdout error after removing increasing fractions of data");
    std::string sweep_in, sweep_out, sweep_mode = "both", sweep_holdout;
    std::vector<double> sweep_fractions = {0.0, 0.1, 0.2, 0.3, 0.4};
    int sweep_epochs = aum::kDefaultEpochs;
    std::size_t sweep_batch = aum::kDefaultBatchSize;
    std::uint64_t sweep_seed = 0;
    sweep->add_option("--in,-i", sweep_in, "Dataset CSV")->required()->check(CLI::ExistingFile);
    sweep->add_option("--fractions", sweep_fractions, "Removal fractions in [0, 1)")->capture_default_str();
    sweep->add_option("--mode", sweep_mode, "aum-ranked, random or both")
        ->check(CLI::IsMember({"aum-ranked", "random", "both"}))
        ->capture_default_str();
    sweep->add_option("--epochs", sweep_epochs, "Total epochs per retraining")->capture_default_str();
    sweep->add_option("--batch-size", sweep_batch, "Batch size at zero removal")->capture_default_str();
    sweep->add_option("--id-epochs", id_epochs, "Identification epochs")->capture_default_str();
    sweep->add_option("--id-batch-size", id_batch, "Identification batch size")->capture_default_str();
    sweep->add_option("--holdout", sweep_holdout, "Holdout CSV (default: split off --test-fraction)")
        ->check(CLI::ExistingFile);
    sweep->add_option("--test-fraction", test_fraction, "Holdout fraction when splitting")->capture_default_str();
    sweep->add_option("--seed", sweep_seed, "Random seed")->required();
    sweep->add_option("--out,-o", sweep_out, "Output directory")->required();

    // consistency
    auto* consistency = app.add_subcommand("consistency", "Spearman agreement of AUMs across training seeds");
    std::string consistency_in, consistency_out;
    std::vector<std::uint64_t> consistency_seeds;
    std::vector<std::size_t> consistency_widths;
    std::uint64_t plan_seed = 0;
    consistency->add_option("--in,-i", consistency_in, "Dataset CSV")->required()->check(CLI::ExistingFile);
    consistency->add_option("--seeds", consistency_seeds, "Training seeds, one network each")->required();
    consistency->add_option("--hidden-widths", consistency_widths, "Hidden width per seed (default 128 for all)");
    consistency->add_option("--plan-seed", plan_seed, "Seed of the shared threshold plan")->required();
    consistency->add_option("--id-epochs", id_epochs, "Identification epochs")->capture_default_str();
    consistency->add_option("--id-batch-size", id_batch, "Identification batch size")->capture_default_str();
    consistency->add_option("--out,-o", consistency_out, "Output directory")->required();

    // aum
    auto* aum_cmd = app.add_subcommand("aum", "Recompute AUMs, alpha and flags from logit logs");
    std::string aum_log1, aum_log2, aum_plan, aum_dataset, aum_out;
    double aum_q = aum::kDefaultPercentile;
    int aum_round = 1;
    aum_cmd->add_option("--log,-l", aum_log1, "Logit log (round 1, or the round given by --round)")
        ->required()
        ->check(CLI::ExistingFile);
    aum_cmd->add_option("--log2", aum_log2, "Round-2 logit log for the full two-round verdict")->check(CLI::ExistingFile);
    aum_cmd->add_option("--plan,-p", aum_plan, "Threshold plan file")->check(CLI::ExistingFile);
    aum_cmd->add_option("--round", aum_round, "Round of --log when --log2 is absent")
        ->check(CLI::IsMember({1, 2}))
        ->capture_default_str();
    aum_cmd->add_option("--q", aum_q, "Threshold percentile")->check(CLI::Range(0.0, 100.0))->capture_default_str();
    aum_cmd->add_option("--dataset", aum_dataset, "Dataset CSV providing true labels")->check(CLI::ExistingFile);
    aum_cmd->add_option("--trajectories", trajectory_ids, "Sample ids whose margin trajectories are written");
    aum_cmd->add_option("--out-dir,-o", aum_out, "Output directory")->required();

    for (auto* sub : app.get_subcommands([](CLI::App*) { return true; }))
        sub->add_option("--manifest", manifest_path, "Run manifest path (default: next to the outputs)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what());
    }

    try {
        if (synth->parsed()) {
            Manifest manifest("synth", args);
            const auto ds = aum::generate_synthetic(synth_spec);
            aum::write_csv(ds, synth_out);
            manifest.seed("synth", synth_spec.seed);
            manifest.output(synth_out);
            manifest.write(manifest_path.empty() ? synth_out + ".manifest.json" : manifest_path);
            std::cout << "wrote " << ds.size() << " samples to " << synth_out << "\n";
        } else if (corrupt->parsed()) {
            Manifest manifest("corrupt", args);
            manifest.input(corrupt_in);
            const auto ds = aum::read_csv(corrupt_in);
            const auto noisy = aum::corrupt(ds, {aum::parse_noise_model(corrupt_model), corrupt_rate, corrupt_seed});
            aum::write_csv(noisy, corrupt_out);
            manifest.seed("corrupt", corrupt_seed);
            manifest.output(corrupt_out);
            manifest.write(manifest_path.empty() ? corrupt_out + ".manifest.json" : manifest_path);
            std::cout << "mislabeled " << noisy.mislabeled_ids().size() << " of " << noisy.size() << " samples\n";
        } else if (identify->parsed()) {
            Manifest manifest("identify", args);
            manifest.input(identify_in);
            const auto ds = aum::read_csv(identify_in);
            const auto cfg = identification_config(id_epochs, id_batch, id_hidden, identify_seed);
            const auto run = aum::run_identification(ds, cfg, identify_q, identify_seed);
            const auto written = aum::persist_identification(run, ds.has_ground_truth() ? &ds : nullptr, identify_out,
                                                             trajectory_ids);
            manifest.seed("plan", identify_seed);
            manifest.seed("round1", run.round_config[0].seed);
            manifest.seed("round2", run.round_config[1].seed);
            manifest.config("round1", run.round_config[0]);
            manifest.config("round2", run.round_config[1]);
            for (const auto& path : written) manifest.output(path);
            manifest.result("flagged", run.report.flagged_ids.size());
            manifest.write(manifest_path.empty() ? (fs::path(identify_out) / "manifest.json").string() : manifest_path);
            std::cout << "alpha_round1=" << aum::detail::format_double(run.report.alpha_round1)
                      << " alpha_round2=" << aum::detail::format_double(run.report.alpha_round2)
                      << " flagged=" << run.report.flagged_ids.size() << " of " << ds.size() << "\n";
            if (run.report.metrics)
                std::cout << "precision=" << aum::detail::format_double(run.report.metrics->precision)
                          << " recall=" << aum::detail::format_double(run.report.metrics->recall) << "\n";
        } else if (score->parsed()) {
            Manifest manifest("score", args);
            manifest.input(fs::path(score_report) / "flags.csv");
            manifest.input(score_dataset);
            const auto report = aum::read_report(score_report);
            const auto m = aum::score_identification(report, aum::read_csv(score_dataset));
            std::cout << "precision=" << aum::detail::format_double(m.precision)
                      << " recall=" << aum::detail::format_double(m.recall) << " num_flagged=" << m.num_flagged
                      << " num_mislabeled=" << m.num_mislabeled << "\n";
            manifest.result("precision", m.precision);
            manifest.result("recall", m.recall);
            manifest.write(manifest_path.empty() ? (fs::path(score_report) / "score.manifest.json").string()
                                                 : manifest_path);
        } else if (clean->parsed()) {
            Manifest manifest("clean", args);
            manifest.input(clean_in);
            manifest.input(fs::path(clean_report) / "flags.csv");
            const auto ds = aum::read_csv(clean_in);
            const auto cleaned = aum::clean_dataset(ds, aum::read_report(clean_report));
            aum::write_csv(cleaned, clean_out);
            manifest.output(clean_out);
            manifest.write(manifest_path.empty() ? clean_out + ".manifest.json" : manifest_path);
            std::cout << "kept " << cleaned.size() << " of " << ds.size() << " samples\n";
        } else if (retrain->parsed()) {
            Manifest manifest("retrain", args);
            manifest.input(retrain_in);
            const auto ds = aum::read_csv(retrain_in);
            const auto parts = make_holdout(ds, retrain_holdout, test_fraction, retrain_seed, manifest);
            auto cfg = aum::TrainConfig::full(retrain_epochs, aum::adjusted_batch_size(retrain_batch, removed_fraction),
                                              retrain_seed);
            cfg.hidden_width = retrain_hidden;
            const auto model =
                aum::train(aum::init_model(parts.train.feature_dim(), parts.train.num_classes(), cfg), parts.train, cfg);
            const double error = aum::evaluate(model, parts.holdout);
            std::cout << "holdout_error=" << aum::detail::format_double(error) << " batch_size=" << cfg.batch_size
                      << " train_samples=" << parts.train.size() << " holdout_samples=" << parts.holdout.size() << "\n";
            manifest.seed("train", retrain_seed);
            manifest.config("train", cfg);
            manifest.result("holdout_error", error);
            manifest.write(manifest_path.empty() ? retrain_in + ".retrain.manifest.json" : manifest_path);
        } else if (sweep->parsed()) {
            Manifest manifest("sweep", args);
            manifest.input(sweep_in);
            const auto ds = aum::read_csv(sweep_in);
            const auto parts = make_holdout(ds, sweep_holdout, test_fraction, sweep_seed, manifest);
            const auto train_cfg = aum::TrainConfig::full(sweep_epochs, sweep_batch, sweep_seed);
            std::map<aum::SampleId, double> aums;
            if (sweep_mode != "random") {
                const auto cfg = identification_config(id_epochs, id_batch, 128, sweep_seed);
                const auto run = aum::run_identification(parts.train, cfg, aum::kDefaultPercentile, sweep_seed);
                aums = aum::judged_aums(run.report, run.table1, run.table2);
                manifest.config("identification", cfg);
            }
            fs::create_directories(sweep_out);
            std::string table = "mode,fraction,removed,batch_size,test_error\n";
            for (auto mode : {aum::RemovalMode::aum_ranked, aum::RemovalMode::random}) {
                if (sweep_mode != "both" && sweep_mode != aum::to_string(mode)) continue;
                for (const auto& p : aum::removal_sweep(parts.train, parts.holdout, aums, sweep_fractions, mode,
                                                        train_cfg, sweep_seed)) {
                    table += std::string(aum::to_string(mode)) + "," + aum::detail::format_double(p.fraction) + "," +
                             std::to_string(p.removed) + "," + std::to_string(p.batch_size) + "," +
                             aum::detail::format_double(p.test_error) + "\n";
                }
            }
            const auto out_file = fs::path(sweep_out) / "sweep.csv";
            aum::write_text_file(out_file, table);
            std::cout << table;
            manifest.seed("sweep", sweep_seed);
            manifest.config("train", train_cfg);
            manifest.output(out_file);
            manifest.write(manifest_path.empty() ? (fs::path(sweep_out) / "manifest.json").string() : manifest_path);
        } else if (consistency->parsed()) {
            Manifest manifest("consistency", args);
            manifest.input(consistency_in);
            const auto ds = aum::read_csv(consistency_in);
            if (!consistency_widths.empty() && consistency_widths.size() != consistency_seeds.size())
                throw std::invalid_argument("--hidden-widths needs one entry per seed");
            std::vector<aum::TrainConfig> cfgs;
            for (std::size_t i = 0; i < consistency_seeds.size(); ++i) {
                const std::size_t width = consistency_widths.empty() ? 128 : consistency_widths[i];
                cfgs.push_back(identification_config(id_epochs, id_batch, width, consistency_seeds[i]));
                manifest.seed("network" + std::to_string(i), consistency_seeds[i]);
                manifest.config("network" + std::to_string(i), cfgs.back());
            }
            const auto matrix = aum::consistency_check(ds, cfgs, plan_seed);
            std::string table = "network";
            for (std::size_t j = 0; j < matrix.size(); ++j) table += ",seed_" + std::to_string(consistency_seeds[j]);
            table += "\n";
            for (std::size_t i = 0; i < matrix.size(); ++i) {
                table += "seed_" + std::to_string(consistency_seeds[i]);
                for (double v : matrix[i]) table += "," + aum::detail::format_double(v);
                table += "\n";
            }
            fs::create_directories(consistency_out);
            const auto out_file = fs::path(consistency_out) / "consistency.csv";
            aum::write_text_file(out_file, table);
            std::cout << table;
            manifest.seed("plan", plan_seed);
            manifest.output(out_file);
            manifest.write(manifest_path.empty() ? (fs::path(consistency_out) / "manifest.json").string()
                                                 : manifest_path);
        } else if (aum_cmd->parsed()) {
            Manifest manifest("aum", args);
            manifest.input(aum_log1);
            const auto log1 = aum::read_logit_log(aum_log1);
            std::optional<aum::LogitLog> log2;
            if (!aum_log2.empty()) {
                manifest.input(aum_log2);
                log2 = aum::read_logit_log(aum_log2);
            }
            std::optional<aum::ThresholdPlan> plan;
            if (!aum_plan.empty()) {
                manifest.input(aum_plan);
                plan = aum::read_plan(aum_plan);
            }
            std::optional<aum::Dataset> truth;
            if (!aum_dataset.empty()) {
                manifest.input(aum_dataset);
                truth = aum::read_csv(aum_dataset);
            }
            if (log2 && !plan) throw std::invalid_argument("--log2 needs --plan");
            fs::create_directories(aum_out);
            std::vector<fs::path> written;
            const aum::Dataset* truth_ptr = truth ? &*truth : nullptr;
            if (!plan) {
                // No threshold samples: the AUM table is all there is.
                const auto table = aum::compute_aum_table(log1, {});
                const auto path = fs::path(aum_out) / "aum.csv";
                aum::write_text_file(path, aum::format_aum_table(table, truth_ptr));
                written.push_back(path);
                if (!trajectory_ids.empty()) {
                    const auto traces = aum::margin_traces(log1);
                    fs::create_directories(fs::path(aum_out) / "trajectories");
                    for (auto id : trajectory_ids) {
                        if (!traces.count(id))
                            throw std::invalid_argument("no logged trajectory for sample " + std::to_string(id));
                        const auto tpath = fs::path(aum_out) / "trajectories" / (std::to_string(id) + ".csv");
                        aum::write_text_file(tpath, aum::format_trajectory(traces.at(id)));
                        written.push_back(tpath);
                    }
                }
            } else if (log2) {
                const auto t1 = aum::compute_aum_table(log1, plan->s1);
                const auto t2 = aum::compute_aum_table(*log2, plan->s2);
                auto report = aum::flag_mislabeled(t1, t2, *plan, aum_q);
                if (truth && truth->has_ground_truth()) report.metrics = aum::score_identification(report, *truth);
                written = aum::emit_report({&report, &t1, &t2, &log1, &*log2, truth_ptr, trajectory_ids}, aum_out);
                std::cout << "flagged=" << report.flagged_ids.size() << "\n";
            } else {
                const auto table = aum::compute_aum_table(log1, plan->subset(aum_round));
                auto report = aum::flag_single_round(table, aum_q, aum_round);
                if (truth && truth->has_ground_truth()) report.metrics = aum::score_identification(report, *truth);
                aum::ReportSources src{&report, nullptr, nullptr, nullptr, nullptr, truth_ptr, trajectory_ids};
                (aum_round == 1 ? src.table1 : src.table2) = &table;
                (aum_round == 1 ? src.log1 : src.log2) = &log1;
                written = aum::emit_report(src, aum_out);
                std::cout << "flagged=" << report.flagged_ids.size() << "\n";
            }
            for (const auto& path : written) manifest.output(path);
            manifest.write(manifest_path.empty() ? (fs::path(aum_out) / "manifest.json").string() : manifest_path);
        }
    } catch (const aum::parse_error& e) {
        return fail("parse", e.what());
    } catch (const aum::corrupt_log_error& e) {
        return fail("corrupt-log", e.what());
    } catch (const aum::diverged_error& e) {
        return fail("diverged", e.what());
    } catch (const aum::undefined_correlation& e) {
        return fail("undefined-correlation", e.what());
    } catch (const std::invalid_argument& e) {
        return fail("invalid-argument", e.what());
    } catch (const fs::filesystem_error& e) {
        return fail("io", e.what());
    } catch (const std::exception& e) {
        return fail("runtime", e.what());
    }
    return 0;
}
