// Command-line front end: synth, train, export, eval, probe, replay.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "actembed/corpus.hpp"
#include "actembed/downstream.hpp"
#include "actembed/errors.hpp"
#include "actembed/model.hpp"
#include "actembed/synth.hpp"
#include "actembed/trainer.hpp"

using namespace actembed;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct RunManifest {
    std::string command;
    std::vector<std::string> args;
    json config = json::object();
    json seeds = json::object();
    json inputs = json::object();
    json outputs = json::object();
    double seconds = 0.0;
    std::string started;

    std::string to_json() const {
        json j;
        j["command"] = command;
        j["args"] = args;
        j["config"] = config;
        j["seeds"] = seeds;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["version"] = kVersion;
        j["started_utc"] = started;
        j["wall_clock_seconds"] = seconds;
        return j.dump(2);
    }
};

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file: " + path);
    out << text;
    if (text.empty() || text.back() != '\n') out << '\n';
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t default_threads() {
    if (const char* env = std::getenv("ACTEMBED_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
        throw ConfigError("ACTEMBED_THREADS must be a positive integer");
    }
    return 1;
}

json synth_config_json(const SynthConfig& c) {
    json effects = json::object();
    for (std::size_t t = 0; t < 4; ++t)
        effects[std::string(task_name(kTasks[t]))] = {{"band_hours", {c.effects[t].start_hour, c.effects[t].end_hour}},
                                                     {"amplitude", c.effects[t].amplitude}};
    return {{"n_subjects", c.n_subjects},
            {"labeled_fraction", c.labeled_fraction},
            {"length", c.length},
            {"v_max", c.v_max},
            {"circadian_amplitude", c.circadian_amplitude},
            {"circadian_peak_hour", c.circadian_peak_hour},
            {"effects", effects},
            {"gain_range", {c.gain_min, c.gain_max}},
            {"phase_hours", c.phase_hours},
            {"weekend", {{"days", c.weekend_days},
                         {"gain_range", {c.weekend_gain_min, c.weekend_gain_max}},
                         {"shift_hours", c.weekend_shift_hours}}},
            {"effect_days", c.effect_days},
            {"noise_scale", c.noise_scale},
            {"noise_rate", c.noise_rate},
            {"missing_rate", c.missing_rate},
            {"seed", c.seed}};
}

// Loads the model and corpus and checks that they belong together.
struct Bound {
    Corpus corpus;
    ModelParams params;
    SegmentIndex index;
    EncodedCorpus encoded;
};

Bound bind_model(const std::string& model_path, const std::string& corpus_path) {
    Bound b{load_corpus(corpus_path), load_model(model_path), {}, {}};
    const auto corpus_vocab = build_vocabulary(b.corpus);
    if (corpus_vocab.hash() != b.params.vocab_hash())
        throw InputError("corpus vocabulary hash " + corpus_vocab.hash() + " does not match model vocabulary hash " +
                         b.params.vocab_hash());
    const std::size_t half_width = [&] {
        const auto hp = json::parse(b.params.hyperparameters, nullptr, false);
        return hp.is_object() && hp.contains("half_width") ? hp["half_width"].get<std::size_t>() : std::size_t{1};
    }();
    b.index = segment(b.corpus, b.params.granularity, half_width);
    if (b.index.num_sequences() != b.params.sequence_subject.size() ||
        b.index.segments_per_sequence() != b.params.segments_per_sequence)
        throw InputError("corpus layout does not match the model (sequences or segments differ)");
    const auto roster = build_roster(b.corpus);
    if (roster.subjects != b.params.subjects) throw InputError("corpus subjects do not match the model");
    b.encoded = encode_corpus(b.corpus, b.params.vocabulary());
    return b;
}

void print_eval_table(const std::vector<EvalReport>& reports) {
    std::printf("%-13s %7s %8s %14s %14s %14s\n", "task", "classes", "labeled", "binary_f1", "macro_f1", "micro_f1");
    for (const auto& r : reports) {
        auto cell = [](double m, double s) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f+-%.3f", m, s);
            return std::string(buf);
        };
        std::printf("%-13s %7d %8zu %14s %14s %14s\n", r.task.c_str(), r.classes, r.labeled,
                    r.classes == 2 ? cell(r.mean.binary, r.stddev.binary).c_str() : "-",
                    cell(r.mean.macro, r.stddev.macro).c_str(), cell(r.mean.micro, r.stddev.micro).c_str());
    }
}

int run(const std::vector<std::string>& args);

int dispatch(CLI::App& app, const std::vector<std::string>& args) {
    RunManifest manifest;
    manifest.args = args;
    manifest.started = utc_now();
    std::string manifest_path;
    std::function<void()> action;

    // ------------------------------------------------------------ synth
    SynthConfig sc;
    std::string synth_out, effects_out;
    std::array<std::vector<double>, 4> bands;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort with planted effects");
    synth->add_option("--out", synth_out, "Corpus JSON Lines output")->required();
    synth->add_option("--effects-out", effects_out, "Planted-effect manifest (default <out>.effects.json)");
    synth->add_option("--n-subjects", sc.n_subjects)->capture_default_str();
    synth->add_option("--labeled-fraction", sc.labeled_fraction)->capture_default_str();
    synth->add_option("--length", sc.length)->capture_default_str();
    synth->add_option("--v-max", sc.v_max)->capture_default_str();
    synth->add_option("--circadian-amplitude", sc.circadian_amplitude)->capture_default_str();
    synth->add_option("--circadian-peak-hour", sc.circadian_peak_hour)->capture_default_str();
    for (std::size_t t = 0; t < 4; ++t) {
        const std::string name(task_name(kTasks[t]));
        synth->add_option("--" + name + "-amplitude", sc.effects[t].amplitude, "Per-class delta")
            ->capture_default_str();
        synth->add_option("--" + name + "-band", bands[t], "Effect band start,end hours")->expected(2)->delimiter(',');
    }
    synth->add_option("--gain-min", sc.gain_min)->capture_default_str();
    synth->add_option("--gain-max", sc.gain_max)->capture_default_str();
    synth->add_option("--phase-hours", sc.phase_hours)->capture_default_str();
    synth->add_option("--weekend-days", sc.weekend_days)->capture_default_str();
    synth->add_option("--weekend-gain-min", sc.weekend_gain_min)->capture_default_str();
    synth->add_option("--weekend-gain-max", sc.weekend_gain_max)->capture_default_str();
    synth->add_option("--weekend-shift-hours", sc.weekend_shift_hours)->capture_default_str();
    synth->add_option("--effect-days", sc.effect_days, "Days of the week (0-6) carrying label effects")
        ->delimiter(',')
        ->capture_default_str();
    synth->add_option("--noise-scale", sc.noise_scale)->capture_default_str();
    synth->add_option("--noise-rate", sc.noise_rate)->capture_default_str();
    synth->add_option("--missing-rate", sc.missing_rate)->capture_default_str();
    synth->add_option("--seed", sc.seed)->capture_default_str();
    synth->add_option("--run-manifest", manifest_path, "Run manifest path (default <out>.run.json)");
    synth->callback([&] {
        action = [&] {
            for (std::size_t t = 0; t < 4; ++t)
                if (!bands[t].empty()) {
                    sc.effects[t].start_hour = bands[t][0];
                    sc.effects[t].end_hour = bands[t][1];
                }
            validate_synth_config(sc);
            if (effects_out.empty()) effects_out = synth_out + ".effects.json";
            const Corpus corpus = generate_cohort(sc);
            save_corpus(corpus, synth_out);
            write_text(effects_out, manifest_to_json(describe_planted_effects(sc)));
            manifest.command = "synth";
            manifest.config = synth_config_json(sc);
            manifest.seeds = {{"synth", sc.seed}};
            manifest.outputs = {{"corpus", synth_out}, {"effects", effects_out}};
            if (manifest_path.empty()) manifest_path = synth_out + ".run.json";
            std::printf("wrote %zu subjects x %zu samples to %s\n", corpus.size(), corpus.sequence_length(),
                        synth_out.c_str());
        };
    });

    // ------------------------------------------------------------ train
    TrainConfig tc;
    std::string train_corpus, train_out, report_out, granularity = "day";
    std::size_t window = 0;
    double eta = -1.0;
    bool no_ordinal = false, no_smoothing = false, no_adversarial = false, no_context = false;
    auto* train_cmd = app.add_subcommand("train", "Train segment embeddings");
    train_cmd->add_option("--corpus", train_corpus)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out", train_out, "Model file")->required();
    train_cmd->add_option("--report", report_out, "Training report JSON (default <out>.report.json)");
    train_cmd->add_option("--granularity", granularity, "sample, hour, day or week")->capture_default_str();
    train_cmd->add_option("--d", tc.d)->capture_default_str();
    train_cmd->add_option("--m-neg", tc.negatives)->capture_default_str();
    train_cmd->add_option("--window", window, "Symbols per positive draw (default by granularity)");
    train_cmd->add_option("--eta", eta, "Smoothing weight (default by granularity)");
    train_cmd->add_option("--beta", tc.beta)->capture_default_str();
    train_cmd->add_option("--lambda-max", tc.lambda_max)->capture_default_str();
    train_cmd->add_option("--disc-prob", tc.disc_prob)->capture_default_str();
    train_cmd->add_option("--epochs", tc.epochs)->capture_default_str();
    train_cmd->add_option("--lr", tc.lr)->capture_default_str();
    train_cmd->add_option("--min-lr", tc.min_lr)->capture_default_str();
    train_cmd->add_option("--tolerance", tc.tolerance)->capture_default_str();
    train_cmd->add_option("--patience", tc.patience)->capture_default_str();
    train_cmd->add_option("--half-width", tc.half_width)->capture_default_str();
    train_cmd->add_option("--noise-exponent", tc.noise_exponent)->capture_default_str();
    train_cmd->add_option("--ordinal-clip", tc.ordinal_clip, "Gradient-norm cap per ordinal update (0 disables)")
        ->capture_default_str();
    train_cmd->add_option("--seed", tc.seed)->capture_default_str();
    train_cmd->add_flag("--no-ordinal", no_ordinal);
    train_cmd->add_flag("--no-smoothing", no_smoothing);
    train_cmd->add_flag("--no-adversarial", no_adversarial);
    train_cmd->add_flag("--no-context", no_context);
    train_cmd->add_flag("--progress", tc.progress, "Per-epoch lines on stderr");
    train_cmd->add_option("--run-manifest", manifest_path, "Run manifest path (default <out>.run.json)");
    train_cmd->callback([&] {
        action = [&] {
            tc.granularity = parse_granularity(granularity);
            if (train_cmd->count("--window")) tc.window = window;
            if (train_cmd->count("--eta")) tc.eta = eta;
            tc.ordinal = !no_ordinal;
            tc.smoothing = !no_smoothing;
            tc.adversarial = !no_adversarial;
            tc.context = !no_context;
            auto warnings = resolve_config(tc);
            for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

            const Corpus corpus = load_corpus(train_corpus);
            const auto vocab = build_vocabulary(corpus);
            const auto index = segment(corpus, tc.granularity, tc.half_width);
            ModelParams params = init_model(corpus, vocab, index, tc.d, tc.seed, tc.ordinal);
            const TrainReport report = train(corpus, index, params, tc);
            save_model(params, train_out);
            if (report_out.empty()) report_out = train_out + ".report.json";
            write_text(report_out, report_to_json(report));

            manifest.command = "train";
            manifest.config = json::parse(config_to_json(tc));
            manifest.seeds = {{"train", tc.seed}};
            manifest.inputs = {{"corpus", train_corpus}};
            manifest.outputs = {{"model", train_out}, {"report", report_out}};
            if (manifest_path.empty()) manifest_path = train_out + ".run.json";
            std::printf("trained %s model: %zu segments (K=%zu), %zu symbols, %zu epochs\n",
                        std::string(granularity_name(tc.granularity)).c_str(), index.num_segments(),
                        index.segments_per_sequence(), vocab.size(), report.epochs.size());
            if (report.initial && report.final)
                std::printf("combined loss %.6f -> %.6f\n", report.initial->combined, report.final->combined);
        };
    });

    // ------------------------------------------------------------ export
    std::string exp_model, exp_corpus, exp_out, pooling = "concat";
    auto* export_cmd = app.add_subcommand("export", "Write subject representations as CSV");
    export_cmd->add_option("--model", exp_model)->required()->check(CLI::ExistingFile);
    export_cmd->add_option("--corpus", exp_corpus)->required()->check(CLI::ExistingFile);
    export_cmd->add_option("--out", exp_out, "CSV output")->required();
    export_cmd->add_option("--pooling", pooling, "concat or average")
        ->check(CLI::IsMember({"concat", "average"}))
        ->capture_default_str();
    export_cmd->add_option("--run-manifest", manifest_path, "Run manifest path (default <out>.run.json)");
    export_cmd->callback([&] {
        action = [&] {
            const Bound b = bind_model(exp_model, exp_corpus);
            const auto mode = pooling == "average" ? SubjectPooling::average : SubjectPooling::concatenate;
            const auto table = feature_table(b.corpus, representation_matrix(b.params, b.index, b.encoded, mode));
            std::ofstream out(exp_out, std::ios::binary);
            if (!out) throw InputError("cannot write file: " + exp_out);
            write_feature_csv(table, out);
            manifest.command = "export";
            manifest.config = {{"pooling", pooling}};
            manifest.inputs = {{"model", exp_model}, {"corpus", exp_corpus}};
            manifest.outputs = {{"features", exp_out}};
            if (manifest_path.empty()) manifest_path = exp_out + ".run.json";
            std::printf("wrote %zu rows x %zu dims to %s\n", table.subjects.size(), table.features.cols(),
                        exp_out.c_str());
        };
    });

    // ------------------------------------------------------------ eval
    EvalProtocol protocol;
    std::string ev_model, ev_corpus, ev_features, ev_out, ev_csv, ev_variant = "model";
    std::vector<std::string> ev_tasks;
    std::size_t ev_threads = 0;
    auto* eval_cmd = app.add_subcommand("eval", "Repeated-split logistic regression per task");
    eval_cmd->add_option("--model", ev_model)->check(CLI::ExistingFile);
    eval_cmd->add_option("--corpus", ev_corpus)->check(CLI::ExistingFile);
    eval_cmd->add_option("--features", ev_features, "Feature CSV instead of --model/--corpus")
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--task", ev_tasks, "apnea, diabetes, hypertension or insomnia (default all)")
        ->check(CLI::IsMember({"apnea", "diabetes", "hypertension", "insomnia"}));
    eval_cmd->add_option("--seed", protocol.seed)->capture_default_str();
    eval_cmd->add_option("--splits", protocol.splits)->capture_default_str();
    eval_cmd->add_option("--threads", ev_threads, "Concurrent splits (default $ACTEMBED_THREADS or 1)");
    eval_cmd->add_option("--variant", ev_variant, "Label for the CSV variant column")->capture_default_str();
    eval_cmd->add_option("--out", ev_out, "Eval report JSON")->required();
    eval_cmd->add_option("--csv", ev_csv, "Per-split CSV (default <out>.csv)");
    eval_cmd->add_option("--run-manifest", manifest_path, "Run manifest path (default <out>.run.json)");
    eval_cmd->callback([&] {
        action = [&] {
            FeatureTable table;
            if (!ev_features.empty()) {
                if (!ev_model.empty() || !ev_corpus.empty())
                    throw ConfigError("--features excludes --model and --corpus");
                std::ifstream in(ev_features, std::ios::binary);
                table = read_feature_csv(in);
                manifest.inputs = {{"features", ev_features}};
            } else {
                if (ev_model.empty() || ev_corpus.empty())
                    throw ConfigError("eval needs --features or both --model and --corpus");
                const Bound b = bind_model(ev_model, ev_corpus);
                table = feature_table(b.corpus, representation_matrix(b.params, b.index, b.encoded));
                manifest.inputs = {{"model", ev_model}, {"corpus", ev_corpus}};
            }
            protocol.threads = ev_threads > 0 ? ev_threads : default_threads();
            std::vector<Task> tasks;
            if (ev_tasks.empty()) tasks.assign(kTasks.begin(), kTasks.end());
            for (const auto& t : ev_tasks) tasks.push_back(parse_task(t));
            std::vector<EvalReport> reports;
            for (Task t : tasks) reports.push_back(evaluate_task(table.features, table.task_labels(t), t, protocol));

            write_text(ev_out, eval_report_json(reports, protocol.seed));
            if (ev_csv.empty()) ev_csv = ev_out + ".csv";
            std::ofstream csv(ev_csv, std::ios::binary);
            if (!csv) throw InputError("cannot write file: " + ev_csv);
            write_eval_csv(reports, ev_variant, csv);
            print_eval_table(reports);

            manifest.command = "eval";
            json task_names = json::array();
            for (Task t : tasks) task_names.push_back(std::string(task_name(t)));
            manifest.config = {{"tasks", task_names},
                               {"splits", protocol.splits},
                               {"fractions", {protocol.train_fraction, protocol.val_fraction, protocol.test_fraction}},
                               {"l2_grid", protocol.l2_grid},
                               {"threads", protocol.threads},
                               {"variant", ev_variant}};
            manifest.seeds = {{"eval", protocol.seed}};
            manifest.outputs = {{"report", ev_out}, {"csv", ev_csv}};
            if (manifest_path.empty()) manifest_path = ev_out + ".run.json";
        };
    });

    // ------------------------------------------------------------ probe
    ProbeOptions po;
    std::string pr_model, pr_corpus, pr_out;
    auto* probe_cmd = app.add_subcommand("probe", "Subject-identification probe on frozen segment embeddings");
    probe_cmd->add_option("--model", pr_model)->required()->check(CLI::ExistingFile);
    probe_cmd->add_option("--corpus", pr_corpus)->required()->check(CLI::ExistingFile);
    probe_cmd->add_option("--heldout", po.heldout_fraction, "Held-out fraction per subject")->capture_default_str();
    probe_cmd->add_option("--seed", po.seed)->capture_default_str();
    probe_cmd->add_option("--out", pr_out, "Probe report JSON")->required();
    probe_cmd->add_option("--run-manifest", manifest_path, "Run manifest path (default <out>.run.json)");
    probe_cmd->callback([&] {
        action = [&] {
            const Bound b = bind_model(pr_model, pr_corpus);
            const ProbeReport report = subject_probe(b.params, b.index, b.encoded, po);
            write_text(pr_out, probe_report_json(report));
            std::printf("probe accuracy %.4f (chance %.4f, %zu test segments)\n", report.accuracy, report.chance,
                        report.test_segments);
            manifest.command = "probe";
            manifest.config = {{"heldout_fraction", po.heldout_fraction}, {"l2", po.l2}, {"max_iter", po.max_iter}};
            manifest.seeds = {{"probe", po.seed}};
            manifest.inputs = {{"model", pr_model}, {"corpus", pr_corpus}};
            manifest.outputs = {{"report", pr_out}};
            if (manifest_path.empty()) manifest_path = pr_out + ".run.json";
        };
    });

    // ------------------------------------------------------------ replay
    std::string replay_path;
    auto* replay_cmd = app.add_subcommand("replay", "Re-run a command from its run manifest");
    replay_cmd->add_option("manifest", replay_path)->required()->check(CLI::ExistingFile);

    app.require_subcommand(1);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);

    if (*replay_cmd) {
        const auto j = json::parse(read_text(replay_path), nullptr, false);
        if (!j.is_object() || !j.contains("args") || !j["args"].is_array())
            throw InputError("not a run manifest: " + replay_path);
        const auto replay_args = j["args"].get<std::vector<std::string>>();
        if (!replay_args.empty() && replay_args.front() == "replay") throw InputError("manifest records a replay");
        return run(replay_args);
    }

    const auto t0 = std::chrono::steady_clock::now();
    action();
    manifest.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(manifest_path, manifest.to_json());
    return 0;
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"Segment-level activity embeddings for actigraphy"};
    app.set_version_flag("--version", kVersion);
    try {
        return dispatch(app, args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 3;
    } catch (const InputError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args);
}
