#include "hdm/cli.hpp"

#include "hdm/checkpoint.hpp"
#include "hdm/config.hpp"
#include "hdm/csv.hpp"
#include "hdm/oracle.hpp"
#include "hdm/sampler.hpp"
#include "hdm/transfer.hpp"
#include "hdm/verify.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>

namespace hdm {
namespace {

namespace fs = std::filesystem;

struct CommonOptions {
    std::string config_path;
    std::string output;
    int jobs = 1;
    std::optional<std::uint64_t> seed;
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    if (!fs::exists(path)) throw ConfigError("config file '" + path + "' does not exist");
    try {
        json j = json::parse(read_file(path));
        if (!j.is_object()) throw ConfigError("config file '" + path + "': top level must be an object");
        return j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "': " + e.what());
    }
}

fs::path output_dir(const CommonOptions& o, const std::string& subcommand) {
    fs::path dir;
    if (!o.output.empty()) {
        dir = o.output;
    } else {
        const char* root = std::getenv(kOutputRootEnv);
        dir = fs::path(root && *root ? root : "runs") / subcommand;
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory '" + dir.string() + "'");
    return dir;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

std::uint64_t resolve_seed(StrictObject& top, const CommonOptions& o) {
    const auto from_config = top.get<std::uint64_t>("seed", 0);
    return o.seed ? *o.seed : from_config;
}

// ---- pretrain -------------------------------------------------------------

int cmd_pretrain(const CommonOptions& o, std::ostream& out) {
    if (o.config_path.empty()) throw ConfigError("pretrain: a config file is required");
    const json config = load_config(o.config_path);
    StrictObject top(config, "pretrain");
    const ScheduleParams sched_params = top.has("schedule") ? schedule_from_json(top.raw("schedule")) : ScheduleParams{};
    const DatasetConfig data_cfg = top.has("dataset") ? dataset_from_json(top.raw("dataset")) : DatasetConfig{};
    const ModelConfig model_cfg = top.has("model") ? model_from_json(top.raw("model")) : ModelConfig{};
    TrainConfig train_cfg = top.has("train") ? train_from_json(top.raw("train")) : TrainConfig{};
    PretrainRegime regime;
    try {
        regime.kind = regime_from_string(top.get<std::string>("regime", "hybrid"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("pretrain: ") + e.what());
    }
    regime.lambda = top.get("lambda", regime.lambda);
    const bool has_seed = top.has("seed") || o.seed;
    const std::uint64_t seed = resolve_seed(top, o);
    top.finish();
    if (regime.lambda < 0.0) throw ConfigError("pretrain: lambda must be >= 0");

    ModelConfig model = model_cfg;
    if (has_seed) {
        model.init_seed = seed;
        train_cfg.seed = seed;
    }
    const Schedule schedule(sched_params);
    const JointDataset data = build_dataset(data_cfg);
    MlpArchitecture arch;
    arch.d_x = data.d_x();
    arch.d_y = data.d_y();
    arch.hidden = model.hidden;
    arch.time_frequencies = model.time_frequencies;

    const fs::path dir = output_dir(o, "pretrain");
    json resolved = {{"schedule", to_json(schedule.params())},
                     {"dataset", to_json(data_cfg)},
                     {"model", to_json(model)},
                     {"train", to_json(train_cfg)},
                     {"regime", to_string(regime.kind)},
                     {"lambda", regime.lambda}};
    write_json(dir / "resolved_config.json", resolved);

    out << "pretrain: " << data.name() << " (" << data.size() << " samples), regime " << to_string(regime.kind)
        << ", " << train_cfg.iterations << " iterations\n";
    const PretrainOutput result = pretrain_regime(regime, arch, model.init_seed, data, schedule, train_cfg);

    CsvTable loss({"iteration", "loss"});
    CsvTable validation({"epoch", "iteration", "validation_loss"});
    json info = {{"schedule", to_json(schedule.params())},
                 {"dataset", to_json(data_cfg)},
                 {"labels", {{"K", data.K()}, {"P", data.P()}}},
                 {"regime", to_string(regime.kind)},
                 {"lambda", regime.lambda},
                 {"seed", train_cfg.seed}};
    if (result.training) {
        const TrainResult& tr = *result.training;
        for (std::size_t i = 0; i < tr.train_loss.size(); ++i)
            loss.add_row({std::to_string(i), format_number(tr.train_loss[i])});
        validation.add_row({"0", "0", format_number(tr.initial_validation_loss)});
        for (const auto& e : tr.epochs)
            validation.add_row({std::to_string(e.epoch), std::to_string(e.iteration), format_number(e.validation_loss)});
        info["training"] = {{"iterations_run", tr.iterations_run},
                            {"best_epoch", tr.best_epoch},
                            {"best_validation_loss", tr.best_validation_loss},
                            {"initial_validation_loss", tr.initial_validation_loss},
                            {"stopped_early", tr.stopped_early}};
        out << "pretrain: best validation loss " << format_number(tr.best_validation_loss) << " at epoch "
            << tr.best_epoch << " after " << tr.iterations_run << " iterations\n";
    }
    write_file_atomic(dir / "loss_curve.csv", loss.text());
    write_file_atomic(dir / "validation.csv", validation.text());
    save_checkpoint(dir / "model.json", result.model, info);
    out << "pretrain: wrote " << (dir / "model.json").string() << "\n";
    return kExitOk;
}

// ---- sample ---------------------------------------------------------------

struct SampleOptions {
    bool oracle = false;
    std::string checkpoint;
    std::optional<long> n;
    std::string y_init;
    long trajectories = 0;
};

std::vector<std::string> vector_header(const std::string& prefix, int n) {
    std::vector<std::string> h;
    for (int i = 0; i < n; ++i) h.push_back(prefix + std::to_string(i));
    return h;
}

int cmd_sample(const CommonOptions& o, const SampleOptions& so, std::ostream& out, std::ostream& err) {
    const json config = load_config(o.config_path);
    StrictObject top(config, "sample");
    std::optional<ScheduleParams> sched_params;
    if (top.has("schedule")) sched_params = schedule_from_json(top.raw("schedule"));
    const DatasetConfig data_cfg = top.has("dataset") ? dataset_from_json(top.raw("dataset")) : DatasetConfig{};
    SamplerConfig cfg = top.has("sampler") ? sampler_from_json(top.raw("sampler")) : SamplerConfig{};
    long n = top.get<long>("n", 2000);
    bool oracle = top.get("oracle", false);
    std::string checkpoint = top.get<std::string>("checkpoint", "");
    const bool has_seed = top.has("seed") || o.seed;
    const std::uint64_t seed = resolve_seed(top, o);
    top.finish();

    if (so.n) n = *so.n;
    if (so.oracle) oracle = true;
    if (!so.checkpoint.empty()) checkpoint = so.checkpoint;
    if (!so.y_init.empty()) {
        try {
            cfg.y_init = YInit::parse(so.y_init);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("--y-init: ") + e.what());
        }
    }
    if (has_seed) cfg.seed = seed;
    cfg.jobs = o.jobs;
    if (n < 0) throw ConfigError("sample: n must be >= 0");
    if (so.trajectories < 0) throw ConfigError("sample: --trajectories must be >= 0");
    if (oracle == !checkpoint.empty()) throw ConfigError("sample: give exactly one of --oracle or a checkpoint");
    if (so.trajectories > 0) cfg.record_trajectories = true;

    std::unique_ptr<Denoiser> denoiser;
    std::optional<Schedule> schedule;
    int K = 0;
    JointDataset data;
    if (oracle) {
        schedule.emplace(sched_params.value_or(ScheduleParams{}));
        data = build_dataset(data_cfg);
        K = data.K();
        denoiser = std::make_unique<OracleDenoiser>(data, *schedule);
    } else {
        Checkpoint ck = load_checkpoint(checkpoint);
        if (!sched_params && ck.manifest.contains("schedule")) sched_params = schedule_from_json(ck.manifest["schedule"]);
        schedule.emplace(sched_params.value_or(ScheduleParams{}));
        if (ck.manifest.contains("labels")) {
            K = ck.manifest["labels"].value("K", 0);
        } else {
            K = build_dataset(data_cfg).K();
        }
        if (K < 1 || ck.model.d_y() % K != 0)
            throw ConfigError("sample: checkpoint mask width is not a multiple of K = " + std::to_string(K));
        denoiser = std::make_unique<MlpDenoiser>(std::move(ck.model));
    }
    const int d_x = denoiser->d_x();
    const int d_y = denoiser->d_y();
    const int P = d_y / K;

    const fs::path dir = output_dir(o, "sample");
    json resolved = {{"schedule", to_json(schedule->params())},
                     {"sampler", to_json(cfg)},
                     {"n", n},
                     {"oracle", oracle},
                     {"checkpoint", checkpoint},
                     {"K", K}};
    if (oracle) resolved["dataset"] = to_json(data_cfg);
    write_json(dir / "resolved_config.json", resolved);

    out << "sample: " << n << " trajectories, " << to_string(cfg.method) << ", " << cfg.steps << " steps\n";
    const SampleSet set = sample_joint(*denoiser, *schedule, cfg, static_cast<std::size_t>(n));

    std::vector<std::string> header = vector_header("x0_", d_x);
    for (auto& h : vector_header("y0_", d_y)) header.push_back(std::move(h));
    for (auto& h : vector_header("class_", P)) header.push_back(std::move(h));
    CsvTable samples(std::move(header));
    std::vector<std::string> row;
    for (const auto& r : set.results) {
        if (!r.ok) continue;
        row.clear();
        for (int i = 0; i < d_x; ++i) row.push_back(format_number(r.x0[i]));
        for (int i = 0; i < d_y; ++i) row.push_back(format_number(r.y0[i]));
        for (int c : decode_classes(r.y0, K)) row.push_back(std::to_string(c));
        samples.add_row(row);
    }
    write_file_atomic(dir / "samples.csv", samples.text());

    if (so.trajectories > 0) {
        std::vector<std::string> th = {"trajectory", "step", "t"};
        for (auto& h : vector_header("x_", d_x)) th.push_back(std::move(h));
        for (auto& h : vector_header("y_", d_y)) th.push_back(std::move(h));
        CsvTable traj(std::move(th));
        const auto count = std::min<std::size_t>(static_cast<std::size_t>(so.trajectories), set.results.size());
        for (std::size_t i = 0; i < count; ++i) {
            const auto& tr = set.results[i].trajectory;
            if (!tr) continue;
            for (std::size_t k = 0; k < tr->times.size(); ++k) {
                row = {std::to_string(i), std::to_string(k), format_number(tr->times[k])};
                for (Eigen::Index j = 0; j < tr->states[k].size(); ++j) row.push_back(format_number(tr->states[k][j]));
                traj.add_row(row);
            }
        }
        write_file_atomic(dir / "trajectories.csv", traj.text());
    }

    const std::size_t aborted = set.aborted();
    out << "sample: wrote " << samples.rows() << " rows to " << (dir / "samples.csv").string();
    if (aborted) out << " (" << aborted << " aborted)";
    out << "\n";
    if (n > 0 && static_cast<double>(aborted) > 0.01 * static_cast<double>(n)) {
        err << "sample: " << aborted << " of " << n << " trajectories aborted\n";
        return kExitAborted;
    }
    return kExitOk;
}

// ---- verify ---------------------------------------------------------------

int cmd_verify(const CommonOptions& o, const std::string& checkpoint, std::ostream& out) {
    json config = load_config(o.config_path);
    if (o.seed) config["seed"] = *o.seed;
    if (!checkpoint.empty()) config["checkpoint"] = checkpoint;
    const fs::path dir = output_dir(o, "verify");
    write_json(dir / "resolved_config.json", config);
    const VerificationReport report = run_verification(config, o.jobs);
    write_json(dir / "verify_report.json", report.to_json());
    for (const auto& c : report.checks)
        out << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << format_number(c.statistic) << " (threshold "
            << format_number(c.threshold) << ")\n";
    out << "verify: " << report.checks.size() << " checks, " << (report.all_pass() ? "all passed" : "failures")
        << "; wrote " << (dir / "verify_report.json").string() << "\n";
    return report.all_pass() ? kExitOk : kExitCheckFailed;
}

// ---- finetune -------------------------------------------------------------

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream s(text);
    std::string item;
    while (std::getline(s, item, ',')) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            seeds.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("--seeds: '" + item + "' is not a non-negative integer");
        }
    }
    if (seeds.empty()) throw ConfigError("--seeds: empty list");
    return seeds;
}

int cmd_finetune(const CommonOptions& o, const std::string& seeds, std::ostream& out) {
    json config = load_config(o.config_path);
    std::map<RegimeKind, MlpDenoiser> pretrained;
    json checkpoints = json::object();
    if (config.contains("checkpoints")) {
        checkpoints = config["checkpoints"];
        config.erase("checkpoints");
        if (!checkpoints.is_object()) throw ConfigError("transfer.checkpoints: expected an object");
    }
    if (!seeds.empty()) config["seeds"] = parse_seed_list(seeds);
    if (o.seed) config["partition_seed"] = *o.seed;
    ComparisonConfig cfg = comparison_from_json(config);
    cfg.jobs = o.jobs;
    for (const auto& [name, path] : checkpoints.items()) {
        RegimeKind kind;
        try {
            kind = regime_from_string(name);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("transfer.checkpoints: ") + e.what());
        }
        if (!path.is_string()) throw ConfigError("transfer.checkpoints." + name + ": expected a path");
        pretrained.insert_or_assign(kind, load_checkpoint(path.get<std::string>()).model);
    }

    const fs::path dir = output_dir(o, "finetune");
    json resolved = to_json(cfg);
    if (!checkpoints.empty()) resolved["checkpoints"] = checkpoints;
    write_json(dir / "resolved_config.json", resolved);

    const ExperimentReport report = run_comparison(cfg, std::move(pretrained), [&](const std::string& line) {
        out << "finetune: " << line << "\n" << std::flush;
    });
    write_file_atomic(dir / "report.csv", report.csv().text());
    write_json(dir / "report.json", report.to_json());
    for (const auto& s : report.summary())
        out << "finetune: " << to_string(s.regime) << "/" << to_string(s.method) << " budget " << s.budget
            << ": mean " << format_number(s.mean) << " std " << format_number(s.std) << " (n=" << s.n
            << (s.failed ? ", failed=" + std::to_string(s.failed) : "") << ")\n";
    out << "finetune: wrote " << (dir / "report.csv").string() << "\n";
    return kExitOk;
}

// ---- report ---------------------------------------------------------------

std::string number_or_blank(const json& v) { return v.is_number() ? format_number(v.get<double>()) : ""; }

int cmd_report(const CommonOptions& o, const std::string& input, std::ostream& out) {
    const json doc = load_config(input);
    const std::string format = doc.value("format", "");
    const fs::path dir = output_dir(o, "report");
    try {
        if (format == "hdm-experiment-report") {
            CsvTable t({"regime", "method", "budget", "n", "failed", "mean", "std"});
            for (const auto& c : doc.at("cells"))
                t.add_row({c.at("regime").get<std::string>(), c.at("method").get<std::string>(),
                           std::to_string(c.at("budget").get<int>()), std::to_string(c.at("n").get<int>()),
                           std::to_string(c.at("failed").get<int>()), number_or_blank(c.at("mean")),
                           number_or_blank(c.at("std"))});
            write_file_atomic(dir / "summary.csv", t.text());
            out << "report: " << t.rows() << " cells to " << (dir / "summary.csv").string() << "\n";
        } else if (format == "hdm-verification") {
            CsvTable t({"name", "statistic", "threshold", "pass"});
            for (const auto& c : doc.at("checks"))
                t.add_row({c.at("name").get<std::string>(), number_or_blank(c.at("statistic")),
                           number_or_blank(c.at("threshold")), c.at("pass").get<bool>() ? "true" : "false"});
            write_file_atomic(dir / "checks.csv", t.text());
            out << "report: " << t.rows() << " checks to " << (dir / "checks.csv").string() << "\n";
        } else {
            throw ConfigError("report: '" + input + "' is neither an experiment nor a verification report");
        }
    } catch (const json::exception& e) {
        throw ConfigError("report: '" + input + "': " + e.what());
    }
    return kExitOk;
}

void add_common(CLI::App* sub, CommonOptions& o, bool config_required) {
    auto* opt = sub->add_option("config", o.config_path, "JSON config file");
    if (config_required) opt->required();
    sub->add_option("-o,--output", o.output, "Output directory (default $HDM_OUTPUT_ROOT/<subcommand>)");
    sub->add_option("-j,--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "Master seed override");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hybrid diffusion models lab"};
    app.require_subcommand(1);
    CommonOptions common;
    SampleOptions sample;
    std::string verify_checkpoint;
    std::string seeds;
    std::string report_input;

    auto* pretrain = app.add_subcommand("pretrain", "Train a denoiser and write a checkpoint");
    add_common(pretrain, common, true);
    auto* sample_cmd = app.add_subcommand("sample", "Draw joint (x, y) samples");
    add_common(sample_cmd, common, false);
    sample_cmd->add_flag("--oracle", sample.oracle, "Use the empirical posterior-mean denoiser");
    sample_cmd->add_option("--checkpoint", sample.checkpoint, "Checkpoint manifest");
    sample_cmd->add_option("-n,--n", sample.n, "Number of trajectories");
    sample_cmd->add_option("--y-init", sample.y_init, "zeros | constant:<c> | random");
    sample_cmd->add_option("--trajectories", sample.trajectories, "Write the first N full trajectories");
    auto* verify = app.add_subcommand("verify", "Run the verification suite");
    add_common(verify, common, false);
    verify->add_option("--checkpoint", verify_checkpoint, "Learned denoiser for the trajectory checks");
    auto* finetune = app.add_subcommand("finetune", "Run the transfer comparison grid");
    finetune->alias("transfer");
    add_common(finetune, common, false);
    finetune->add_option("--seeds", seeds, "Comma-separated fine-tuning seeds");
    auto* report = app.add_subcommand("report", "Summarize a report JSON as CSV");
    report->add_option("input", report_input, "Report JSON")->required();
    report->add_option("-o,--output", common.output, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (pretrain->parsed()) return cmd_pretrain(common, out);
        if (sample_cmd->parsed()) return cmd_sample(common, sample, out, err);
        if (verify->parsed()) return cmd_verify(common, verify_checkpoint, out);
        if (finetune->parsed()) return cmd_finetune(common, seeds, out);
        if (report->parsed()) return cmd_report(common, report_input, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DivergenceError& e) {
        err << "error: training diverged: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitConfig;
}

}  // namespace hdm
