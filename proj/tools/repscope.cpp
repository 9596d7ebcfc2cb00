// repscope: command-line front end for layer-wise representation analysis.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 input/analysis failure,
// 3 missing upstream outputs.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "repscope/csv.hpp"
#include "repscope/manifest.hpp"
#include "repscope/pipeline.hpp"
#include "repscope/synthetic.hpp"

namespace fs = std::filesystem;
using namespace repscope;

namespace {

struct CommonOptions {
    std::string manifest;
    std::string experimental;
    std::string controls_map;
    std::string out = "repscope_out";
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    std::string tasks = "all";
    double variance_threshold = 0.99;
    double perplexity = 30.0;
    std::size_t tsne_iterations = 1000;
    std::size_t tsne_cap = 2000;
    std::vector<std::size_t> tsne_layers;
    std::string covariates = "fk,cl,data_size";
    std::string statistic = "median";
    std::string analyses = "cka,variance,readability,correlate,segment,tsne";
};

void log_line(const std::string& msg) {
    std::cerr << "[repscope] " << msg << '\n';
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) {
        return requested;
    }
    if (const char* env = std::getenv("REPSCOPE_THREADS"); env != nullptr && *env != '\0') {
        try {
            const auto n = std::stoul(env);
            if (n > 0) {
                return n;
            }
        } catch (const std::exception&) {
        }
        log_line(std::string("ignoring invalid REPSCOPE_THREADS='") + env + "'");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

RunConfig make_config(const CommonOptions& o, bool need_experimental, bool need_controls) {
    RunConfig cfg;
    cfg.manifest = o.manifest;
    cfg.experimental = o.experimental;
    cfg.out = o.out;
    cfg.seed = o.seed;
    cfg.threads = resolve_threads(o.threads);
    cfg.task_filter = o.tasks;
    cfg.variance_threshold = o.variance_threshold;
    cfg.perplexity = o.perplexity;
    cfg.tsne_iterations = o.tsne_iterations;
    cfg.tsne_cap = o.tsne_cap;
    cfg.tsne_layers = o.tsne_layers;
    cfg.covariates = split_list(o.covariates);
    cfg.statistic = o.statistic == "mean" ? LayerStatistic::Mean : LayerStatistic::Median;
    const auto analyses = split_list(o.analyses);
    cfg.analyses = {analyses.begin(), analyses.end()};

    if (need_experimental && cfg.experimental.empty()) {
        fail(ErrorKind::InvalidInput, "--experimental is required");
    }
    if (need_controls) {
        if (o.controls_map.empty()) {
            fail(ErrorKind::InvalidInput, "--controls-map is required");
        }
        try {
            cfg.controls = nlohmann::json::parse(read_file(o.controls_map)).get<std::map<std::string, std::string>>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::InvalidInput, "--controls-map " + o.controls_map + ": " + e.what());
        }
    }
    std::error_code ec;
    fs::create_directories(cfg.out, ec);
    if (ec || !fs::is_directory(cfg.out)) {
        fail(ErrorKind::IoError, "output directory " + cfg.out.string() + " is not writable");
    }
    return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool analysis_options) {
    cmd->add_option("--manifest", o.manifest, "Manifest JSON file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--experimental", o.experimental, "Experimental model id");
    cmd->add_option("--controls-map", o.controls_map, "JSON object mapping task id to control model id");
    cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
    cmd->add_option("--seed", o.seed, "Top-level random seed")->capture_default_str();
    cmd->add_option("--threads", o.threads, "Worker threads (default: $REPSCOPE_THREADS or all cores)");
    cmd->add_option("--tasks", o.tasks, "Task subset: all, seen or unseen")
        ->check(CLI::IsMember({"all", "seen", "unseen"}))
        ->capture_default_str();
    if (!analysis_options) {
        return;
    }
    cmd->add_option("--variance-threshold", o.variance_threshold, "Explained-variance target")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd->add_option("--perplexity", o.perplexity, "t-SNE perplexity")->capture_default_str();
    cmd->add_option("--tsne-iterations", o.tsne_iterations, "t-SNE iterations")->capture_default_str();
    cmd->add_option("--tsne-cap", o.tsne_cap, "Max points per t-SNE layer (stratified subsample)")->capture_default_str();
    cmd->add_option("--tsne-layers", o.tsne_layers, "Layers to embed (default: all)")->delimiter(',');
    cmd->add_option("--covariates", o.covariates, "Comma list from fk, cl, data_size")->capture_default_str();
    cmd->add_option("--statistic", o.statistic, "Per-layer reduction for segmentation")
        ->check(CLI::IsMember({"median", "mean"}))
        ->capture_default_str();
}

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const Error& e) {
        log_line(std::string("error: ") + e.what());
        if (e.kind() == ErrorKind::MissingUpstream) {
            return 3;
        }
        return 2;
    } catch (const std::exception& e) {
        log_line(std::string("error: ") + e.what());
        return 2;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"repscope: centered kernel alignment and companion analyses of layer-wise activations"};
    app.require_subcommand(1);

    CommonOptions o;
    struct Command {
        CLI::App* app;
        bool experimental;
        bool controls;
        void (*step)(const Manifest&, const RunConfig&);
    };
    std::vector<Command> commands;
    auto add = [&](const char* name, const char* help, bool experimental, bool controls,
                   void (*step)(const Manifest&, const RunConfig&)) {
        CLI::App* cmd = app.add_subcommand(name, help);
        add_common(cmd, o, true);
        commands.push_back({cmd, experimental, controls, step});
        return cmd;
    };
    add("cka", "CKA between the experimental model and each task's control, per layer", true, true, cmd_cka);
    add("variance", "Principal components needed to reach the variance threshold", true, false, cmd_variance);
    add("readability", "Mean Flesch-Kincaid and Coleman-Liau scores per task", false, false, cmd_readability);
    add("correlate", "Pearson correlation of CKA against covariates, per layer", false, false, cmd_correlate);
    add("segment", "Layer box-plot profiles and shared/transition/refinement segmentation", false, false, cmd_segment);
    add("tsne", "Joint t-SNE of all tasks per layer", true, false, cmd_tsne);
    add("report", "Collect outputs into report.json", false, false, cmd_report);
    CLI::App* run = add("run", "Run the selected analyses then write the report", true, true, nullptr);
    run->add_option("--analyses", o.analyses, "Comma list of analyses")->capture_default_str();

    std::string validate_manifest_path;
    CLI::App* validate = app.add_subcommand("validate", "Check that every tensor the manifest declares is readable");
    validate->add_option("--manifest", validate_manifest_path, "Manifest JSON file")->required()->check(CLI::ExistingFile);

    SyntheticSpec spec;
    std::string synth_out;
    CLI::App* synth = app.add_subcommand("synth", "Write a synthetic planted-regime dataset");
    synth->add_option("--out", synth_out, "Dataset directory")->required();
    synth->add_option("--tasks", spec.tasks, "Number of tasks")->capture_default_str();
    synth->add_option("--layers", spec.layers, "Number of layers")->capture_default_str();
    synth->add_option("--dims", spec.dims, "Representation width")->capture_default_str();
    synth->add_option("--n-min", spec.n_min, "Minimum examples per task")->capture_default_str();
    synth->add_option("--n-max", spec.n_max, "Maximum examples per task")->capture_default_str();
    synth->add_option("--b1", spec.b1, "Last shared layer")->capture_default_str();
    synth->add_option("--b2", spec.b2, "Last transition layer")->capture_default_str();
    synth->add_option("--unseen-every", spec.unseen_every, "Mark every k-th task unseen (0: none)")->capture_default_str();
    synth->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (validate->parsed()) {
        return run_guarded([&] {
            const Manifest m = load_manifest(validate_manifest_path);
            validate_manifest(m);
            std::cout << "manifest OK: " << m.models.size() << " models, " << m.tasks.size() << " tasks, " << m.layers
                      << " layers\n";
        });
    }
    if (synth->parsed()) {
        return run_guarded([&] {
            if (spec.n_min < 4 || spec.n_max < spec.n_min || spec.layers < 5 || spec.tasks < 1 || spec.dims < 1 ||
                !(spec.b1 >= 1 && spec.b1 < spec.b2 && spec.b2 < spec.layers)) {
                fail(ErrorKind::InvalidInput, "inconsistent synthetic dataset parameters");
            }
            const SyntheticDataset ds = write_synthetic(synth_out, spec);
            std::cout << ds.manifest_path.string() << '\n';
        });
    }

    for (const auto& c : commands) {
        if (!c.app->parsed()) {
            continue;
        }
        RunConfig cfg;
        try {
            cfg = make_config(o, c.experimental, c.controls);
        } catch (const Error& e) {
            log_line(std::string("error: ") + e.what());
            return 1;
        }
        return run_guarded([&] {
            const Manifest m = load_manifest(cfg.manifest);
            log_line(c.app->get_name() + ": " + std::to_string(m.tasks.size()) + " tasks, " +
                     std::to_string(m.layers) + " layers, " + std::to_string(cfg.threads) + " threads");
            if (c.step != nullptr) {
                c.step(m, cfg);
            } else {
                cmd_run(m, cfg, [](const std::string& step) { log_line("running " + step); });
            }
            log_line("wrote outputs to " + cfg.out.string());
        });
    }
    return 1;
}
