#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "json.hpp"
#include "repscope/pipeline.hpp"
#include "repscope/synthetic.hpp"
#include "test_util.hpp"

using namespace repscope;
using repscope::testing::TempDir;
namespace fs = std::filesystem;

namespace {

SyntheticSpec small_spec() {
    SyntheticSpec s;
    s.tasks = 8;
    s.layers = 7;
    s.clusters = 2;
    s.n_min = 12;
    s.n_max = 16;
    s.dims = 6;
    s.b1 = 2;
    s.b2 = 4;
    s.unseen_every = 3;
    return s;
}

RunConfig config_for(const SyntheticDataset& ds, const fs::path& out, std::size_t threads = 1) {
    RunConfig cfg;
    cfg.manifest = ds.manifest_path;
    cfg.experimental = ds.experimental;
    cfg.controls = ds.controls;
    cfg.out = out;
    cfg.seed = 11;
    cfg.threads = threads;
    cfg.perplexity = 10.0;
    cfg.tsne_iterations = 300;
    cfg.analyses = {"cka", "variance", "readability", "correlate", "segment", "tsne"};
    cfg.covariates = {"fk", "cl", "data_size"};
    fs::create_directories(out);
    return cfg;
}

struct CliResult {
    int code = -1;
    std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
    const fs::path err = scratch / "stderr.txt";
    const std::string cmd = std::string("\"") + REPSCOPE_CLI_PATH + "\" " + args + " 2> \"" + err.string() + "\" > /dev/null";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = read_file(err);
    return r;
}

} // namespace

TEST(Pipeline, IdenticalControlsScoreOne) {
    TempDir dir;
    SyntheticSpec spec = small_spec();
    spec.identical_controls = true;
    const SyntheticDataset ds = write_synthetic(dir.path() / "data", spec);
    const auto rows = compute_cka_table(ds.manifest, config_for(ds, dir.path() / "out"));
    ASSERT_EQ(rows.size(), spec.tasks * spec.layers);
    for (const auto& r : rows) {
        EXPECT_NEAR(r.cka, 1.0, 1e-12) << r.task << " layer " << r.layer;
    }
}

TEST(Pipeline, NoiseAtOneLayerLowersOnlyThatLayer) {
    TempDir dir;
    SyntheticSpec spec = small_spec();
    spec.identical_controls = true;
    spec.noisy_layer = 5;
    const SyntheticDataset ds = write_synthetic(dir.path() / "data", spec);
    const auto rows = compute_cka_table(ds.manifest, config_for(ds, dir.path() / "out"));
    std::map<std::string, std::map<std::size_t, double>> by_task;
    for (const auto& r : rows) by_task[r.task][r.layer] = r.cka;
    ASSERT_EQ(by_task.size(), spec.tasks);
    for (const auto& [task, layers] : by_task) {
        EXPECT_LT(layers.at(5), layers.at(4)) << task;
        EXPECT_LT(layers.at(5), layers.at(6)) << task;
    }
}

TEST(Pipeline, RowsAreSortedByTaskThenLayer) {
    TempDir dir;
    const SyntheticDataset ds = write_synthetic(dir.path() / "data", small_spec());
    const auto rows = compute_cka_table(ds.manifest, config_for(ds, dir.path() / "out", 3));
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_TRUE(std::tie(rows[i - 1].task, rows[i - 1].layer) < std::tie(rows[i].task, rows[i].layer));
    }
}

TEST(Pipeline, TaskFilterRestrictsRows) {
    TempDir dir;
    const SyntheticDataset ds = write_synthetic(dir.path() / "data", small_spec());
    RunConfig cfg = config_for(ds, dir.path() / "out");
    cfg.task_filter = "unseen";
    const auto rows = compute_cka_table(ds.manifest, cfg);
    for (const auto& r : rows) {
        EXPECT_FALSE(ds.manifest.task(r.task).seen);
    }
    EXPECT_EQ(rows.size(), 2u * 7u);
}

TEST(Pipeline, FullRunWritesEveryOutput) {
    TempDir dir;
    const SyntheticDataset ds = write_synthetic(dir.path() / "data", small_spec());
    const RunConfig cfg = config_for(ds, dir.path() / "out");
    cmd_run(ds.manifest, cfg);
    for (const char* name : {"cka.csv", "variance.csv", "variance_means.csv", "readability.csv", "correlation.csv",
                             "layer_profiles.csv", "segmentation.json", "tsne.json", "tsne_layer_1.csv",
                             "tsne_layer_7.csv", "report.json"}) {
        EXPECT_TRUE(fs::is_regular_file(cfg.out / name)) << name;
    }
    const auto report = nlohmann::json::parse(read_file(cfg.out / "report.json"));
    EXPECT_TRUE(report["warnings"].empty());
    EXPECT_EQ(report["manifest"]["sha256"], sha256_file(ds.manifest_path));
    EXPECT_EQ(report["correlations"].size(), 3u * 7u);
    EXPECT_FALSE(report["run_config"].contains("threads"));
    EXPECT_FALSE(report["run_config"].contains("out"));
}

TEST(Pipeline, RerunIsIdenticalExceptTimestamp) {
    TempDir dir;
    const SyntheticDataset ds = write_synthetic(dir.path() / "data", small_spec());
    RunConfig cfg = config_for(ds, dir.path() / "out");
    cfg.analyses = {"cka", "segment"};
    cmd_run(ds.manifest, cfg);
    auto first = nlohmann::json::parse(read_file(cfg.out / "report.json"));
    cmd_run(ds.manifest, cfg);
    auto second = nlohmann::json::parse(read_file(cfg.out / "report.json"));
    first.erase("generated_at");
    second.erase("generated_at");
    EXPECT_EQ(first.dump(), second.dump());
}

TEST(Pipeline, TamperedManifestIsReported) {
    TempDir dir;
    const SyntheticDataset ds = write_synthetic(dir.path() / "data", small_spec());
    const RunConfig cfg = config_for(ds, dir.path() / "out");
    cmd_cka(ds.manifest, cfg);
    std::ofstream(ds.manifest_path, std::ios::app) << "\n";
    const auto report = build_report(load_manifest(ds.manifest_path), cfg);
    ASSERT_EQ(report["warnings"].size(), 1u);
    EXPECT_NE(report["warnings"][0].get<std::string>().find("manifest hash mismatch"), std::string::npos);
}

TEST(Pipeline, DownstreamStepsNeedCkaTable) {
    TempDir dir;
    const SyntheticDataset ds = write_synthetic(dir.path() / "data", small_spec());
    const RunConfig cfg = config_for(ds, dir.path() / "out");
    for (auto step : {cmd_segment, cmd_report, cmd_correlate}) {
        try {
            step(ds.manifest, cfg);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::MissingUpstream);
        }
    }
}

TEST(Cli, ExitCodes) {
    TempDir dir;
    const SyntheticDataset ds = write_synthetic(dir.path() / "data", small_spec());
    const std::string manifest = "--manifest \"" + ds.manifest_path.string() + "\"";
    const std::string controls = (dir.path() / "data" / "controls.json").string();
    const std::string out = " --out \"" + (dir.path() / "out").string() + "\"";

    EXPECT_EQ(run_cli("validate " + manifest, dir.path()).code, 0);
    EXPECT_EQ(run_cli("cka " + manifest + " --experimental experimental --controls-map \"" + controls + "\"" + out,
                      dir.path())
                  .code,
              0);
    EXPECT_EQ(run_cli("segment " + manifest + out, dir.path()).code, 0);
    EXPECT_EQ(run_cli("report " + manifest + out, dir.path()).code, 0);

    EXPECT_EQ(run_cli("", dir.path()).code, 1);
    EXPECT_EQ(run_cli("cka " + manifest + " --bogus", dir.path()).code, 1);
    EXPECT_EQ(run_cli("cka " + manifest + out, dir.path()).code, 1);

    const CliResult missing_upstream =
        run_cli("report " + manifest + " --out \"" + (dir.path() / "empty").string() + "\"", dir.path());
    EXPECT_EQ(missing_upstream.code, 3);
    EXPECT_NE(missing_upstream.err.find("cka"), std::string::npos);

    auto partial = ds.controls;
    partial.erase("task003");
    const fs::path partial_path = dir.path() / "partial.json";
    std::ofstream(partial_path) << nlohmann::json(partial).dump();
    const CliResult missing_control = run_cli(
        "cka " + manifest + " --experimental experimental --controls-map \"" + partial_path.string() + "\"" + out,
        dir.path());
    EXPECT_EQ(missing_control.code, 2);
    EXPECT_NE(missing_control.err.find("task003"), std::string::npos);

    fs::remove(ds.manifest.tensor_path("ctrl_task002", "task002", 4));
    const CliResult missing_file = run_cli(
        "cka " + manifest + " --experimental experimental --controls-map \"" + controls + "\"" + out, dir.path());
    EXPECT_EQ(missing_file.code, 2);
    EXPECT_NE(missing_file.err.find("task002"), std::string::npos);
    EXPECT_EQ(run_cli("validate " + manifest, dir.path()).code, 2);
}
