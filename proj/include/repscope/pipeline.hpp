#ifndef REPSCOPE_PIPELINE_HPP
#define REPSCOPE_PIPELINE_HPP

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "repscope/cka.hpp"
#include "repscope/csv.hpp"
#include "repscope/error.hpp"
#include "repscope/manifest.hpp"
#include "repscope/parallel.hpp"
#include "repscope/segment.hpp"
#include "repscope/spectra.hpp"
#include "repscope/stats.hpp"
#include "repscope/textstats.hpp"
#include "repscope/tsne.hpp"

/**
 * @file pipeline.hpp
 *
 * Analysis steps behind the command-line tool. Every step reads the manifest and/or
 * earlier outputs from the output directory, computes its table fully in memory, and
 * only then writes its files (temp file + rename), together with a `<step>.meta.json`
 * that records the manifest hash the step saw.
 *
 * Output files:
 *   cka.csv               model,task,cluster,layer,cka,n
 *   variance.csv          task,layer,dims_required,threshold
 *   variance_means.csv    layer,mean_dims,n_tasks
 *   readability.csv       task,fk_grade,cl_index,n_texts
 *   correlation.csv       layer,covariate,r,n
 *   layer_profiles.csv    layer,group,count,min,whisker_lo,q1,median,q3,whisker_hi,max,n_outliers
 *   segmentation.json     {shared, transition, refinement, fit_score, statistic}
 *   tsne_layer_<L>.csv    x,y,task_id,cluster_id
 *   report.json           see schemas/report.schema.json
 */

namespace repscope {

inline constexpr int kReportSchemaVersion = 1;

struct RunConfig {
    std::filesystem::path manifest;
    std::string experimental;
    /// task -> control model
    std::map<std::string, std::string> controls;
    std::filesystem::path out;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::set<std::string> analyses{"cka", "variance", "readability", "correlate", "segment", "tsne"};
    /// all | seen | unseen
    std::string task_filter = "all";
    double variance_threshold = 0.99;
    double perplexity = 30.0;
    std::size_t tsne_iterations = 1000;
    std::size_t tsne_cap = 2000;
    /// Layers to embed; empty means every layer.
    std::vector<std::size_t> tsne_layers;
    std::vector<std::string> covariates{"fk", "cl", "data_size"};
    LayerStatistic statistic = LayerStatistic::Median;
};

/// Reproducibility-relevant configuration. Thread count and output location are left
/// out because they never change results.
inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["manifest"] = c.manifest.generic_string();
    j["experimental"] = c.experimental;
    j["controls"] = c.controls;
    j["seed"] = c.seed;
    j["analyses"] = c.analyses;
    j["task_filter"] = c.task_filter;
    j["variance_threshold"] = c.variance_threshold;
    j["perplexity"] = c.perplexity;
    j["tsne_iterations"] = c.tsne_iterations;
    j["tsne_cap"] = c.tsne_cap;
    j["tsne_layers"] = c.tsne_layers;
    j["covariates"] = c.covariates;
    j["statistic"] = c.statistic == LayerStatistic::Median ? "median" : "mean";
    return j;
}

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        fail(ErrorKind::IoError, "SHA-256 computation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    for (unsigned int i = 0; i < length; ++i) {
        hex.push_back(kHex[digest[i] >> 4]);
        hex.push_back(kHex[digest[i] & 0xF]);
    }
    return hex;
}

inline std::string sha256_file(const std::filesystem::path& path) {
    return sha256_hex(read_file(path));
}

/// Seed for one sub-analysis, derived from the run seed by SplitMix64 mixing.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct CkaRow {
    std::string model;
    std::string task;
    std::string cluster;
    std::size_t layer = 0;
    double cka = 0.0;
    std::size_t n = 0;
};

namespace pipeline_detail {

inline void write_meta(const RunConfig& cfg, const std::string& step) {
    nlohmann::json meta{{"step", step},
                        {"manifest_sha256", sha256_file(cfg.manifest)},
                        {"seed", cfg.seed}};
    atomic_write(cfg.out / (step + ".meta.json"), meta.dump(2) + "\n");
}

inline void require_file(const std::filesystem::path& path, const std::string& producer) {
    if (!std::filesystem::is_regular_file(path)) {
        fail(ErrorKind::MissingUpstream, path.string() + " not found; run '" + producer + "' first");
    }
}

inline bool task_selected(const RunConfig& cfg, const TaskEntry& task) {
    if (cfg.task_filter == "seen") return task.seen;
    if (cfg.task_filter == "unseen") return !task.seen;
    return true;
}

inline std::vector<const TaskEntry*> selected_tasks(const Manifest& m, const RunConfig& cfg) {
    std::vector<const TaskEntry*> out;
    for (const auto* t : m.sorted_tasks()) {
        if (task_selected(cfg, *t)) {
            out.push_back(t);
        }
    }
    if (out.empty()) {
        fail(ErrorKind::InvalidInput, "no tasks match filter '" + cfg.task_filter + "'");
    }
    return out;
}

} // namespace pipeline_detail

/// Checks the configuration against the manifest before any analysis runs.
inline void validate_config(const RunConfig& cfg, const Manifest& m) {
    if (cfg.task_filter != "all" && cfg.task_filter != "seen" && cfg.task_filter != "unseen") {
        fail(ErrorKind::InvalidInput, "task filter must be all, seen or unseen");
    }
    if (!m.has_model(cfg.experimental)) {
        fail(ErrorKind::ManifestError, "experimental model '" + cfg.experimental + "' not in manifest");
    }
    for (const auto& [task, control] : cfg.controls) {
        if (control == cfg.experimental) {
            fail(ErrorKind::InvalidInput, "control for task '" + task + "' is the experimental model");
        }
    }
}

/// CKA between the experimental model and each task's control, for every task and layer.
inline std::vector<CkaRow> compute_cka_table(const Manifest& m, const RunConfig& cfg) {
    validate_config(cfg, m);
    std::vector<TaskLayer> work;
    for (const auto* task : pipeline_detail::selected_tasks(m, cfg)) {
        if (!cfg.controls.count(task->task_id)) {
            fail(ErrorKind::ManifestError, "no control model mapped for task '" + task->task_id + "'");
        }
        for (std::size_t layer = 1; layer <= m.layers; ++layer) {
            work.push_back({task->task_id, layer});
        }
    }
    std::vector<CkaRow> rows(work.size());
    parallel_for(work.size(), cfg.threads, [&](std::size_t i) {
        const auto& [task_id, layer] = work[i];
        const std::string& control = cfg.controls.at(task_id);
        try {
            const auto [e, c] = load_pair(m, cfg.experimental, control, task_id, layer);
            const CkaScore score = cka(e, c, task_id, layer);
            rows[i] = {control, task_id, m.task(task_id).cluster_id, layer, score.value, score.n_examples};
        } catch (const Error& err) {
            throw err.with_context("(" + cfg.experimental + " vs " + control + ", task " + task_id + ", layer " +
                                   std::to_string(layer) + ")");
        }
    });
    return rows;
}

inline std::string cka_csv(const std::vector<CkaRow>& rows) {
    CsvWriter w({"model", "task", "cluster", "layer", "cka", "n"});
    for (const auto& r : rows) {
        w.row({r.model, r.task, r.cluster, std::to_string(r.layer), format_double(r.cka), std::to_string(r.n)});
    }
    return w.str();
}

inline std::vector<CkaRow> read_cka_csv(const std::filesystem::path& path) {
    pipeline_detail::require_file(path, "cka");
    const CsvTable t = read_csv(path);
    const std::size_t cm = t.column("model"), ct = t.column("task"), cc = t.column("cluster"),
                      cl = t.column("layer"), ck = t.column("cka"), cn = t.column("n");
    std::vector<CkaRow> rows;
    for (const auto& r : t.rows) {
        rows.push_back({r[cm], r[ct], r[cc], parse_count(r[cl]), parse_double(r[ck]), parse_count(r[cn])});
    }
    return rows;
}

inline void cmd_cka(const Manifest& m, const RunConfig& cfg) {
    const auto rows = compute_cka_table(m, cfg);
    atomic_write(cfg.out / "cka.csv", cka_csv(rows));
    pipeline_detail::write_meta(cfg, "cka");
}

/// Principal-component counts for the experimental model, per task and layer.
inline std::vector<VarianceProfile> compute_variance(const Manifest& m, const RunConfig& cfg) {
    std::vector<TaskLayer> work;
    for (const auto* task : pipeline_detail::selected_tasks(m, cfg)) {
        for (std::size_t layer = 1; layer <= m.layers; ++layer) {
            work.push_back({task->task_id, layer});
        }
    }
    std::vector<VarianceProfile> out(work.size());
    parallel_for(work.size(), cfg.threads, [&](std::size_t i) {
        const auto& [task_id, layer] = work[i];
        try {
            out[i] = variance_profile(load_activation(m, cfg.experimental, task_id, layer), cfg.variance_threshold);
        } catch (const Error& err) {
            throw err.with_context("(" + cfg.experimental + ", task " + task_id + ", layer " + std::to_string(layer) + ")");
        }
        out[i].task = task_id;
        out[i].layer = layer;
    });
    return out;
}

inline void cmd_variance(const Manifest& m, const RunConfig& cfg) {
    const auto profiles = compute_variance(m, cfg);
    CsvWriter detail({"task", "layer", "dims_required", "threshold"});
    for (const auto& p : profiles) {
        detail.row({p.task, std::to_string(p.layer), std::to_string(p.dims_required), format_double(p.threshold)});
    }
    CsvWriter means({"layer", "mean_dims", "n_tasks"});
    for (std::size_t layer = 1; layer <= m.layers; ++layer) {
        const auto count = static_cast<std::size_t>(
            std::count_if(profiles.begin(), profiles.end(), [&](const auto& p) { return p.layer == layer; }));
        means.row({std::to_string(layer), format_double(mean_dims_across_tasks(profiles, layer)), std::to_string(count)});
    }
    const std::string detail_csv = detail.str();
    const std::string means_csv = means.str();
    atomic_write(cfg.out / "variance.csv", detail_csv);
    atomic_write(cfg.out / "variance_means.csv", means_csv);
    pipeline_detail::write_meta(cfg, "variance");
}

/// Per-task mean readability over the task's instruction texts. Tasks without texts are skipped.
inline std::vector<ReadabilityScore> compute_readability(const Manifest& m, const RunConfig& cfg) {
    std::vector<const TaskEntry*> tasks;
    for (const auto* t : pipeline_detail::selected_tasks(m, cfg)) {
        if (t->text_path) {
            tasks.push_back(t);
        }
    }
    std::vector<ReadabilityScore> out(tasks.size());
    parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
        const auto texts = read_texts(*m.text_file(*tasks[i]));
        try {
            out[i] = task_readability(texts);
        } catch (const Error& err) {
            throw err.with_context("task " + tasks[i]->task_id);
        }
        out[i].task = tasks[i]->task_id;
    });
    return out;
}

inline void cmd_readability(const Manifest& m, const RunConfig& cfg) {
    const auto scores = compute_readability(m, cfg);
    if (scores.empty()) {
        fail(ErrorKind::InvalidInput, "no task in the manifest has a text_path");
    }
    CsvWriter w({"task", "fk_grade", "cl_index", "n_texts"});
    for (const auto& s : scores) {
        w.row({s.task, format_double(s.fk_grade), format_double(s.cl_index), std::to_string(s.n_texts)});
    }
    atomic_write(cfg.out / "readability.csv", w.str());
    pipeline_detail::write_meta(cfg, "readability");
}

/// Pearson r between per-task CKA and each covariate, per layer.
inline std::vector<CorrelationResult> compute_correlations(const Manifest& m, const RunConfig& cfg) {
    const auto cka_rows = read_cka_csv(cfg.out / "cka.csv");
    std::map<std::string, std::map<std::string, double>> covariates;
    for (const auto& name : cfg.covariates) {
        if (name == "data_size") {
            for (const auto& t : m.tasks) {
                covariates[name][t.task_id] = static_cast<double>(t.n_examples);
            }
        } else if (name == "fk" || name == "cl") {
            const auto path = cfg.out / "readability.csv";
            pipeline_detail::require_file(path, "readability");
            const CsvTable t = read_csv(path);
            const std::size_t task_col = t.column("task");
            const std::size_t value_col = t.column(name == "fk" ? "fk_grade" : "cl_index");
            for (const auto& r : t.rows) {
                covariates[name][r[task_col]] = parse_double(r[value_col]);
            }
        } else {
            fail(ErrorKind::InvalidInput, "unknown covariate '" + name + "' (expected fk, cl or data_size)");
        }
    }
    std::map<std::size_t, std::map<std::string, double>> by_layer;
    for (const auto& r : cka_rows) {
        by_layer[r.layer][r.task] = r.cka;
    }
    std::vector<CorrelationResult> out;
    for (const auto& [layer, scores] : by_layer) {
        for (const auto& name : cfg.covariates) {
            const std::string label = name == "fk" ? "fk_grade" : name == "cl" ? "cl_index" : name;
            out.push_back(correlate_cka(scores, covariates.at(name), label, layer));
        }
    }
    return out;
}

inline void cmd_correlate(const Manifest& m, const RunConfig& cfg) {
    const auto results = compute_correlations(m, cfg);
    CsvWriter w({"layer", "covariate", "r", "n"});
    for (const auto& r : results) {
        w.row({std::to_string(r.layer), r.covariate_name, format_double(r.r), std::to_string(r.n)});
    }
    atomic_write(cfg.out / "correlation.csv", w.str());
    pipeline_detail::write_meta(cfg, "correlate");
}

struct GroupedProfile {
    std::string group;
    LayerProfile profile;
};

/// Box-plot summaries of the CKA table per layer, for all tasks and split by seen/unseen.
inline std::vector<GroupedProfile> compute_layer_profiles(const Manifest& m, const std::vector<CkaRow>& rows) {
    std::map<std::string, std::map<std::size_t, std::vector<std::pair<std::string, double>>>> grouped;
    bool any_unseen = false;
    for (const auto& r : rows) {
        const TaskEntry* t = m.find_task(r.task);
        const bool seen = t == nullptr || t->seen;
        any_unseen = any_unseen || !seen;
        grouped["all"][r.layer].emplace_back(r.task, r.cka);
        grouped[seen ? "seen" : "unseen"][r.layer].emplace_back(r.task, r.cka);
    }
    std::vector<GroupedProfile> out;
    for (const std::string group : {"all", "seen", "unseen"}) {
        if (group != "all" && !any_unseen) {
            continue;
        }
        for (auto& [layer, values] : grouped[group]) {
            out.push_back({group, boxplot_summary(values, layer)});
        }
    }
    return out;
}

inline std::vector<std::vector<double>> scores_by_layer(const std::vector<CkaRow>& rows) {
    std::map<std::size_t, std::vector<double>> by_layer;
    for (const auto& r : rows) {
        by_layer[r.layer].push_back(r.cka);
    }
    std::vector<std::vector<double>> out;
    std::size_t expected = 1;
    for (auto& [layer, scores] : by_layer) {
        if (layer != expected++) {
            fail(ErrorKind::InvalidInput, "CKA table skips layer " + std::to_string(expected - 1));
        }
        out.push_back(std::move(scores));
    }
    return out;
}

inline void cmd_segment(const Manifest& m, const RunConfig& cfg) {
    const auto rows = read_cka_csv(cfg.out / "cka.csv");
    const auto profiles = compute_layer_profiles(m, rows);
    const SegmentationResult seg = segment_from_cka(scores_by_layer(rows), cfg.statistic);

    CsvWriter w({"layer", "group", "count", "min", "whisker_lo", "q1", "median", "q3", "whisker_hi", "max", "n_outliers"});
    for (const auto& [group, p] : profiles) {
        w.row({std::to_string(p.layer), group, std::to_string(p.count), format_double(p.min), format_double(p.whisker_lo),
               format_double(p.q1), format_double(p.median), format_double(p.q3), format_double(p.whisker_hi),
               format_double(p.max), std::to_string(p.outliers.size())});
    }
    nlohmann::json seg_json = to_json(seg);
    seg_json["statistic"] = cfg.statistic == LayerStatistic::Median ? "median" : "mean";
    const std::string csv = w.str();
    atomic_write(cfg.out / "layer_profiles.csv", csv);
    atomic_write(cfg.out / "segmentation.json", seg_json.dump(2) + "\n");
    pipeline_detail::write_meta(cfg, "segment");
}

struct LayerEmbedding {
    std::size_t layer = 0;
    Embedding embedding;
    std::vector<std::string> task_ids;
};

/// Joint t-SNE of all selected tasks' experimental activations, one embedding per layer.
inline std::vector<LayerEmbedding> compute_tsne(const Manifest& m, const RunConfig& cfg) {
    std::vector<std::size_t> layers = cfg.tsne_layers;
    if (layers.empty()) {
        for (std::size_t l = 1; l <= m.layers; ++l) {
            layers.push_back(l);
        }
    }
    for (std::size_t l : layers) {
        if (l < 1 || l > m.layers) {
            fail(ErrorKind::InvalidInput, "t-SNE layer " + std::to_string(l) + " out of range");
        }
    }
    const auto tasks = pipeline_detail::selected_tasks(m, cfg);
    std::vector<LayerEmbedding> out(layers.size());
    parallel_for(layers.size(), cfg.threads, [&](std::size_t i) {
        const std::size_t layer = layers[i];
        std::vector<DenseMatrix> parts;
        std::vector<std::string> task_ids;
        std::vector<std::string> clusters;
        Eigen::Index total = 0;
        for (const auto* t : tasks) {
            parts.push_back(load_activation(m, cfg.experimental, t->task_id, layer));
            total += static_cast<Eigen::Index>(parts.back().rows());
            task_ids.insert(task_ids.end(), parts.back().rows(), t->task_id);
            clusters.insert(clusters.end(), parts.back().rows(), t->cluster_id);
        }
        const Eigen::Index dims = static_cast<Eigen::Index>(parts.front().cols());
        RowMatrix joint(total, dims);
        Eigen::Index at = 0;
        for (const auto& p : parts) {
            if (static_cast<Eigen::Index>(p.cols()) != dims) {
                fail(ErrorKind::ShapeMismatch, "tasks disagree on representation width at layer " + std::to_string(layer));
            }
            joint.middleRows(at, static_cast<Eigen::Index>(p.rows())) = p.values();
            at += static_cast<Eigen::Index>(p.rows());
        }
        const std::uint64_t seed = derive_seed(cfg.seed, 1000 + layer);
        const auto keep = stratified_subsample(clusters, cfg.tsne_cap, seed);
        RowMatrix sub(static_cast<Eigen::Index>(keep.size()), dims);
        std::vector<std::string> sub_tasks;
        std::vector<std::string> sub_clusters;
        for (std::size_t k = 0; k < keep.size(); ++k) {
            sub.row(static_cast<Eigen::Index>(k)) = joint.row(static_cast<Eigen::Index>(keep[k]));
            sub_tasks.push_back(task_ids[keep[k]]);
            sub_clusters.push_back(clusters[keep[k]]);
        }
        TsneConfig tc;
        tc.perplexity = cfg.perplexity;
        tc.iterations = cfg.tsne_iterations;
        tc.seed = seed;
        try {
            out[i] = {layer, tsne(DenseMatrix(std::move(sub)), tc, std::move(sub_clusters)), std::move(sub_tasks)};
        } catch (const Error& err) {
            throw err.with_context("t-SNE layer " + std::to_string(layer));
        }
    });
    return out;
}

inline void cmd_tsne(const Manifest& m, const RunConfig& cfg) {
    const auto layers = compute_tsne(m, cfg);
    std::vector<std::pair<std::string, std::string>> files;
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& le : layers) {
        CsvWriter w({"x", "y", "task_id", "cluster_id"});
        const auto& pts = le.embedding.points;
        for (Eigen::Index r = 0; r < pts.rows(); ++r) {
            const double y = pts.cols() > 1 ? pts(r, 1) : 0.0;
            w.row({format_double(pts(r, 0)), format_double(y), le.task_ids[static_cast<std::size_t>(r)],
                   le.embedding.labels[static_cast<std::size_t>(r)]});
        }
        const std::string name = "tsne_layer_" + std::to_string(le.layer) + ".csv";
        files.emplace_back(name, w.str());
        summary.push_back({{"layer", le.layer},
                           {"file", name},
                           {"n_points", pts.rows()},
                           {"initial_kl", le.embedding.initial_kl},
                           {"final_kl", le.embedding.final_kl}});
    }
    for (const auto& [name, content] : files) {
        atomic_write(cfg.out / name, content);
    }
    atomic_write(cfg.out / "tsne.json", summary.dump(2) + "\n");
    pipeline_detail::write_meta(cfg, "tsne");
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/**
 * Gathers every analysis output present in the output directory into report.json.
 * The CKA table is mandatory; other sections are null when their step was not run.
 * A step whose recorded manifest hash differs from the current manifest adds a warning.
 */
inline nlohmann::json build_report(const Manifest& m, const RunConfig& cfg) {
    namespace fs = std::filesystem;
    const fs::path out = cfg.out;
    const auto rows = read_cka_csv(out / "cka.csv");
    const std::string manifest_hash = sha256_file(cfg.manifest);

    nlohmann::json report;
    report["schema_version"] = kReportSchemaVersion;
    report["tool"] = "repscope";
    report["generated_at"] = utc_timestamp();
    report["seed"] = cfg.seed;
    report["run_config"] = to_json(cfg);
    report["manifest"] = {{"path", cfg.manifest.generic_string()},
                          {"sha256", manifest_hash},
                          {"models", m.models.size()},
                          {"tasks", m.tasks.size()},
                          {"layers", m.layers}};

    nlohmann::json warnings = nlohmann::json::array();
    nlohmann::json steps = nlohmann::json::object();
    for (const std::string step : {"cka", "variance", "readability", "correlate", "segment", "tsne"}) {
        const fs::path meta_path = out / (step + ".meta.json");
        if (!fs::is_regular_file(meta_path)) {
            continue;
        }
        const auto meta = nlohmann::json::parse(read_file(meta_path));
        const std::string recorded = meta.value("manifest_sha256", std::string());
        steps[step] = {{"manifest_sha256", recorded}, {"seed", meta.value("seed", std::uint64_t{0})}};
        if (recorded != manifest_hash) {
            warnings.push_back("manifest hash mismatch: step '" + step + "' ran against " + recorded +
                               ", current manifest is " + manifest_hash);
        }
    }
    if (!steps.contains("cka")) {
        fail(ErrorKind::MissingUpstream, (out / "cka.meta.json").string() + " not found; run 'cka' first");
    }
    report["steps"] = steps;

    nlohmann::json profiles = nlohmann::json::array();
    for (const auto& [group, p] : compute_layer_profiles(m, rows)) {
        nlohmann::json outliers = nlohmann::json::array();
        for (const auto& [task, v] : p.outliers) {
            outliers.push_back({{"task", task}, {"value", v}});
        }
        profiles.push_back({{"layer", p.layer}, {"group", group}, {"count", p.count}, {"min", p.min},
                            {"whisker_lo", p.whisker_lo}, {"q1", p.q1}, {"median", p.median}, {"q3", p.q3},
                            {"whisker_hi", p.whisker_hi}, {"max", p.max}, {"outliers", outliers}});
    }
    report["layer_profiles"] = profiles;

    report["segmentation"] = nullptr;
    if (fs::is_regular_file(out / "segmentation.json")) {
        report["segmentation"] = nlohmann::json::parse(read_file(out / "segmentation.json"));
    }

    report["correlations"] = nullptr;
    if (fs::is_regular_file(out / "correlation.csv")) {
        const CsvTable t = read_csv(out / "correlation.csv");
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : t.rows) {
            arr.push_back({{"layer", parse_count(r[t.column("layer")])},
                           {"covariate", r[t.column("covariate")]},
                           {"r", parse_double(r[t.column("r")])},
                           {"n", parse_count(r[t.column("n")])}});
        }
        report["correlations"] = arr;
    }

    report["variance_means"] = nullptr;
    if (fs::is_regular_file(out / "variance_means.csv")) {
        const CsvTable t = read_csv(out / "variance_means.csv");
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : t.rows) {
            arr.push_back({{"layer", parse_count(r[t.column("layer")])},
                           {"mean_dims", parse_double(r[t.column("mean_dims")])},
                           {"n_tasks", parse_count(r[t.column("n_tasks")])}});
        }
        report["variance_means"] = arr;
    }

    report["readability"] = nullptr;
    if (fs::is_regular_file(out / "readability.csv")) {
        const CsvTable t = read_csv(out / "readability.csv");
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : t.rows) {
            arr.push_back({{"task", r[t.column("task")]},
                           {"fk_grade", parse_double(r[t.column("fk_grade")])},
                           {"cl_index", parse_double(r[t.column("cl_index")])},
                           {"n_texts", parse_count(r[t.column("n_texts")])}});
        }
        report["readability"] = arr;
    }

    report["tsne"] = nullptr;
    if (fs::is_regular_file(out / "tsne.json")) {
        report["tsne"] = nlohmann::json::parse(read_file(out / "tsne.json"));
    }

    nlohmann::json files = nlohmann::json::object();
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(out)) {
        const std::string name = entry.path().filename().string();
        const auto ext = entry.path().extension().string();
        if (entry.is_regular_file() && name != "report.json" && (ext == ".csv" || ext == ".json")) {
            names.push_back(name);
        }
    }
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
        files[name] = sha256_file(out / name);
    }
    report["files"] = files;
    report["warnings"] = warnings;
    return report;
}

inline void cmd_report(const Manifest& m, const RunConfig& cfg) {
    const nlohmann::json report = build_report(m, cfg);
    atomic_write(cfg.out / "report.json", report.dump(2) + "\n");
}

/// Runs every requested analysis in dependency order, then writes the report.
inline void cmd_run(const Manifest& m, const RunConfig& cfg, const std::function<void(const std::string&)>& log = {}) {
    static const std::vector<std::pair<std::string, void (*)(const Manifest&, const RunConfig&)>> kSteps{
        {"cka", cmd_cka},         {"variance", cmd_variance}, {"readability", cmd_readability},
        {"correlate", cmd_correlate}, {"segment", cmd_segment}, {"tsne", cmd_tsne}};
    for (const auto& [name, step] : kSteps) {
        if (cfg.analyses.count(name)) {
            if (log) {
                log(name);
            }
            step(m, cfg);
        }
    }
    cmd_report(m, cfg);
}

} // namespace repscope

#endif
