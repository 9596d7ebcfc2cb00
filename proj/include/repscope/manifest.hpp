#ifndef REPSCOPE_MANIFEST_HPP
#define REPSCOPE_MANIFEST_HPP

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "repscope/error.hpp"
#include "repscope/matrix.hpp"
#include "repscope/ract.hpp"

/**
 * @file manifest.hpp
 *
 * Dataset manifest: which models, tasks and layers exist and where their
 * activation tensors live. Tensor paths are resolved relative to the directory
 * holding the manifest using the naming template, whose placeholders are
 * `{model}`, `{task}` and `{L}` (1-based layer index). A model given as a plain
 * string covers every task; the object form restricts it to the listed tasks,
 * which is how per-task control models are declared.
 *
 * Example:
 *
 *     {
 *       "format_version": 1,
 *       "models": ["base", {"model_id": "ctrl_qa", "tasks": ["qa"]}],
 *       "layers": 32,
 *       "naming": "{model}/{task}/layer_{L}.ract",
 *       "extraction_note": "post-block hidden state of the last non-padding token",
 *       "tasks": [
 *         {"task_id": "qa", "cluster_id": "reading", "n_examples": 100,
 *          "seen": true, "text_path": "texts/qa.jsonl"}
 *       ]
 *     }
 */

namespace repscope {

inline constexpr const char* kDefaultNaming = "{model}/{task}/layer_{L}.ract";

struct TaskEntry {
    std::string task_id;
    std::string cluster_id;
    std::size_t n_examples = 0;
    bool seen = true;
    std::optional<std::string> text_path;
};

struct Manifest {
    std::filesystem::path root;
    std::vector<std::string> models;
    /// Task restriction per model; models absent from the map cover every task.
    std::map<std::string, std::vector<std::string>> coverage;
    std::vector<TaskEntry> tasks;
    std::size_t layers = 0;
    std::string naming = kDefaultNaming;
    std::string extraction_note;

    bool has_model(const std::string& model) const {
        return std::find(models.begin(), models.end(), model) != models.end();
    }

    bool covers(const std::string& model, const std::string& task_id) const {
        auto it = coverage.find(model);
        return it == coverage.end() || std::find(it->second.begin(), it->second.end(), task_id) != it->second.end();
    }

    const TaskEntry* find_task(const std::string& task_id) const {
        for (const auto& t : tasks) {
            if (t.task_id == task_id) {
                return &t;
            }
        }
        return nullptr;
    }

    const TaskEntry& task(const std::string& task_id) const {
        const TaskEntry* t = find_task(task_id);
        if (t == nullptr) {
            fail(ErrorKind::ManifestError, "unknown task '" + task_id + "'");
        }
        return *t;
    }

    /// Tasks sorted by id.
    std::vector<const TaskEntry*> sorted_tasks() const {
        std::vector<const TaskEntry*> out;
        for (const auto& t : tasks) {
            out.push_back(&t);
        }
        std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->task_id < b->task_id; });
        return out;
    }

    std::filesystem::path tensor_path(const std::string& model, const std::string& task_id,
                                      std::size_t layer) const {
        std::string rel = naming;
        auto substitute = [&rel](const std::string& key, const std::string& value) {
            for (std::size_t pos = rel.find(key); pos != std::string::npos; pos = rel.find(key, pos + value.size())) {
                rel.replace(pos, key.size(), value);
            }
        };
        substitute("{model}", model);
        substitute("{task}", task_id);
        substitute("{L}", std::to_string(layer));
        return root / rel;
    }

    std::optional<std::filesystem::path> text_file(const TaskEntry& entry) const {
        if (!entry.text_path) {
            return std::nullopt;
        }
        return root / *entry.text_path;
    }
};

namespace detail {

inline void check_identifier(const std::string& id, const std::string& what) {
    if (id.empty() || id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos) {
        fail(ErrorKind::ManifestError, "invalid " + what + " '" + id + "'");
    }
}

} // namespace detail

inline Manifest parse_manifest(const nlohmann::json& doc, std::filesystem::path root) {
    Manifest m;
    m.root = std::move(root);
    try {
        if (doc.contains("format_version") && doc.at("format_version").get<int>() != 1) {
            fail(ErrorKind::ManifestError, "unsupported manifest format_version");
        }
        for (const auto& entry : doc.at("models")) {
            if (entry.is_string()) {
                m.models.push_back(entry.get<std::string>());
            } else {
                const auto id = entry.at("model_id").get<std::string>();
                m.models.push_back(id);
                if (entry.contains("tasks")) {
                    m.coverage[id] = entry.at("tasks").get<std::vector<std::string>>();
                }
            }
        }
        m.layers = doc.at("layers").get<std::size_t>();
        m.naming = doc.value("naming", std::string(kDefaultNaming));
        m.extraction_note = doc.value("extraction_note", std::string());
        for (const auto& t : doc.at("tasks")) {
            TaskEntry e;
            e.task_id = t.at("task_id").get<std::string>();
            e.cluster_id = t.value("cluster_id", std::string());
            e.n_examples = t.at("n_examples").get<std::size_t>();
            e.seen = t.value("seen", true);
            if (t.contains("text_path") && !t.at("text_path").is_null()) {
                e.text_path = t.at("text_path").get<std::string>();
            }
            m.tasks.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::ManifestError, std::string("malformed manifest: ") + e.what());
    }

    if (m.models.empty()) {
        fail(ErrorKind::ManifestError, "manifest lists no models");
    }
    if (m.tasks.empty()) {
        fail(ErrorKind::ManifestError, "manifest lists no tasks");
    }
    if (m.layers < 1) {
        fail(ErrorKind::ManifestError, "layer count must be >= 1");
    }
    std::set<std::string> seen_models;
    for (const auto& model : m.models) {
        detail::check_identifier(model, "model id");
        if (!seen_models.insert(model).second) {
            fail(ErrorKind::ManifestError, "duplicate model id '" + model + "'");
        }
    }
    std::set<std::string> seen_tasks;
    for (const auto& t : m.tasks) {
        detail::check_identifier(t.task_id, "task id");
        if (!seen_tasks.insert(t.task_id).second) {
            fail(ErrorKind::ManifestError, "duplicate task id '" + t.task_id + "'");
        }
        if (t.n_examples < 1) {
            fail(ErrorKind::ManifestError, "task '" + t.task_id + "' has n_examples = 0");
        }
    }
    for (const auto& [model, covered] : m.coverage) {
        for (const auto& task : covered) {
            if (!seen_tasks.count(task)) {
                fail(ErrorKind::ManifestError, "model '" + model + "' lists unknown task '" + task + "'");
            }
        }
    }
    return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::ManifestError, "cannot open manifest " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::ManifestError, path.string() + ": " + e.what());
    }
    return parse_manifest(doc, path.parent_path());
}

inline nlohmann::json to_json(const Manifest& m) {
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["models"] = nlohmann::json::array();
    for (const auto& model : m.models) {
        if (auto it = m.coverage.find(model); it != m.coverage.end()) {
            doc["models"].push_back({{"model_id", model}, {"tasks", it->second}});
        } else {
            doc["models"].push_back(model);
        }
    }
    doc["layers"] = m.layers;
    doc["naming"] = m.naming;
    doc["extraction_note"] = m.extraction_note;
    doc["tasks"] = nlohmann::json::array();
    for (const auto& t : m.tasks) {
        nlohmann::json e{{"task_id", t.task_id},
                         {"cluster_id", t.cluster_id},
                         {"n_examples", t.n_examples},
                         {"seen", t.seen}};
        if (t.text_path) {
            e["text_path"] = *t.text_path;
        }
        doc["tasks"].push_back(std::move(e));
    }
    return doc;
}

/// Checks one (model, task, layer) triple: file present, header valid, rows == n_examples.
inline void check_triple(const Manifest& m, const std::string& model, const TaskEntry& task, std::size_t layer) {
    const std::string triple = "(" + model + ", " + task.task_id + ", layer " + std::to_string(layer) + ")";
    if (!m.has_model(model)) {
        fail(ErrorKind::ManifestError, "model '" + model + "' not in manifest " + triple);
    }
    if (!m.covers(model, task.task_id)) {
        fail(ErrorKind::ManifestError, "model '" + model + "' does not cover task " + triple);
    }
    if (layer < 1 || layer > m.layers) {
        fail(ErrorKind::ManifestError, "layer out of range " + triple);
    }
    const auto path = m.tensor_path(model, task.task_id, layer);
    if (!std::filesystem::is_regular_file(path)) {
        fail(ErrorKind::ManifestError, "missing tensor file " + path.string() + " for " + triple);
    }
    TensorHeader header;
    try {
        header = read_tensor_header(path);
    } catch (const Error& e) {
        fail(ErrorKind::ManifestError, "unreadable tensor for " + triple + ": " + e.message());
    }
    if (header.rows != task.n_examples) {
        fail(ErrorKind::ShapeMismatch, triple + " has " + std::to_string(header.rows) + " rows, manifest says " +
                                           std::to_string(task.n_examples));
    }
}

/// Validates every (model, task, layer) triple the manifest declares.
inline void validate_manifest(const Manifest& m) {
    for (const auto& model : m.models) {
        for (const auto* task : m.sorted_tasks()) {
            if (!m.covers(model, task->task_id)) {
                continue;
            }
            for (std::size_t layer = 1; layer <= m.layers; ++layer) {
                check_triple(m, model, *task, layer);
            }
        }
    }
}

struct TaskLayer {
    std::string task;
    std::size_t layer = 0;
};

/// All (task, layer) pairs, sorted by task id then layer.
inline std::vector<TaskLayer> enumerate_pairs(const Manifest& m) {
    std::vector<TaskLayer> out;
    for (const auto* task : m.sorted_tasks()) {
        for (std::size_t layer = 1; layer <= m.layers; ++layer) {
            out.push_back({task->task_id, layer});
        }
    }
    return out;
}

/**
 * Read-through cache of decoded tensors keyed by path. Safe to share between threads;
 * concurrent misses on the same path may both decode, the first insert wins.
 */
class TensorCache {
public:
    std::shared_ptr<const DenseMatrix> get(const std::filesystem::path& path) {
        const std::string key = path.lexically_normal().string();
        {
            std::lock_guard lock(mutex_);
            if (auto it = entries_.find(key); it != entries_.end()) {
                return it->second;
            }
        }
        auto loaded = std::make_shared<const DenseMatrix>(read_tensor(path));
        std::lock_guard lock(mutex_);
        return entries_.emplace(key, std::move(loaded)).first->second;
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return entries_.size();
    }

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const DenseMatrix>> entries_;
};

/// Loads one model's activations for (task, layer) after checking the triple.
inline DenseMatrix load_activation(const Manifest& m, const std::string& model, const std::string& task_id,
                                   std::size_t layer, TensorCache* cache = nullptr) {
    const TaskEntry& task = m.task(task_id);
    check_triple(m, model, task, layer);
    const auto path = m.tensor_path(model, task_id, layer);
    return cache != nullptr ? *cache->get(path) : read_tensor(path);
}

/// Loads the (model_a, model_b) activation pair for one task and layer, ready for cka().
inline std::pair<DenseMatrix, DenseMatrix> load_pair(const Manifest& m, const std::string& model_a,
                                                     const std::string& model_b, const std::string& task_id,
                                                     std::size_t layer, TensorCache* cache = nullptr) {
    const TaskEntry& task = m.task(task_id);
    const std::string where = task_id + " layer " + std::to_string(layer);
    for (const auto* model : {&model_a, &model_b}) {
        if (!m.has_model(*model)) {
            fail(ErrorKind::ManifestError, "model '" + *model + "' not in manifest (" + where + ")");
        }
        if (!m.covers(*model, task_id)) {
            fail(ErrorKind::ManifestError, "model '" + *model + "' does not cover task (" + where + ")");
        }
        if (layer < 1 || layer > m.layers) {
            fail(ErrorKind::ManifestError, "layer out of range (" + where + ")");
        }
        const auto path = m.tensor_path(*model, task_id, layer);
        if (!std::filesystem::is_regular_file(path)) {
            fail(ErrorKind::ManifestError, "missing tensor file " + path.string() + " (" + *model + ", " + where + ")");
        }
    }
    auto read = [&](const std::string& model) {
        const auto path = m.tensor_path(model, task_id, layer);
        return cache != nullptr ? *cache->get(path) : read_tensor(path);
    };
    DenseMatrix a = read(model_a);
    DenseMatrix b = read(model_b);
    if (a.rows() != b.rows()) {
        fail(ErrorKind::ShapeMismatch, where + ": " + model_a + " has " + std::to_string(a.rows()) + " rows, " +
                                           model_b + " has " + std::to_string(b.rows()));
    }
    if (a.rows() != task.n_examples) {
        fail(ErrorKind::ShapeMismatch, where + ": tensors have " + std::to_string(a.rows()) +
                                           " rows, manifest says " + std::to_string(task.n_examples));
    }
    return {std::move(a), std::move(b)};
}

/// Reads a JSON-lines file and returns the `text` field of every non-blank line, in order.
inline std::vector<std::string> read_texts(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::IoError, "cannot open text file " + path.string());
    }
    std::vector<std::string> texts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            texts.push_back(nlohmann::json::parse(line).at("text").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::FormatError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return texts;
}

} // namespace repscope

#endif
