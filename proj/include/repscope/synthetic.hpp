#ifndef REPSCOPE_SYNTHETIC_HPP
#define REPSCOPE_SYNTHETIC_HPP

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "repscope/csv.hpp"
#include "repscope/manifest.hpp"
#include "repscope/matrix.hpp"
#include "repscope/ract.hpp"

/**
 * @file synthetic.hpp
 *
 * Planted-structure datasets for tests, demos and benchmarks.
 *
 * For task t and layer l the experimental activations are
 *
 *     E[t, l] = sep(l) * mu_cluster(t) + G,       G ~ N(0, 1)^{n x d}
 *
 * and the task's control model sees C[t, l] = E[t, l] + s(t, l) * N with fresh
 * Gaussian N. The noise scale s is set per regime (layers [1, b1], [b1+1, b2],
 * [b2+1, L]) and jittered log-normally per task, so the per-layer CKA profile is
 * piecewise constant with planted change points. The cluster offset is constant
 * across a task's rows and so is invisible to CKA, but it separates clusters for t-SNE.
 */

namespace repscope {

struct SyntheticSpec {
    std::size_t tasks = 60;
    std::size_t layers = 32;
    std::size_t clusters = 6;
    std::size_t n_min = 24;
    std::size_t n_max = 40;
    std::size_t dims = 16;
    std::size_t b1 = 9;
    std::size_t b2 = 15;
    /// Control noise scale in the shared, transition and refinement regimes.
    double noise_shared = 0.9;
    double noise_transition = 0.25;
    double noise_refinement = 0.5;
    /// Standard deviation of the per-(task, layer) log-normal jitter on the noise scale.
    double task_jitter = 0.1;
    /// Controls equal the experimental activations exactly (noise scales ignored).
    bool identical_controls = false;
    /// With identical controls, add unit-scale noise at this one layer.
    std::optional<std::size_t> noisy_layer;
    /// Every k-th task is marked unseen; 0 marks none.
    std::size_t unseen_every = 0;
    bool write_texts = true;
    DType dtype = DType::Float32;
    std::uint64_t seed = 1;
};

struct SyntheticDataset {
    std::filesystem::path manifest_path;
    Manifest manifest;
    std::string experimental = "experimental";
    std::map<std::string, std::string> controls;  // task -> control model
};

inline double regime_noise(const SyntheticSpec& spec, std::size_t layer) {
    if (layer <= spec.b1) return spec.noise_shared;
    if (layer <= spec.b2) return spec.noise_transition;
    return spec.noise_refinement;
}

namespace synth_detail {

inline std::string make_word(std::mt19937_64& rng, std::size_t length) {
    static const std::string consonants = "bcdfghjklmnprstvwz";
    static const std::string vowels = "aeiou";
    std::string w;
    for (std::size_t i = 0; i < length; ++i) {
        const std::string& pool = i % 2 == 0 ? consonants : vowels;
        w.push_back(pool[rng() % pool.size()]);
    }
    return w;
}

/// Instruction-like text whose word and sentence lengths depend on `difficulty` in [0, 1].
inline std::string make_text(std::mt19937_64& rng, double difficulty) {
    const std::size_t sentences = 1 + rng() % 3;
    const std::size_t words_per = 4 + static_cast<std::size_t>(difficulty * 14.0) + rng() % 4;
    std::string text;
    for (std::size_t s = 0; s < sentences; ++s) {
        for (std::size_t w = 0; w < words_per; ++w) {
            const std::size_t len = 2 + static_cast<std::size_t>(difficulty * 6.0) + rng() % 4;
            std::string word = make_word(rng, len);
            if (w == 0) {
                word[0] = static_cast<char>(word[0] - 'a' + 'A');
            }
            text += word;
            text += w + 1 < words_per ? " " : ".";
        }
        if (s + 1 < sentences) {
            text += ' ';
        }
    }
    return text;
}

} // namespace synth_detail

/// Writes manifest.json, RACT tensors and text files under `dir`.
inline SyntheticDataset write_synthetic(const std::filesystem::path& dir, const SyntheticSpec& spec) {
    namespace fs = std::filesystem;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    SyntheticDataset ds;
    Manifest& m = ds.manifest;
    m.root = dir;
    m.layers = spec.layers;
    m.naming = kDefaultNaming;
    m.extraction_note = "synthetic planted-regime fixture";
    m.models.push_back(ds.experimental);

    std::vector<RowMatrix> cluster_means;
    for (std::size_t c = 0; c < spec.clusters; ++c) {
        RowMatrix mu(1, static_cast<Eigen::Index>(spec.dims));
        for (Eigen::Index k = 0; k < mu.size(); ++k) {
            mu(0, k) = normal(rng);
        }
        cluster_means.push_back(std::move(mu));
    }

    fs::create_directories(dir / "texts");
    for (std::size_t t = 0; t < spec.tasks; ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "task%03zu", t);
        TaskEntry task;
        task.task_id = name;
        const std::size_t cluster = t % spec.clusters;
        task.cluster_id = "cluster" + std::to_string(cluster);
        task.n_examples = spec.n_min + static_cast<std::size_t>(rng() % (spec.n_max - spec.n_min + 1));
        task.seen = spec.unseen_every == 0 || (t + 1) % spec.unseen_every != 0;
        const std::string control = "ctrl_" + task.task_id;
        m.models.push_back(control);
        m.coverage[control] = {task.task_id};
        ds.controls[task.task_id] = control;

        const auto n = static_cast<Eigen::Index>(task.n_examples);
        const auto d = static_cast<Eigen::Index>(spec.dims);
        for (std::size_t layer = 1; layer <= spec.layers; ++layer) {
            const double sep = 0.5 + 4.0 * static_cast<double>(layer) / static_cast<double>(spec.layers);
            RowMatrix e(n, d);
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index k = 0; k < d; ++k) {
                    e(i, k) = sep * cluster_means[cluster](0, k) + normal(rng);
                }
            }
            double scale = 0.0;
            if (spec.identical_controls) {
                scale = spec.noisy_layer && *spec.noisy_layer == layer ? 1.0 : 0.0;
            } else {
                scale = regime_noise(spec, layer) * std::exp(spec.task_jitter * normal(rng));
            }
            RowMatrix c = e;
            if (scale > 0.0) {
                for (Eigen::Index k = 0; k < c.size(); ++k) {
                    c.data()[k] += scale * normal(rng);
                }
            }
            for (const auto& [model, values] : {std::pair{ds.experimental, &e}, std::pair{control, &c}}) {
                const auto path = m.tensor_path(model, task.task_id, layer);
                fs::create_directories(path.parent_path());
                write_tensor(path, DenseMatrix(*values), spec.dtype);
            }
        }

        if (spec.write_texts) {
            const double difficulty = static_cast<double>(rng() % 1000) / 999.0;
            std::string lines;
            for (std::size_t i = 0; i < task.n_examples; ++i) {
                lines += nlohmann::json{{"text", synth_detail::make_text(rng, difficulty)}}.dump() + "\n";
            }
            task.text_path = "texts/" + task.task_id + ".jsonl";
            atomic_write(dir / *task.text_path, lines);
        }
        m.tasks.push_back(std::move(task));
    }

    ds.manifest_path = dir / "manifest.json";
    atomic_write(ds.manifest_path, to_json(m).dump(2) + "\n");
    nlohmann::json controls(ds.controls);
    atomic_write(dir / "controls.json", controls.dump(2) + "\n");
    return ds;
}

} // namespace repscope

#endif
