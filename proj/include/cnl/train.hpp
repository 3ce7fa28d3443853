// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic two-scale dataset, step-decay SGD with linear warmup, and top-k evaluation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cnl/model.hpp"

namespace cnl {

// ---- dataset ----------------------------------------------------------------

/// Large motifs are 0.5-valued shapes; small motifs are 1.0-valued 8×8 glyphs (a solid
/// block or its one-pixel frame) placed clear of the large one. The class is
/// large_kind · small_kinds + small_kind.
enum class LargeMotif { square, ring, diamond, disc };
enum class SmallMotif { block, frame };

struct SyntheticDatasetSpec {
    std::size_t image_size = 64;
    std::size_t large_kinds = 2;  // first n of LargeMotif
    std::size_t small_kinds = 2;  // first n of SmallMotif
    std::size_t large_size = 24;
    double noise = 0.1;  // Gaussian standard deviation
    std::size_t train_count = 2000;
    std::size_t test_count = 500;

    std::size_t classes() const { return large_kinds * small_kinds; }
    void validate() const;
    /// Splits a class count into large × small kinds (small kinds fixed at 2).
    static SyntheticDatasetSpec with_classes(std::size_t classes);
};

constexpr std::size_t kSmallMotifSize = 8;

/// `size`×`size` mask of a large motif (1 inside).
std::vector<std::uint8_t> large_motif_mask(LargeMotif kind, std::size_t size);
/// kSmallMotifSize² mask of a small motif.
std::vector<std::uint8_t> small_motif_mask(SmallMotif kind);

struct Dataset {
    std::size_t image_size = 0;
    std::size_t classes = 0;
    std::vector<double> pixels;  // count · size · size, row-major per image
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::span<const double> image(std::size_t i) const;
    /// [n, size, size, 1] batch of the given samples.
    Tensor batch(std::span<const std::size_t> indices) const;
};

struct DatasetSplit {
    Dataset train;
    Dataset test;
};

/// Whether a motif layout (large motif at (ly, lx), small at (sy, sx)) belongs to the
/// test split. About one layout in five does.
bool is_test_layout(std::size_t ly, std::size_t lx, std::size_t sy, std::size_t sx);

/// Reproducible from (spec, seed). Labels cycle through the classes, so every class
/// count is within one of the others. Layouts are partitioned by is_test_layout, so no
/// image can appear in both splits.
DatasetSplit generate_dataset(const SyntheticDatasetSpec& spec, std::uint64_t seed);

/// Writes <dir>/<prefix>_00000.pgm … and <dir>/<prefix>_labels.csv (file,label).
void dump_dataset(const Dataset& data, const std::filesystem::path& dir, const std::string& prefix);

// ---- schedule ---------------------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 110;
    std::size_t warmup_epochs = 10;
    std::size_t batch_size = 32;
    double base_lr = 0.01;
    std::vector<std::size_t> milestones{50, 70, 90};
    /// Multiplier applied at each milestone; 0.9 gives the literal reading.
    double decay_factor = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t top_k = 5;  // clamped to the class count
    Affinity affinity = Affinity::dot_mean;
    std::uint64_t seed = 0;
    /// Evaluate the test split after every epoch (otherwise only after the last).
    bool eval_every_epoch = true;

    /// Throws std::invalid_argument when the schedule is inconsistent.
    void validate() const;
    /// The same schedule shape compressed into `epochs` epochs. Very short runs
    /// shorten the warmup and drop milestones that no longer fit.
    TrainConfig scaled(std::size_t epochs) const;
};

/// base_lr·(epoch+1)/warmup during warmup, then base_lr·decay^(milestones passed).
double lr_at(const TrainConfig& config, std::size_t epoch);

// ---- optimization -----------------------------------------------------------

/// SGD with heavy-ball momentum: v ← μv + (g + λw); w ← w − lr·v.
class Sgd {
public:
    Sgd(std::vector<Parameter*> params, double momentum, double weight_decay);
    void step(double lr);
    void zero_grad();

private:
    std::vector<Parameter*> params_;
    std::vector<std::vector<double>> velocity_;
    double momentum_;
    double weight_decay_;
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t epoch, std::size_t step, double loss);
    std::size_t epoch;
    std::size_t step;
};

struct Accuracy {
    double top1 = 0;
    double topk = 0;
    std::size_t k = 1;
};

/// Label counts as a hit when fewer than k classes outrank it; equal logits rank the
/// lower class index first.
Accuracy accuracy_from_logits(const Tensor& logits, std::span<const int> labels, std::size_t k);
Accuracy evaluate(const Model& model, const Dataset& data, std::size_t k, Affinity affinity = Affinity::dot_mean,
                  std::size_t batch_size = 100);

struct EpochStats {
    std::size_t epoch = 0;
    double lr = 0;
    double loss = 0;  // mean over the epoch's samples
    double top1 = 0;  // training batches, as seen during the epoch
    double topk = 0;
    double test_top1 = -1;  // -1 when not evaluated
    double test_topk = -1;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    Accuracy train;  // final evaluation, inference mode
    Accuracy test;
    std::size_t k = 1;

    /// epoch,lr,loss,top1,topk,test_top1,test_topk (accuracies in percent).
    std::string to_csv() const;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Throws DivergenceError when a batch loss becomes non-finite.
TrainReport train(Model& model, const DatasetSplit& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace cnl
