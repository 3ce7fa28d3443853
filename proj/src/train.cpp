// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include "cnl/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "cnl/io.hpp"

namespace cnl {

void TrainConfig::validate() const {
    if (epochs == 0) throw std::invalid_argument("epochs must be positive");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (!std::isfinite(base_lr) || base_lr < 0) throw std::invalid_argument("base_lr must be finite and >= 0");
    if (!std::isfinite(decay_factor) || decay_factor <= 0) throw std::invalid_argument("decay_factor must be > 0");
    if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("momentum must be in [0, 1)");
    if (!std::isfinite(weight_decay) || weight_decay < 0) throw std::invalid_argument("weight_decay must be >= 0");
    if (top_k == 0) throw std::invalid_argument("top_k must be positive");
    for (std::size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] >= epochs) {
            throw std::invalid_argument("milestone " + std::to_string(milestones[i]) + " is not below epochs (" +
                                        std::to_string(epochs) + ")");
        }
        if (i > 0 && milestones[i] <= milestones[i - 1]) {
            throw std::invalid_argument("milestones must be strictly increasing");
        }
    }
    const std::size_t limit = milestones.empty() ? epochs : milestones.front();
    if (warmup_epochs >= limit) {
        throw std::invalid_argument("warmup_epochs (" + std::to_string(warmup_epochs) +
                                    ") must end before the first milestone (" + std::to_string(limit) + ")");
    }
}

TrainConfig TrainConfig::scaled(std::size_t new_epochs) const {
    validate();
    if (new_epochs == 0) throw std::invalid_argument("epochs must be positive");
    TrainConfig out = *this;
    const double f = static_cast<double>(new_epochs) / static_cast<double>(epochs);
    auto scale = [&](std::size_t e) { return static_cast<std::size_t>(std::llround(static_cast<double>(e) * f)); };
    out.epochs = new_epochs;
    out.warmup_epochs =
        warmup_epochs == 0 ? 0 : std::min(new_epochs - 1, std::max<std::size_t>(1, scale(warmup_epochs)));
    out.milestones.clear();
    std::size_t floor = out.warmup_epochs + 1;
    for (std::size_t m : milestones) {
        const std::size_t v = std::max(scale(m), floor);
        if (v >= new_epochs) break;  // too short a run to fit the remaining decays
        out.milestones.push_back(v);
        floor = v + 1;
    }
    out.validate();
    return out;
}

double lr_at(const TrainConfig& config, std::size_t epoch) {
    if (epoch >= config.epochs) {
        throw std::out_of_range("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(config.epochs) +
                                ")");
    }
    if (epoch < config.warmup_epochs) {
        return config.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(config.warmup_epochs);
    }
    const auto passed = std::count_if(config.milestones.begin(), config.milestones.end(),
                                      [&](std::size_t m) { return epoch >= m; });
    return config.base_lr * std::pow(config.decay_factor, static_cast<double>(passed));
}

Sgd::Sgd(std::vector<Parameter*> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    for (const Parameter* p : params_) velocity_.emplace_back(p->value.size(), 0.0);
}

void Sgd::step(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto w = params_[i]->value.data();
        const auto g = params_[i]->grad.data();
        auto& v = velocity_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = momentum_ * v[j] + g[j] + weight_decay_ * w[j];
            w[j] -= lr * v[j];
        }
    }
}

void Sgd::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

DivergenceError::DivergenceError(std::size_t epoch_, std::size_t step_, double loss)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch_) + ", step " + std::to_string(step_) +
                         ": loss " + io::format_double(loss)),
      epoch(epoch_),
      step(step_) {}

Accuracy accuracy_from_logits(const Tensor& logits, std::span<const int> labels, std::size_t k) {
    if (logits.rank() != 2 || logits.rows() != labels.size()) {
        throw ShapeError("logits " + to_string(logits.shape()) + " do not match " + std::to_string(labels.size()) +
                         " labels");
    }
    const std::size_t classes = logits.cols();
    if (k == 0 || k > classes) throw std::invalid_argument("k must be in 1.." + std::to_string(classes));
    Accuracy acc;
    acc.k = k;
    std::size_t hit1 = 0, hitk = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        if (y >= classes) throw std::invalid_argument("label " + std::to_string(y) + " out of range");
        const double ly = logits.at(i, y);
        std::size_t rank = 0;  // classes ranked ahead of the label
        for (std::size_t j = 0; j < classes; ++j) {
            const double lj = logits.at(i, j);
            if (lj > ly || (lj == ly && j < y)) ++rank;
        }
        hit1 += rank == 0;
        hitk += rank < k;
    }
    const double n = static_cast<double>(labels.size());
    acc.top1 = labels.empty() ? 0.0 : static_cast<double>(hit1) / n;
    acc.topk = labels.empty() ? 0.0 : static_cast<double>(hitk) / n;
    return acc;
}

Accuracy evaluate(const Model& model, const Dataset& data, std::size_t k, Affinity affinity, std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    std::vector<double> all;
    all.reserve(data.size() * model.spec().num_classes);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        idx.resize(std::min(batch_size, data.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        Tape tape;
        ForwardOptions opts;
        opts.affinity = affinity;
        const ForwardResult r = model.forward(tape, data.batch(idx), opts);
        const auto v = r.logits.value().data();
        all.insert(all.end(), v.begin(), v.end());
    }
    const Tensor logits({data.size(), model.spec().num_classes}, std::move(all));
    return accuracy_from_logits(logits, data.labels, k);
}

std::string TrainReport::to_csv() const {
    std::ostringstream out;
    out << "epoch,lr,loss,top1,topk,test_top1,test_topk\n";
    auto pct = [](double v) { return v < 0 ? std::string() : io::format_double(100.0 * v); };
    for (const auto& e : epochs) {
        out << e.epoch << "," << io::format_double(e.lr) << "," << io::format_double(e.loss) << "," << pct(e.top1)
            << "," << pct(e.topk) << "," << pct(e.test_top1) << "," << pct(e.test_topk) << "\n";
    }
    return out.str();
}

TrainReport train(Model& model, const DatasetSplit& data, const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    const ArchSpec& spec = model.spec();
    for (const Dataset* d : {&data.train, &data.test}) {
        if (d->image_size != spec.input_size || d->classes != spec.num_classes || spec.input_channels != 1) {
            throw std::invalid_argument("dataset (" + std::to_string(d->image_size) + "px, " +
                                        std::to_string(d->classes) + " classes, 1 channel) does not fit model '" +
                                        spec.name + "'");
        }
    }
    const std::size_t k = std::min(config.top_k, spec.num_classes);
    std::vector<Parameter*> params;
    for (auto& [name, p] : model.named_parameters()) params.push_back(p);
    Sgd opt(params, config.momentum, config.weight_decay);

    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32), 2u};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);

    TrainReport report;
    report.k = k;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr_at(config, epoch);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        double hit1 = 0, hitk = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - start);
            const std::span<const std::size_t> idx(order.data() + start, n);
            std::vector<int> labels(n);
            for (std::size_t i = 0; i < n; ++i) labels[i] = data.train.labels[idx[i]];

            opt.zero_grad();
            Tape tape;
            ForwardOptions opts;
            opts.training = true;
            opts.affinity = config.affinity;
            const ForwardResult fr = model.forward_train(tape, data.train.batch(idx), opts);
            const Var loss = softmax_cross_entropy(fr.logits, labels);
            const double l = loss.value()[0];
            if (!std::isfinite(l)) throw DivergenceError(epoch, step, l);
            tape.backward(loss);
            opt.step(stats.lr);

            const Accuracy a = accuracy_from_logits(fr.logits.value(), labels, k);
            loss_sum += l * static_cast<double>(n);
            hit1 += a.top1 * static_cast<double>(n);
            hitk += a.topk * static_cast<double>(n);
            ++step;
        }
        for (const Parameter* p : params) {
            if (!p->value.all_finite()) throw DivergenceError(epoch, step, std::nan(""));
        }
        const double total = static_cast<double>(order.size());
        stats.loss = loss_sum / total;
        stats.top1 = hit1 / total;
        stats.topk = hitk / total;
        if (config.eval_every_epoch || epoch + 1 == config.epochs) {
            const Accuracy t = evaluate(model, data.test, k, config.affinity);
            stats.test_top1 = t.top1;
            stats.test_topk = t.topk;
        }
        report.epochs.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    report.train = evaluate(model, data.train, k, config.affinity);
    report.test = evaluate(model, data.test, k, config.affinity);
    return report;
}

}  // namespace cnl
