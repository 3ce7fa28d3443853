// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include "cnl/model.hpp"

#include <cmath>
#include <json.hpp>
#include <random>
#include <stdexcept>
#include <type_traits>

#include "cnl/io.hpp"

namespace cnl {

namespace {

constexpr const char* kCheckpointFormat = "cnl-checkpoint-1";

Parameter normal_param(Shape shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = dist(rng);
    return Parameter(std::move(t));
}

NormParams make_norm(const LayerSpec& l) {
    NormParams n{l.name, OutNorm(l.out_channels)};
    n.norm.gamma = Parameter(Tensor({l.out_channels}, 1.0));
    return n;
}

ConvParams make_conv(const LayerSpec& l, std::mt19937_64& rng) {
    ConvParams c;
    c.name = l.name;
    c.in_channels = l.in_channels;
    c.out_channels = l.out_channels;
    c.kernel = l.kernel;
    c.stride = l.stride;
    c.padding = l.padding;
    const std::size_t fan_in = l.kernel * l.kernel * l.in_channels;
    c.weight = normal_param({fan_in, l.out_channels}, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
    if (l.bias) c.bias = Parameter(Tensor({l.out_channels}));
    return c;
}

template <typename Self>
Var bind_param(Tape& tape, Self& self_param) {
    if constexpr (std::is_const_v<Self>) {
        return tape.constant(self_param.value);
    } else {
        return tape.param(self_param);
    }
}

enum class NormSite { backbone, nl, cnl };

struct NormUpdate {
    NormSite site = NormSite::backbone;
    std::size_t index = 0;
    std::vector<double> mean, var;
};

thread_local std::vector<NormUpdate>* pending_updates = nullptr;

}  // namespace

Model::Model(ArchSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    validate(spec_);
    if (!is_executable(spec_)) {
        throw std::invalid_argument("architecture '" + spec_.name +
                                    "' is analysis-only; only conv/norm/relu backbones execute");
    }
    std::mt19937_64 rng(seed);
    // Backbone and classifier first, so every insertion preset shares the same backbone
    // weights for a given seed.
    auto add_layers = [&](const std::vector<LayerSpec>& layers) {
        for (const auto& l : layers) {
            if (l.kind == LayerKind::conv) convs_.push_back(make_conv(l, rng));
            if (l.kind == LayerKind::norm) norms_.push_back(make_norm(l));
        }
    };
    for (const auto& stage : spec_.stages) {
        add_layers(stage.entry);
        for (const auto& block : stage.blocks) {
            add_layers(block.body);
            add_layers(block.shortcut);
        }
    }
    const std::size_t c = spec_.feature_channels();
    fc_weight_ = normal_param({c, spec_.num_classes}, 1.0 / std::sqrt(static_cast<double>(c)), rng);
    if (spec_.classifier_bias) fc_bias_ = Parameter(Tensor({spec_.num_classes}));

    for (const auto& ins : spec_.insertions) {
        const Geometry host = block_geometry(spec_, ins.host, spec_.input_size);
        if (ins.kind == InsertionKind::nl) {
            nl_.push_back(NLParams::create(host.channels, ins.embed, rng));
        } else {
            std::vector<std::size_t> channels;
            for (const auto& r : ins.responses) channels.push_back(block_geometry(spec_, r, spec_.input_size).channels);
            cnl_.push_back(CNLParams::create(host.channels, channels, ins.embed, rng));
        }
    }
}

Model apply_insertions(const ArchSpec& spec, std::uint64_t seed) { return Model(spec, seed); }

template <typename Self>
ForwardResult Model::run(Self& self, Tape& tape, const Tensor& images, const ForwardOptions& options) {
    const ArchSpec& spec = self.spec_;
    if (images.rank() != 4 || images.dim(1) != spec.input_size || images.dim(2) != spec.input_size ||
        images.dim(3) != spec.input_channels) {
        throw ShapeError("model '" + spec.name + "' expects [B," + std::to_string(spec.input_size) + "," +
                         std::to_string(spec.input_size) + "," + std::to_string(spec.input_channels) + "] images, got " +
                         to_string(images.shape()));
    }
    const std::size_t batch = images.dim(0);
    ForwardResult result;
    Var x = tape.constant(images);
    std::size_t conv_index = 0, norm_index = 0;

    auto apply_layers = [&](const std::vector<LayerSpec>& layers, Var in) {
        for (const auto& l : layers) {
            if (l.kind == LayerKind::relu) {
                in = relu(in);
                continue;
            }
            if (l.kind == LayerKind::norm) {
                const std::size_t index = norm_index++;
                auto& n = self.norms_.at(index);
                const Shape s = in.shape();
                std::vector<double> mean, var;
                Var flat = reshape(in, {s[0] * s[1] * s[2], s[3]});
                Var y = batch_norm(flat, bind_param(tape, n.norm.gamma), bind_param(tape, n.norm.beta), n.norm,
                                   options.training, mean, var);
                if (options.training && pending_updates) {
                    pending_updates->push_back({NormSite::backbone, index, std::move(mean), std::move(var)});
                }
                in = reshape(y, s);
                continue;
            }
            auto& conv = self.convs_.at(conv_index++);
            const Shape& s = in.shape();
            Var cols = im2col(in, conv.kernel, conv.stride, conv.padding);
            Var y = matmul(cols, bind_param(tape, conv.weight));
            if (!conv.bias.value.empty()) y = add_bias(y, bind_param(tape, conv.bias));
            const std::size_t oh = (s[1] + 2 * conv.padding - conv.kernel) / conv.stride + 1;
            const std::size_t ow = (s[2] + 2 * conv.padding - conv.kernel) / conv.stride + 1;
            in = reshape(y, {batch, oh, ow, conv.out_channels});
        }
        return in;
    };

    auto as_map = [&](Var v) {
        const Shape& s = v.shape();
        return as_feature_map(reshape(v, {s[0] * s[1] * s[2], s[3]}), s[1], s[2], s[0]);
    };
    auto from_map = [&](const FeatureMap& m) {
        return reshape(m.values, {m.batch, m.height, m.width, m.channels});
    };

    // Tap activations collected for each CNL insertion, in tap order.
    std::vector<std::vector<FeatureMap>> taps(self.cnl_.size());

    for (const auto& stage : spec.stages) {
        x = apply_layers(stage.entry, x);
        for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
            const BlockSpec& block = stage.blocks[b];
            Var out = apply_layers(block.body, x);
            if (block.residual) {
                Var skip = block.shortcut.empty() ? x : apply_layers(block.shortcut, x);
                out = relu(add(out, skip));
            }
            x = out;
            const BlockRef here{stage.name, b + 1};

            std::size_t nl_index = 0, cnl_index = 0;
            for (const auto& ins : spec.insertions) {
                if (ins.kind == InsertionKind::nl) {
                    if (ins.host == here) {
                        auto& p = self.nl_[nl_index];
                        NLBinding binding;
                        if constexpr (std::is_const_v<Self>) {
                            binding = bind_frozen(tape, p);
                        } else {
                            binding = bind(tape, p);
                        }
                        AttentionOptions ao;
                        ao.affinity = options.affinity;
                        ao.training = options.training;
                        ao.capture = options.capture;
                        ao.query_id = to_string(here);
                        ao.response_ids = {to_string(here)};
                        AttentionResult r = nl_forward(as_map(x), binding, ao);
                        x = from_map(r.output);
                        for (auto& m : r.maps) result.maps.push_back(std::move(m));
                        if (options.training && pending_updates) {
                            pending_updates->push_back({NormSite::nl, nl_index, r.batch_mean, r.batch_var});
                        }
                    }
                    ++nl_index;
                    continue;
                }
                for (const auto& r : ins.responses) {
                    if (r == here) taps[cnl_index].push_back(as_map(x));
                }
                if (ins.host == here) {
                    auto& p = self.cnl_[cnl_index];
                    CNLBinding binding;
                    if constexpr (std::is_const_v<Self>) {
                        binding = bind_frozen(tape, p);
                    } else {
                        binding = bind(tape, p);
                    }
                    AttentionOptions ao;
                    ao.affinity = options.affinity;
                    ao.training = options.training;
                    ao.capture = options.capture;
                    ao.query_id = to_string(here);
                    for (const auto& t : ins.responses) ao.response_ids.push_back(to_string(t));
                    AttentionResult res = cnl_forward(as_map(x), taps[cnl_index], binding, ao);
                    x = from_map(res.output);
                    for (auto& m : res.maps) result.maps.push_back(std::move(m));
                    if (options.training && pending_updates) {
                        pending_updates->push_back({NormSite::cnl, cnl_index, res.batch_mean, res.batch_var});
                    }
                }
                ++cnl_index;
            }
        }
    }

    const Shape& s = x.shape();
    Var pooled = group_mean_rows(reshape(x, {s[0] * s[1] * s[2], s[3]}), batch);
    Var logits = matmul(pooled, bind_param(tape, self.fc_weight_));
    if (!self.fc_bias_.value.empty()) logits = add_bias(logits, bind_param(tape, self.fc_bias_));
    result.logits = logits;
    return result;
}

ForwardResult Model::forward(Tape& tape, const Tensor& images, const ForwardOptions& options) const {
    std::vector<NormUpdate>* saved = pending_updates;
    pending_updates = nullptr;
    ForwardResult r = run(*this, tape, images, options);
    pending_updates = saved;
    return r;
}

ForwardResult Model::forward_train(Tape& tape, const Tensor& images, const ForwardOptions& options) {
    std::vector<NormUpdate> updates;
    std::vector<NormUpdate>* saved = pending_updates;
    pending_updates = &updates;
    ForwardResult r;
    try {
        r = run(*this, tape, images, options);
    } catch (...) {
        pending_updates = saved;
        throw;
    }
    pending_updates = saved;
    for (const auto& u : updates) {
        OutNorm& norm = u.site == NormSite::backbone ? norms_[u.index].norm
                        : u.site == NormSite::nl     ? nl_[u.index].out_norm
                                                     : cnl_[u.index].out_norm;
        norm.update_running(u.mean, u.var);
    }
    return r;
}

std::vector<std::pair<std::string, Parameter*>> Model::named_parameters() {
    std::vector<std::pair<std::string, Parameter*>> out;
    for (auto& c : convs_) {
        out.emplace_back(c.name + ".weight", &c.weight);
        if (!c.bias.value.empty()) out.emplace_back(c.name + ".bias", &c.bias);
    }
    for (auto& n : norms_) {
        out.emplace_back(n.name + ".gamma", &n.norm.gamma);
        out.emplace_back(n.name + ".beta", &n.norm.beta);
    }
    out.emplace_back("fc.weight", &fc_weight_);
    if (!fc_bias_.value.empty()) out.emplace_back("fc.bias", &fc_bias_);
    for (std::size_t i = 0; i < nl_.size(); ++i) {
        for (auto& [name, p] : nl_[i].named_parameters()) out.emplace_back("nl" + std::to_string(i + 1) + "." + name, p);
    }
    for (std::size_t i = 0; i < cnl_.size(); ++i) {
        for (auto& [name, p] : cnl_[i].named_parameters()) {
            out.emplace_back("cnl" + std::to_string(i + 1) + "." + name, p);
        }
    }
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t total = fc_weight_.value.size() + fc_bias_.value.size();
    for (const auto& c : convs_) total += c.weight.value.size() + c.bias.value.size();
    for (const auto& n : norms_) total += n.norm.gamma.value.size() + n.norm.beta.value.size();
    for (const auto& p : nl_) total += p.parameter_count();
    for (const auto& p : cnl_) total += p.parameter_count();
    return total;
}

void Model::zero_grad() {
    for (auto& [name, p] : named_parameters()) p->zero_grad();
}

void Model::save(const std::filesystem::path& path) const {
    using json = nlohmann::ordered_json;
    json params = json::object();
    // named_parameters() is non-const only because it hands out mutable pointers.
    auto& self = const_cast<Model&>(*this);
    for (auto& [name, p] : self.named_parameters()) {
        params[name] = json{{"shape", p->value.shape()}, {"data", p->value.values()}};
    }
    json norms = json::object();
    for (const auto& n : norms_) {
        norms[n.name] = json{{"running_mean", n.norm.running_mean}, {"running_var", n.norm.running_var}};
    }
    for (std::size_t i = 0; i < nl_.size(); ++i) {
        norms["nl" + std::to_string(i + 1)] =
            json{{"running_mean", nl_[i].out_norm.running_mean}, {"running_var", nl_[i].out_norm.running_var}};
    }
    for (std::size_t i = 0; i < cnl_.size(); ++i) {
        norms["cnl" + std::to_string(i + 1)] =
            json{{"running_mean", cnl_[i].out_norm.running_mean}, {"running_var", cnl_[i].out_norm.running_var}};
    }
    json doc{{"format", kCheckpointFormat},
             {"arch", json::parse(to_json(spec_))},
             {"parameters", params},
             {"norm_state", norms}};
    io::write_text(path, doc.dump() + "\n");
}

Model Model::load(const std::filesystem::path& path) {
    using json = nlohmann::ordered_json;
    json doc;
    try {
        doc = json::parse(io::read_text(path));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    if (doc.value("format", std::string()) != kCheckpointFormat) {
        throw std::invalid_argument(path.string() + ": not a checkpoint file");
    }
    Model model(arch_from_json(doc.at("arch").dump()), 0);
    const json& params = doc.at("parameters");
    for (auto& [name, p] : model.named_parameters()) {
        if (!params.contains(name)) throw std::invalid_argument(path.string() + ": missing parameter " + name);
        const auto shape = params.at(name).at("shape").get<Shape>();
        if (shape != p->value.shape()) {
            throw std::invalid_argument(path.string() + ": parameter " + name + " has shape " + to_string(shape) +
                                        ", architecture needs " + to_string(p->value.shape()));
        }
        p->value = Tensor(shape, params.at(name).at("data").get<std::vector<double>>());
        p->zero_grad();
    }
    const json& norms = doc.at("norm_state");
    auto load_norm = [&](const std::string& key, OutNorm& norm) {
        const auto mean = norms.at(key).at("running_mean").get<std::vector<double>>();
        const auto var = norms.at(key).at("running_var").get<std::vector<double>>();
        if (mean.size() != norm.channels() || var.size() != norm.channels()) {
            throw std::invalid_argument(path.string() + ": norm state " + key + " has the wrong width");
        }
        norm.running_mean = mean;
        norm.running_var = var;
    };
    for (auto& n : model.norms_) load_norm(n.name, n.norm);
    for (std::size_t i = 0; i < model.nl_.size(); ++i) load_norm("nl" + std::to_string(i + 1), model.nl_[i].out_norm);
    for (std::size_t i = 0; i < model.cnl_.size(); ++i) {
        load_norm("cnl" + std::to_string(i + 1), model.cnl_[i].out_norm);
    }
    return model;
}

}  // namespace cnl
