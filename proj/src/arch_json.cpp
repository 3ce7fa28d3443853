// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include <json.hpp>

#include "cnl/backbone.hpp"

namespace cnl {

using json = nlohmann::ordered_json;

namespace {

json layer_json(const LayerSpec& l) {
    return json{{"name", l.name},       {"kind", std::string(to_string(l.kind))},
                {"in_channels", l.in_channels}, {"out_channels", l.out_channels},
                {"kernel", l.kernel},   {"stride", l.stride},
                {"padding", l.padding}, {"bias", l.bias}};
}

json layers_json(const std::vector<LayerSpec>& layers) {
    json out = json::array();
    for (const auto& l : layers) out.push_back(layer_json(l));
    return out;
}

json ref_json(const BlockRef& r) { return json{{"stage", r.stage}, {"block", r.block}}; }

LayerSpec parse_layer(const json& j) {
    LayerSpec l;
    l.name = j.at("name").get<std::string>();
    l.kind = parse_layer_kind(j.at("kind").get<std::string>());
    l.in_channels = j.value("in_channels", std::size_t{0});
    l.out_channels = j.value("out_channels", l.in_channels);
    l.kernel = j.value("kernel", std::size_t{1});
    l.stride = j.value("stride", std::size_t{1});
    l.padding = j.value("padding", std::size_t{0});
    l.bias = j.value("bias", false);
    return l;
}

std::vector<LayerSpec> parse_layers(const json& j, const char* key) {
    std::vector<LayerSpec> out;
    if (!j.contains(key)) return out;
    for (const auto& l : j.at(key)) out.push_back(parse_layer(l));
    return out;
}

BlockRef parse_ref(const json& j) { return BlockRef{j.at("stage").get<std::string>(), j.at("block").get<std::size_t>()}; }

}  // namespace

std::string to_json(const ArchSpec& spec) {
    json stages = json::array();
    for (const auto& s : spec.stages) {
        json blocks = json::array();
        for (const auto& b : s.blocks) {
            blocks.push_back(json{{"name", b.name},
                                  {"residual", b.residual},
                                  {"body", layers_json(b.body)},
                                  {"shortcut", layers_json(b.shortcut)}});
        }
        stages.push_back(json{{"name", s.name},
                              {"out_channels", s.out_channels},
                              {"spatial_stride", s.spatial_stride},
                              {"entry", layers_json(s.entry)},
                              {"blocks", blocks}});
    }
    json insertions = json::array();
    for (const auto& ins : spec.insertions) {
        json responses = json::array();
        for (const auto& r : ins.responses) responses.push_back(ref_json(r));
        insertions.push_back(json{{"kind", ins.kind == InsertionKind::nl ? "nl" : "cnl"},
                                  {"host", ref_json(ins.host)},
                                  {"responses", responses},
                                  {"embed", ins.embed}});
    }
    json doc{{"name", spec.name},
             {"input_channels", spec.input_channels},
             {"input_size", spec.input_size},
             {"num_classes", spec.num_classes},
             {"classifier_bias", spec.classifier_bias},
             {"stages", stages},
             {"insertions", insertions}};
    return doc.dump(2) + "\n";
}

ArchSpec arch_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("architecture JSON: ") + e.what());
    }
    try {
        ArchSpec spec;
        spec.name = doc.value("name", std::string("custom"));
        spec.input_channels = doc.value("input_channels", std::size_t{3});
        spec.input_size = doc.at("input_size").get<std::size_t>();
        spec.num_classes = doc.at("num_classes").get<std::size_t>();
        spec.classifier_bias = doc.value("classifier_bias", true);
        for (const auto& s : doc.at("stages")) {
            StageSpec stage;
            stage.name = s.at("name").get<std::string>();
            stage.out_channels = s.at("out_channels").get<std::size_t>();
            stage.spatial_stride = s.value("spatial_stride", std::size_t{1});
            stage.entry = parse_layers(s, "entry");
            for (const auto& b : s.at("blocks")) {
                BlockSpec block;
                block.name = b.at("name").get<std::string>();
                block.residual = b.value("residual", false);
                block.body = parse_layers(b, "body");
                block.shortcut = parse_layers(b, "shortcut");
                stage.blocks.push_back(std::move(block));
            }
            spec.stages.push_back(std::move(stage));
        }
        if (doc.contains("insertions")) {
            for (const auto& i : doc.at("insertions")) {
                InsertionSpec ins;
                const std::string kind = i.at("kind").get<std::string>();
                if (kind == "nl") {
                    ins.kind = InsertionKind::nl;
                } else if (kind == "cnl") {
                    ins.kind = InsertionKind::cnl;
                } else {
                    throw std::invalid_argument("unknown insertion kind '" + kind + "'");
                }
                ins.host = parse_ref(i.at("host"));
                if (i.contains("responses")) {
                    for (const auto& r : i.at("responses")) ins.responses.push_back(parse_ref(r));
                }
                ins.embed = i.value("embed", std::size_t{0});
                spec.insertions.push_back(std::move(ins));
            }
        }
        validate(spec);
        return spec;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("architecture JSON: ") + e.what());
    }
}

}  // namespace cnl
