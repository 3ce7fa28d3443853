// Copyright 2026 The CNL Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <ostream>
#include <set>
#include <sstream>

#include "cnl/analysis.hpp"
#include "cnl/attention_io.hpp"
#include "cnl/gradient_suite.hpp"
#include "cnl/io.hpp"
#include "cnl/model.hpp"
#include "cnl/train.hpp"

namespace cnl::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

/// Flat JSON object whose keys are long option names, e.g. {"seed": 3, "channels": [4, 8]}.
/// Underscores in keys stand for dashes. A run manifest is accepted too: its "config"
/// block is used and its "command" key ignored.
std::vector<std::string> config_args(const std::string& file) {
    json j;
    try {
        j = json::parse(io::read_text(file));
    } catch (const json::exception& e) {
        throw CLI::ConversionError("config file " + file + ": " + e.what());
    } catch (const std::runtime_error& e) {
        throw CLI::FileError(e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file " + file + ": expected a JSON object");
    if (j.contains("tool") && j.contains("config")) j = json(j.at("config"));
    auto scalar = [&](const std::string& key, const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_number() || v.is_boolean()) return v.dump();
        throw CLI::ConversionError("config file " + file + ": key '" + key + "' must hold a scalar or a list");
    };
    std::vector<std::string> out;
    for (const auto& [key, value] : j.items()) {
        if (key == "command") continue;
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (value.is_boolean()) {
            if (value.get<bool>()) out.push_back(flag);
            continue;
        }
        if ((value.is_array() || value.is_string()) && value.empty()) continue;
        out.push_back(flag);
        if (value.is_array()) {
            for (const auto& v : value) out.push_back(scalar(key, v));
        } else {
            out.push_back(scalar(key, value));
        }
    }
    return out;
}

/// Replaces "--config FILE" with the file's options, skipping any option also given on the
/// command line.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::vector<std::string> rest, files;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config", 1, 0);
            files.push_back(args[++i]);
        } else if (args[i].rfind("--config=", 0) == 0) {
            files.push_back(args[i].substr(9));
        } else {
            rest.push_back(args[i]);
        }
    }
    std::set<std::string> given;
    for (const auto& a : rest) {
        if (a.rfind("--", 0) == 0) given.insert(a.substr(0, a.find('=')));
    }
    for (const auto& file : files) {
        const std::vector<std::string> extra = config_args(file);
        for (std::size_t i = 0; i < extra.size();) {
            std::size_t next = i + 1;
            while (next < extra.size() && extra[next].rfind("--", 0) != 0) ++next;
            if (!given.count(extra[i])) {
                given.insert(extra[i]);
                rest.insert(rest.end(), extra.begin() + static_cast<std::ptrdiff_t>(i),
                            extra.begin() + static_cast<std::ptrdiff_t>(next));
            }
            i = next;
        }
    }
    return rest;
}

// ---- shared helpers ---------------------------------------------------------

struct Resolved {
    ArchSpec arch;
    std::size_t input = 0;
    std::size_t classes = 0;
};

bool is_builtin(const std::string& spec) { return spec == "resnet50" || spec == "resnet101" || spec == "toy"; }

Resolved resolve_arch(const RunConfig& c) {
    Resolved r;
    if (c.spec == "resnet50" || c.spec == "resnet101") {
        r.input = c.input ? c.input : 224;
        r.classes = c.classes ? c.classes : 1000;
        r.arch = resnet_spec(c.spec == "resnet50" ? 50 : 101, r.input, r.classes);
    } else if (c.spec == "toy") {
        r.input = c.input ? c.input : 64;
        r.classes = c.classes ? c.classes : 4;
        r.arch = toy_spec(c.channels, r.input, r.classes, c.blocks);
    } else {
        if (!fs::exists(c.spec)) {
            throw std::invalid_argument("--spec '" + c.spec + "' is neither resnet50, resnet101, toy nor an existing file");
        }
        r.arch = arch_from_json(io::read_text(c.spec));
        if (c.classes && c.classes != r.arch.num_classes) {
            throw std::invalid_argument("--classes " + std::to_string(c.classes) + " conflicts with the file's " +
                                        std::to_string(r.arch.num_classes));
        }
        r.input = c.input ? c.input : r.arch.input_size;
        r.arch.input_size = r.input;
        r.classes = r.arch.num_classes;
    }
    if (!c.preset.empty()) {
        r.arch = with_preset(std::move(r.arch), c.preset, c.ce);
    } else if (is_builtin(c.spec) && c.ce != 0) {
        throw std::invalid_argument("--ce needs a preset with insertions");
    }
    validate(r.arch);
    // Surfaces a spatial size too small for the stride chain before any work starts.
    stage_geometries(r.arch, r.input);
    return r;
}

json config_json(const RunConfig& c) {
    json j{{"command", c.command}, {"seed", c.seed}, {"out", c.out}, {"mode", c.mode}};
    if (c.command != "gradcheck") {
        j["spec"] = c.spec;
        j["preset"] = c.preset;
        j["input"] = c.input;
        j["classes"] = c.classes;
        j["ce"] = c.ce;
    }
    if (c.command == "analyze") j["convention"] = c.convention;
    if (c.command == "train" || c.command == "attn-export" || c.spec == "toy") {
        j["channels"] = c.channels;
        j["blocks"] = c.blocks;
    }
    if (c.command == "gradcheck") {
        j["rounds"] = c.rounds;
        j["threshold"] = c.threshold;
    }
    if (c.command == "train") {
        j["epochs"] = c.epochs;
        j["batch"] = c.batch;
        j["lr"] = c.lr;
        j["decay"] = c.decay;
        j["momentum"] = c.momentum;
        j["weight-decay"] = c.weight_decay;
        j["train-count"] = c.train_count;
        j["test-count"] = c.test_count;
        j["noise"] = c.noise;
        j["dump-data"] = c.dump_data;
    }
    if (c.command == "attn-export") {
        j["checkpoint"] = c.checkpoint;
        j["image"] = c.image;
        j["query"] = c.query;
    }
    return j;
}

void write_manifest(const RunConfig& c, const Resolved* arch, const std::vector<std::string>& outputs,
                    const json& extra = json::object()) {
    json m{{"tool", "cnl"}, {"format", 1}, {"config", config_json(c)}};
    if (arch) {
        m["resolved"] = json{{"architecture", arch->arch.name},
                             {"input", arch->input},
                             {"classes", arch->classes},
                             {"insertions", arch->arch.insertions.size()}};
    }
    for (const auto& [k, v] : extra.items()) m[k] = v;
    m["outputs"] = outputs;
    io::write_text(fs::path(c.out) / "manifest.json", m.dump(2) + "\n");
}

SyntheticDatasetSpec dataset_spec(const RunConfig& c, const Resolved& r) {
    SyntheticDatasetSpec d = SyntheticDatasetSpec::with_classes(r.classes);
    d.image_size = r.input;
    d.noise = c.noise;
    d.train_count = c.train_count;
    d.test_count = c.test_count;
    return d;
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
    return buf;
}

// ---- commands ---------------------------------------------------------------

int cmd_analyze(const RunConfig& c, std::ostream& out) {
    const Resolved r = resolve_arch(c);
    const FlopConvention conv = parse_convention(c.convention);
    const CostReport report = cost_report(r.arch, r.input, conv);
    std::string text = report.to_table();
    const auto notes = reference_notes(r.arch, r.input);
    if (!notes.empty()) {
        text += "reference:\n";
        for (const auto& n : notes) text += "  " + n + "\n";
    }
    const fs::path dir(c.out);
    io::write_text(dir / "cost.csv", report.to_csv());
    io::write_text(dir / "cost.txt", text);
    json extra{{"param_count", report.param_count},
               {"flop_count", report.flop_count},
               {"attention_entries", report.attention_entries}};
    if (auto red = report.memory_reduction()) extra["memory_reduction"] = *red;
    write_manifest(c, &r, {"cost.csv", "cost.txt"}, extra);
    out << text;
    return kOk;
}

int cmd_gradcheck(const RunConfig& c, std::ostream& out, std::ostream& err) {
    GradientSuiteOptions opts;
    opts.seed = c.seed;
    opts.rounds = c.rounds;
    opts.threshold = c.threshold;
    opts.corrupt_op = c.corrupt;
    if (c.mode == "both") {
        opts.modes = {Affinity::dot_mean, Affinity::softmax};
    } else {
        opts.modes = {parse_affinity(c.mode)};
    }
    if (!(c.threshold > 0)) throw std::invalid_argument("--threshold must be positive");
    const std::vector<GradientCheck> checks = run_gradient_suite(opts);

    std::ostringstream csv;
    csv << "op,mode,norm,wrt,seed,elements,rel_error,passed\n";
    std::size_t failed = 0;
    double worst = 0;
    for (const auto& g : checks) {
        csv << g.op << "," << g.mode << "," << g.norm << "," << io::csv_escape(g.wrt) << "," << g.seed << ","
            << g.elements << "," << io::format_double(g.rel_error) << "," << (g.passed ? "1" : "0") << "\n";
        failed += !g.passed;
        worst = std::max(worst, g.rel_error);
    }
    io::write_text(fs::path(c.out) / "gradcheck.csv", csv.str());
    write_manifest(c, nullptr, {"gradcheck.csv"},
                   json{{"checks", checks.size()}, {"failed", failed}, {"max_rel_error", worst}});
    out << checks.size() << " gradient checks, " << failed << " failed, max relative error " << worst << "\n";
    if (failed == 0) return kOk;

    std::vector<const GradientCheck*> bad;
    for (const auto& g : checks) {
        if (!g.passed) bad.push_back(&g);
    }
    std::sort(bad.begin(), bad.end(), [](auto* a, auto* b) { return a->rel_error > b->rel_error; });
    err << "gradient check failed; worst offenders:\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, bad.size()); ++i) {
        const auto& g = *bad[i];
        err << "  " << g.op << " [" << g.mode << ", " << g.norm << "] d/d" << g.wrt << " seed " << g.seed
            << ": rel error " << g.rel_error << "\n";
    }
    return kVerificationFailure;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
    const Resolved r = resolve_arch(c);
    if (!is_executable(r.arch)) {
        throw std::invalid_argument("'" + r.arch.name + "' is analysis-only; train needs an executable (toy) backbone");
    }
    const DatasetSplit data = generate_dataset(dataset_spec(c, r), c.seed);

    TrainConfig base;
    base.batch_size = c.batch;
    base.base_lr = c.lr;
    base.decay_factor = c.decay;
    base.momentum = c.momentum;
    base.weight_decay = c.weight_decay;
    base.affinity = parse_affinity(c.mode);
    base.seed = c.seed;
    const TrainConfig cfg = base.scaled(c.epochs);

    Model model(r.arch, c.seed);
    const fs::path dir(c.out);
    std::vector<std::string> outputs{"train.csv", "final.csv", "checkpoint.json"};
    if (c.dump_data) {
        dump_dataset(data.train, dir / "data", "train");
        dump_dataset(data.test, dir / "data", "test");
        outputs.push_back("data/");
    }
    out << r.arch.name << " (" << (c.preset.empty() ? "file" : c.preset) << "), " << model.parameter_count()
        << " parameters, " << cfg.epochs << " epochs, warmup " << cfg.warmup_epochs << ", milestones";
    for (auto m : cfg.milestones) out << " " << m;
    out << "\n";
    const TrainReport report = train(model, data, cfg, [&](const EpochStats& e) {
        out << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.loss << " train " << pct(e.top1);
        if (e.test_top1 >= 0) out << " test " << pct(e.test_top1);
        out << "\n";
    });
    io::write_text(dir / "train.csv", report.to_csv());
    std::ostringstream fin;
    fin << "split,top1,top" << report.k << "\n";
    fin << "train," << io::format_double(100 * report.train.top1) << "," << io::format_double(100 * report.train.topk)
        << "\n";
    fin << "test," << io::format_double(100 * report.test.top1) << "," << io::format_double(100 * report.test.topk)
        << "\n";
    io::write_text(dir / "final.csv", fin.str());
    model.save(dir / "checkpoint.json");
    write_manifest(c, &r, outputs,
                   json{{"schedule", json{{"epochs", cfg.epochs},
                                          {"warmup_epochs", cfg.warmup_epochs},
                                          {"milestones", cfg.milestones}}},
                        {"train_top1", report.train.top1},
                        {"test_top1", report.test.top1}});
    out << "final train " << pct(report.train.top1) << ", test " << pct(report.test.top1) << "\n";
    return kOk;
}

Tensor load_image(const RunConfig& c, const ArchSpec& arch) {
    const std::size_t s = arch.input_size;
    if (c.image == "zeros") return Tensor({1, s, s, arch.input_channels});
    if (c.image.rfind("sample:", 0) == 0) {
        const std::size_t index = std::stoul(c.image.substr(7));
        if (arch.input_channels != 1) throw std::invalid_argument("synthetic samples are single-channel");
        RunConfig dc = c;
        dc.train_count = 1;
        dc.test_count = std::max<std::size_t>(index + 1, 1);
        Resolved r{arch, s, arch.num_classes};
        const DatasetSplit data = generate_dataset(dataset_spec(dc, r), c.seed);
        const std::size_t idx[] = {index};
        return data.test.batch(idx);
    }
    const io::GrayImage img = io::read_pgm(c.image);
    if (img.width != s || img.height != s || arch.input_channels != 1) {
        throw std::invalid_argument("image " + c.image + " is " + std::to_string(img.width) + "x" +
                                    std::to_string(img.height) + "; the model takes " + std::to_string(s) + "x" +
                                    std::to_string(s) + " single-channel input");
    }
    Tensor t({1, s, s, 1});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = img.pixels[i] / 255.0;
    return t;
}

int cmd_attn_export(const RunConfig& c, bool arch_flags_given, std::ostream& out) {
    std::optional<Model> model;
    Resolved r;
    if (!c.checkpoint.empty()) {
        model.emplace(Model::load(c.checkpoint));
        if (arch_flags_given) {
            const Resolved expected = resolve_arch(c);
            if (to_json(expected.arch) != to_json(model->spec())) {
                throw std::invalid_argument("checkpoint " + c.checkpoint +
                                            " does not match the requested --spec/--preset architecture");
            }
        }
        r.arch = model->spec();
        r.input = r.arch.input_size;
        r.classes = r.arch.num_classes;
    } else {
        r = resolve_arch(c);
        if (!is_executable(r.arch)) throw std::invalid_argument("'" + r.arch.name + "' is analysis-only");
        model.emplace(r.arch, c.seed);
    }
    if (r.arch.insertions.empty()) throw std::invalid_argument("the model has no attention insertions to export");

    Tape tape;
    ForwardOptions opts;
    opts.capture = true;
    opts.affinity = parse_affinity(c.mode);
    const ForwardResult fr = model->forward(tape, load_image(c, r.arch), opts);

    // Spatial extents by block label, for reshaping query rows.
    auto extent = [&](const std::string& id) {
        for (const auto& stage : r.arch.stages) {
            for (std::size_t b = 1; b <= stage.blocks.size(); ++b) {
                const BlockRef ref{stage.name, b};
                if (to_string(ref) == id) return block_geometry(r.arch, ref, r.input);
            }
        }
        throw std::logic_error("unknown block label " + id);
    };

    const fs::path dir(c.out);
    std::vector<std::string> outputs;
    std::ostringstream index;
    index << "branch,query,response,nq,nr,response_height,response_width,matrix_file\n";
    for (std::size_t b = 0; b < fr.maps.size(); ++b) {
        const AttentionMap& m = fr.maps[b];
        const Geometry g = extent(m.response_id);
        const std::string tag = "b" + std::to_string(b + 1);
        write_attention_csv(dir / ("matrix_" + tag + ".csv"), m);
        write_attention_pgm(dir / ("matrix_" + tag + ".pgm"), m);
        outputs.push_back("matrix_" + tag + ".csv");
        outputs.push_back("matrix_" + tag + ".pgm");
        index << (b + 1) << "," << m.query_id << "," << m.response_id << "," << m.matrix.rows() << ","
              << m.matrix.cols() << "," << g.height << "," << g.width << ",matrix_" << tag << ".csv\n";

        std::vector<std::size_t> queries = c.query;
        if (queries.empty()) {
            queries.resize(m.matrix.rows());
            for (std::size_t q = 0; q < queries.size(); ++q) queries[q] = q;
        }
        for (std::size_t q : queries) {
            if (q >= m.matrix.rows()) {
                throw std::invalid_argument("query position " + std::to_string(q) + " outside 0.." +
                                            std::to_string(m.matrix.rows() - 1));
            }
            char name[64];
            std::snprintf(name, sizeof name, "q%04zu_%s", q, tag.c_str());
            write_query_map_csv(dir / (std::string(name) + ".csv"), m, q, g.height, g.width);
            write_query_map_pgm(dir / (std::string(name) + ".pgm"), m, q, g.height, g.width);
            outputs.push_back(std::string(name) + ".csv");
            outputs.push_back(std::string(name) + ".pgm");
        }
    }
    io::write_text(dir / "maps.csv", index.str());
    outputs.insert(outputs.begin(), "maps.csv");
    write_manifest(c, &r, outputs, json{{"branches", fr.maps.size()}});
    out << "exported " << fr.maps.size() << " attention maps to " << dir.string() << "\n";
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cross-layer non-local attention: cost analysis, gradient checks, toy training, map export",
                 "cnl"};
    app.require_subcommand(1);
    RunConfig c;

    auto common = [&](CLI::App* sub, bool arch, bool analysis) {
        sub->add_option("--config", "JSON file of option values; explicit flags win");
        sub->add_option("--seed", c.seed, "Seed for every random draw")->capture_default_str();
        sub->add_option("--out", c.out, "Output directory")->capture_default_str();
        sub->add_option("--mode", c.mode, "Attention affinity: dot-mean or softmax")->capture_default_str();
        if (arch) {
            sub->add_option("--spec", c.spec, "resnet50, resnet101, toy, or an architecture JSON file")->required();
            sub->add_option("--preset", c.preset, "baseline, nl5 or cnl5")
                ->check(CLI::IsMember({"baseline", "nl5", "cnl5"}));
            sub->add_option("--input", c.input, "Square input size (default: 224 for ResNets, 64 for toy)");
            sub->add_option("--classes", c.classes, "Classifier width (default: 1000 for ResNets, 4 for toy)");
            sub->add_option("--ce", c.ce, "Attention embedding width (0: C/2 for NL, Cq/8 for CNL)");
            sub->add_option("--channels", c.channels, "Toy backbone stage widths")->capture_default_str();
            sub->add_option("--blocks", c.blocks, "Toy backbone blocks per stage");
        }
        if (analysis) {
            sub->add_option("--convention", c.convention, "FLOPs per multiply-accumulate: mac1 or mac2")
                ->capture_default_str();
        }
    };

    CLI::App* analyze = app.add_subcommand("analyze", "Parameter, FLOP and attention-memory report");
    common(analyze, true, true);

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every attention gradient");
    common(gradcheck, false, false);
    gradcheck->get_option("--mode")->default_str("both");
    gradcheck->add_option("--rounds", c.rounds, "Random shape draws per combination")->capture_default_str();
    gradcheck->add_option("--threshold", c.threshold, "Maximum relative error")->capture_default_str();
    gradcheck->add_option("--corrupt", c.corrupt, "Perturb the analytic gradient of one op")->group("");

    CLI::App* trainc = app.add_subcommand("train", "Train a toy model on the synthetic two-scale dataset");
    common(trainc, true, false);
    trainc->add_option("--epochs", c.epochs, "Epochs; the default schedule is compressed to fit")->capture_default_str();
    trainc->add_option("--batch", c.batch, "Batch size")->capture_default_str();
    trainc->add_option("--lr", c.lr, "Base learning rate")->capture_default_str();
    trainc->add_option("--decay", c.decay, "Learning-rate multiplier at each milestone")->capture_default_str();
    trainc->add_option("--momentum", c.momentum, "SGD momentum")->capture_default_str();
    trainc->add_option("--weight-decay", c.weight_decay, "L2 weight decay")->capture_default_str();
    trainc->add_option("--train-count", c.train_count, "Training samples")->capture_default_str();
    trainc->add_option("--test-count", c.test_count, "Test samples")->capture_default_str();
    trainc->add_option("--noise", c.noise, "Gaussian pixel noise")->capture_default_str();
    trainc->add_flag("--dump-data", c.dump_data, "Also write the dataset as PGM files");

    CLI::App* exportc = app.add_subcommand("attn-export", "Write attention maps as CSV and PGM");
    common(exportc, true, false);
    exportc->get_option("--spec")->required(false);
    exportc->add_option("--checkpoint", c.checkpoint, "Checkpoint written by train");
    exportc->add_option("--image", c.image, "zeros, sample:<index>, or a PGM file")->capture_default_str();
    exportc->add_option("--query", c.query, "Query positions to export (default: all)");

    try {
        const std::vector<std::string> expanded = expand_config(args);
        std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kValidationError;
    }

    try {
        if (analyze->parsed()) {
            c.command = "analyze";
            if (c.preset.empty() && is_builtin(c.spec)) c.preset = "baseline";
            return cmd_analyze(c, out);
        }
        if (gradcheck->parsed()) {
            c.command = "gradcheck";
            if (gradcheck->get_option("--mode")->count() == 0) c.mode = "both";
            return cmd_gradcheck(c, out, err);
        }
        if (trainc->parsed()) {
            c.command = "train";
            if (c.preset.empty() && is_builtin(c.spec)) c.preset = "baseline";
            return cmd_train(c, out);
        }
        c.command = "attn-export";
        const bool arch_flags = exportc->get_option("--spec")->count() > 0 || exportc->get_option("--preset")->count() > 0;
        if (c.checkpoint.empty() && c.spec.empty()) {
            throw std::invalid_argument("attn-export needs --checkpoint or --spec");
        }
        if (c.preset.empty() && is_builtin(c.spec)) c.preset = "cnl5";
        return cmd_attn_export(c, arch_flags, out);
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << "\n";
        return kDiverged;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kValidationError;
    }
}

}  // namespace cnl::cli
