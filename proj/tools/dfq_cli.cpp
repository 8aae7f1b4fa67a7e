// dfq: train, evaluate, classify, quantize, generate synthetic data, serve.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dfq/data.hpp"
#include "dfq/errors.hpp"
#include "dfq/image.hpp"
#include "dfq/metrics.hpp"
#include "dfq/model_io.hpp"
#include "dfq/quantize.hpp"
#include "dfq/service.hpp"
#include "dfq/training.hpp"

namespace fs = std::filesystem;
using namespace dfq;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kModel = 3, kRuntime = 4 };

struct DataSource {
    std::string dir;
    std::size_t synthetic = 0;
    std::uint64_t seed = 0;

    DatasetPair load() const {
        if (!dir.empty()) {
            auto d = load_dataset(dir);
            if (d.train.skipped() + d.validation.skipped() > 0) {
                std::cerr << "skipped " << d.train.skipped() + d.validation.skipped() << " undecodable files\n";
            }
            return d;
        }
        return synth_dataset(synthetic, seed);
    }
};

std::string counts_text(const Dataset& ds) {
    const auto c = ds.class_counts();
    std::string s;
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        s += (i ? ", " : "") + std::string(kClassNames[i]) + "=" + std::to_string(c[i]);
    }
    return s;
}

struct TrainArgs {
    DataSource data;
    std::string out;
    std::string history;
    std::string checkpoint;
    std::string resume;
    TrainConfig cfg;
    bool no_augment = false;
};

int cmd_train(const TrainArgs& a) {
    TrainConfig cfg = a.cfg;
    cfg.seed = a.data.seed;
    if (a.no_augment) cfg.augment = AugmentConfig::disabled();
    cfg.validate();
    std::printf("train: lr=%g batch=%zu epochs=%zu width=%g seed=%llu augment=%s\n", cfg.learning_rate,
                cfg.batch_size, cfg.epochs, cfg.width, static_cast<unsigned long long>(cfg.seed),
                cfg.augment.any() ? "on" : "off");
    const DatasetPair data = a.data.load();
    std::printf("train set: %zu images (%s)\n", data.train.size(), counts_text(data.train).c_str());
    std::printf("validation set: %zu images (%s)\n", data.validation.size(), counts_text(data.validation).c_str());

    TrainState state = a.resume.empty() ? TrainState::fresh(build_network(cfg.width, cfg.seed)) : load_checkpoint(a.resume);
    if (!a.resume.empty()) std::printf("resumed from %s at epoch %zu\n", a.resume.c_str(), state.epochs_completed);

    const std::string history_path = a.history.empty() ? a.out + ".history.jsonl" : a.history;
    std::ofstream history(history_path, state.epochs_completed > 0 ? std::ios::app : std::ios::trunc);
    if (!history) throw std::runtime_error("cannot write " + history_path);

    auto on_epoch = [&](const EpochRecord& r, const TrainState& s) {
        std::printf("epoch %3zu  loss %.5f  train_acc %.4f  val_loss %.5f  val_acc %.4f\n", r.epoch, r.train_loss,
                    r.train_accuracy, r.val_loss, r.val_accuracy);
        std::fflush(stdout);
        history << to_json(r).dump() << "\n" << std::flush;
        if (!a.checkpoint.empty()) save_checkpoint(s, a.checkpoint);
    };
    const auto records = train(state, data.train, data.validation, cfg, on_epoch);
    save_model(state.net, a.out);
    std::printf("model written to %s (%zu parameters)\n", a.out.c_str(), state.net.parameter_count());
    std::printf("history written to %s (%zu records)\n", history_path.c_str(), records.size());
    if (const auto s = summarize(records)) {
        std::printf("final train accuracy %.4f, final validation accuracy %.4f, best validation accuracy %.4f (epoch %zu)\n",
                    s->final_train_accuracy, s->final_val_accuracy, s->best_val_accuracy, s->best_epoch);
    }
    return kOk;
}

struct EvalArgs {
    std::string model;
    DataSource data;
    std::string split = "validation";
    std::string report;
};

int cmd_eval(const EvalArgs& a) {
    const Network net = load_model(a.model);
    if (net.num_classes() != kNumClasses) {
        throw DataError("model has " + std::to_string(net.num_classes()) + " classes, dataset has " +
                        std::to_string(kNumClasses));
    }
    const DatasetPair data = a.data.load();
    const Dataset& ds = a.split == "train" ? data.train : data.validation;
    if (ds.empty()) throw DataError(a.split + " split has no images");
    const EvalResult r = evaluate(net, ds);
    const ClassReport report = compute_report(r.confusion);
    std::printf("%s split: %zu images, mean loss %.5f\n\n", a.split.c_str(), ds.size(), r.loss);
    std::fputs(render_text(r.confusion, report).c_str(), stdout);
    if (!a.report.empty()) {
        nlohmann::json doc = to_json(report);
        doc["confusion_matrix"] = to_json(r.confusion);
        doc["split"] = a.split;
        doc["loss"] = r.loss;
        std::ofstream out(a.report);
        if (!out) throw std::runtime_error("cannot write " + a.report);
        out << doc.dump(2) << "\n";
    }
    return kOk;
}

int cmd_classify(const std::string& model_path, const std::vector<std::string>& images) {
    const InferenceModel model = InferenceModel::load(model_path);
    const std::size_t size = model.input_shape()[0];
    int status = kOk;
    for (const auto& path : images) {
        Tensor img;
        try {
            img = decode_and_resize(read_file(path), size);
        } catch (const std::exception& e) {
            std::printf("%s\terror\t%s\n", path.c_str(), e.what());
            status = kData;
            continue;
        }
        const Tensor p = model.predict(reshape(img, img.shape().with_leading(1)));
        const std::size_t best = argmax_rows(p).front();
        std::printf("%s\t%s", path.c_str(), std::string(kClassNames[best]).c_str());
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            std::printf("\t%s=%.6f", std::string(kClassNames[c]).c_str(), static_cast<double>(p[c]));
        }
        std::printf("\n");
    }
    return status;
}

int cmd_quantize(const std::string& in, const std::string& out) {
    if (read_header(in).quantized()) {
        throw ModelFormatError(ModelErrorCode::Malformed, in + " is already quantized");
    }
    const Network net = load_model(in);
    const QuantizedModel qm = quantize_int8(net);
    save_quantized(qm, out);
    double worst = 0.0, worst_half_scale = 0.0, max_scale = 0.0;
    std::size_t q = 0;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const auto pi = net.parameter_index(i);
        if (pi < 0) continue;
        const double err = max_roundtrip_error(net.parameters()[static_cast<std::size_t>(pi)], qm.weights[q]);
        const double scale = qm.weights[q].scale;
        if (err > worst) {
            worst = err;
            worst_half_scale = scale / 2.0;
        }
        max_scale = std::max(max_scale, scale);
        std::printf("%-16s scale %.6e  max round-trip error %.6e  (bound %.6e)\n", net.layers()[i].name.c_str(), scale,
                    err, scale / 2.0);
        ++q;
    }
    const auto in_size = fs::file_size(in), out_size = fs::file_size(out);
    std::printf("float file %llu bytes, quantized file %llu bytes, ratio %.4f\n",
                static_cast<unsigned long long>(in_size), static_cast<unsigned long long>(out_size),
                static_cast<double>(out_size) / static_cast<double>(in_size));
    std::printf("max round-trip error %.6e (its tensor's scale/2 %.6e), max scale/2 %.6e\n", worst, worst_half_scale,
                max_scale / 2.0);
    return kOk;
}

int cmd_synth(std::size_t per_class, std::uint64_t seed, const std::string& out) {
    const DatasetPair d = synth_dataset(per_class, seed);
    write_dataset(out, d);
    std::printf("wrote %zu train and %zu validation images to %s\n", d.train.size(), d.validation.size(), out.c_str());
    return kOk;
}

std::atomic<InspectionService*> g_service{nullptr};

extern "C" void on_signal(int) {
    if (auto* s = g_service.load()) s->stop();
}

struct ServeArgs {
    std::string model;
    std::string addr = "127.0.0.1:8760";
    bool quantized = false;
    std::string ui_dir = "ui";
};

int cmd_serve(const ServeArgs& a) {
    const auto [host, port] = parse_address(a.addr);
    std::shared_ptr<const InferenceModel> model;
    if (a.quantized && !read_header(a.model).quantized()) {
        model = std::make_shared<InferenceModel>(quantize_int8(load_model(a.model)));
    } else {
        model = std::make_shared<InferenceModel>(InferenceModel::load(a.model));
    }
    ServiceOptions opt;
    opt.host = host;
    opt.port = port;
    opt.ui_dir = a.ui_dir;
    InspectionService service(model, opt);
    service.bind();
    std::printf("serving %s (%s, width %g) on http://%s:%d\n", a.model.c_str(), model->quantized() ? "int8" : "float",
                model->width(), host.c_str(), service.port());
    std::fflush(stdout);
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    service.run();
    g_service = nullptr;
    return kOk;
}

void add_data_options(CLI::App* cmd, DataSource& d, bool require) {
    auto* dir = cmd->add_option("--data", d.dir, "Dataset root with train/ and validation/ class folders");
    auto* syn = cmd->add_option("--synthetic", d.synthetic, "Use N generated images per class instead of --data")
                    ->check(CLI::PositiveNumber);
    dir->excludes(syn);
    syn->excludes(dir);
    cmd->add_option("--seed", d.seed, "Random seed")->capture_default_str();
    if (require) cmd->callback([dir, syn] {
        if (dir->count() == 0 && syn->count() == 0) throw CLI::RequiredError("--data or --synthetic");
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dragon fruit quality grading CNN"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train a network and write the model and epoch history");
    add_data_options(train_cmd, ta.data, true);
    train_cmd->add_option("--out", ta.out, "Output model file")->required();
    train_cmd->add_option("--width", ta.cfg.width, "Channel width multiplier in (0, 1]")->capture_default_str();
    train_cmd->add_option("--epochs", ta.cfg.epochs, "Total epochs")->capture_default_str();
    train_cmd->add_option("--batch", ta.cfg.batch_size, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", ta.cfg.learning_rate, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--micro-batch", ta.cfg.micro_batch, "Samples per forward/backward chunk (memory only)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    train_cmd->add_flag("--no-augment", ta.no_augment, "Disable the training augmentation suite");
    train_cmd->add_option("--history", ta.history, "Epoch history file (default: <out>.history.jsonl)");
    train_cmd->add_option("--checkpoint", ta.checkpoint, "Write a resumable checkpoint after every epoch");
    train_cmd->add_option("--resume", ta.resume, "Resume from a checkpoint")->check(CLI::ExistingFile);

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "Confusion matrix and per-class metrics for a model");
    eval_cmd->add_option("--model", ea.model, "Float model file")->required()->check(CLI::ExistingFile);
    add_data_options(eval_cmd, ea.data, true);
    eval_cmd->add_option("--split", ea.split, "Split to evaluate")
        ->capture_default_str()
        ->check(CLI::IsMember({"train", "validation"}));
    eval_cmd->add_option("--report", ea.report, "Write the report as JSON to this path");

    std::string classify_model;
    std::vector<std::string> classify_images;
    auto* classify_cmd = app.add_subcommand("classify", "Classify image files, one line per image");
    classify_cmd->add_option("--model", classify_model, "Model file (float or quantized)")
        ->required()
        ->check(CLI::ExistingFile);
    classify_cmd->add_option("images", classify_images, "PNG or JPEG files")->required();

    std::string q_in, q_out;
    auto* quantize_cmd = app.add_subcommand("quantize", "Write an int8 weight-quantized copy of a float model");
    quantize_cmd->add_option("--model", q_in, "Float model file")->required()->check(CLI::ExistingFile);
    quantize_cmd->add_option("--out", q_out, "Quantized output file")->required();

    std::size_t synth_per_class = 8;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth-data", "Write the synthetic dataset as PNG files");
    synth_cmd->add_option("--per-class", synth_per_class, "Images per class")->capture_default_str()->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
    synth_cmd->add_option("--out", synth_out, "Output dataset root")->required();

    ServeArgs sa;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP classification service");
    serve_cmd->add_option("--model", sa.model, "Model file")->required()->check(CLI::ExistingFile);
    serve_cmd->add_option("--addr", sa.addr, "Listen address HOST:PORT")->capture_default_str();
    serve_cmd->add_flag("--quantized", sa.quantized, "Serve int8 weights (quantizes a float file on load)");
    serve_cmd->add_option("--ui-dir", sa.ui_dir, "Static operator console files served under /ui")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*train_cmd) return cmd_train(ta);
        if (*eval_cmd) return cmd_eval(ea);
        if (*classify_cmd) return cmd_classify(classify_model, classify_images);
        if (*quantize_cmd) return cmd_quantize(q_in, q_out);
        if (*synth_cmd) return cmd_synth(synth_per_class, synth_seed, synth_out);
        if (*serve_cmd) return cmd_serve(sa);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const DecodeError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const ModelFormatError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return kModel;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}
