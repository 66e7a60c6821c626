#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "behrt/behrt.hpp"

namespace behrt::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "1.0.0";

struct Options {
    std::string command;
    std::string config;
    std::string model_config;
    std::string cohort;
    std::string vocab;
    std::string catalog;
    std::string checkpoint;
    std::string resume;
    std::string out;
    std::string task;
    std::string what;
    std::string patient;
    std::string scores = "model";
    std::string precision;
    std::string manifest;
    std::uint64_t seed = 0;
    int threads = 1;
    long stop_after = -1;
    std::optional<int> patients;
};

// Records what a command read and wrote; written next to its outputs.
class Manifest {
public:
    Manifest(const Options& o, std::vector<std::string> argv) : start_(std::chrono::steady_clock::now()) {
        j_["tool"] = "behrt";
        j_["version"] = kToolVersion;
        j_["command"] = o.command;
        j_["argv"] = std::move(argv);
        j_["threads"] = o.threads;
        j_["seeds"] = ordered_json::object();
        j_["configs"] = ordered_json::object();
        j_["inputs"] = ordered_json::array();
        j_["outputs"] = ordered_json::array();
    }

    void seed(const std::string& name, std::uint64_t v) { j_["seeds"][name] = v; }
    void config(const std::string& name, const std::string& path) { j_["configs"][name] = path; }
    void input(const std::string& path) { j_["inputs"].push_back(path); }
    void output(const std::string& path) { j_["outputs"].push_back(path); }
    ordered_json& extra() { return j_; }

    void write(const std::string& path) {
        j_["outputs"].push_back(path);
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
        j_["wall_clock_seconds"] = elapsed.count();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ConfigError("cannot write manifest: " + path);
        out << j_.dump(2) << '\n';
    }

private:
    ordered_json j_;
    std::chrono::steady_clock::time_point start_;
};

namespace detail {

inline void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

inline void require_file(const std::string& path, const char* what) {
    require(!path.empty(), std::string("--") + what + " is required");
    require(fs::is_regular_file(path), std::string(what) + " file not found: " + path);
}

inline std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

inline void ensure_dir(const std::string& dir) {
    require(!dir.empty(), "--out is required");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory: " + dir);
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
}

// The cohort keeps only patients with at least five visits.
struct LoadedCohort {
    std::vector<data::PatientRecord> records;
    std::size_t filtered = 0;
};

inline LoadedCohort load_cohort(const Options& o, Manifest& m) {
    require_file(o.cohort, "cohort");
    m.input(o.cohort);
    LoadedCohort c;
    for (auto& r : data::read_cohort(o.cohort)) {
        if (r.num_visits() >= data::kMinVisits) {
            c.records.push_back(std::move(r));
        } else {
            ++c.filtered;
        }
    }
    require(!c.records.empty(), "cohort has no patient with at least 5 visits: " + o.cohort);
    m.extra()["patients_filtered"] = c.filtered;
    return c;
}

inline data::DiseaseVocab cohort_vocab(const Options& o, Manifest& m) {
    const std::string path = o.vocab.empty() ? o.cohort + ".vocab" : o.vocab;
    require_file(path, "vocab");
    m.input(path);
    return data::read_vocab(path);
}

inline std::vector<metrics::DiseaseLabel> disease_labels(const Options& o, const data::DiseaseVocab& vocab,
                                                         Manifest& m) {
    std::vector<metrics::DiseaseLabel> labels;
    for (const auto& code : vocab.codes()) labels.push_back({code, code, "-"});
    const std::string path = o.catalog.empty() ? o.cohort + ".catalog.tsv" : o.catalog;
    if (!o.catalog.empty()) require_file(path, "catalog");
    if (!fs::is_regular_file(path)) return labels;
    m.input(path);
    for (const auto& e : data::read_catalog(path)) {
        if (!vocab.contains(e.code)) continue;
        labels[static_cast<std::size_t>(vocab.id(e.code) - data::kNumSpecial)] = {e.code, e.description, e.chapter};
    }
    return labels;
}

inline training::TrainConfig train_config(const Options& o, Manifest& m) {
    training::TrainConfig c;
    if (!o.config.empty()) {
        require_file(o.config, "config");
        m.config("train", o.config);
        c = training::train_config_from_kv(KeyValueConfig::load(o.config));
    }
    c.seed = o.seed;
    return c;
}

// f32 unless asked otherwise; commands reading a checkpoint default to its dtype.
inline std::string resolve_precision(const Options& o, const std::string& checkpoint) {
    std::string p = o.precision;
    if (p.empty()) p = checkpoint.empty() ? "f32" : model::checkpoint_dtype(checkpoint);
    require(p == "f32" || p == "f64", "--precision must be f32 or f64");
    return p;
}

inline nlohmann::json vocab_json(const data::DiseaseVocab& v) { return nlohmann::json(v.codes()); }

inline data::DiseaseVocab checkpoint_vocab(const nlohmann::json& metadata, const std::string& path) {
    if (!metadata.contains("vocab")) throw FormatError("checkpoint has no vocabulary: " + path);
    return data::DiseaseVocab(metadata.at("vocab").get<std::vector<std::string>>());
}

inline void check_same_vocab(const data::DiseaseVocab& a, const data::DiseaseVocab& b) {
    require(a.codes() == b.codes(), "cohort vocabulary differs from the checkpoint vocabulary");
}

template <typename T>
model::Checkpoint<T> load_checkpoint(const std::string& path, Manifest& m) {
    require_file(path, "checkpoint");
    m.input(path);
    return model::load_checkpoint<T>(path);
}

// The portable, best-so-far model written as best.ckpt.
template <typename T>
model::Checkpoint<T> best_checkpoint(const training::Trainer<T>& tr, const data::DiseaseVocab& vocab,
                                     std::uint64_t split_seed, std::uint64_t seed, const nlohmann::json& extra) {
    model::Checkpoint<T> ck;
    ck.config = tr.model().config();
    ck.seed = seed;
    ck.params = tr.best_model().params();
    ck.metadata = extra;
    ck.metadata["vocab"] = vocab_json(vocab);
    ck.metadata["split_seed"] = split_seed;
    ck.metadata["task"] = data::to_string(tr.config().task);
    ck.metadata["best_step"] = tr.best_step();
    ck.metadata["selection_metric"] = tr.selection_metric();
    ck.metadata["best_metric"] = tr.best_metric();
    ck.metadata["train_config"] = training::to_json(tr.config());
    return ck;
}

template <typename T>
int finish_training(training::Trainer<T>& tr, const Options& o, Manifest& m, const data::DiseaseVocab& vocab,
                    std::uint64_t split_seed, const nlohmann::json& extra, std::ostream& out) {
    tr.run(o.stop_after);
    const std::string last = join(o.out, "last.ckpt"), best = join(o.out, "best.ckpt");
    const std::string metrics_path = join(o.out, "metrics.tsv");
    auto snap = tr.snapshot(o.seed);
    snap.metadata["vocab"] = vocab_json(vocab);
    snap.metadata["split_seed"] = split_seed;
    for (auto it = extra.begin(); it != extra.end(); ++it) snap.metadata[it.key()] = it.value();
    model::save_checkpoint(last, snap);
    model::save_checkpoint(best, best_checkpoint(tr, vocab, split_seed, o.seed, extra));
    write_text(metrics_path, tr.log().str());
    m.output(best);
    m.output(last);
    m.output(metrics_path);
    m.extra()["final_step"] = tr.step();
    m.extra()["best_step"] = tr.best_step();
    m.extra()["early_stopped"] = tr.stopped();
    m.write(join(o.out, "manifest.json"));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", tr.best_metric());
    out << o.command << ": step " << tr.step() << ", best step " << tr.best_step() << ", best val "
        << tr.selection_metric() << ' ' << buf << (tr.stopped() ? " (early stop)" : "") << '\n';
    return 0;
}

}  // namespace detail

inline int cmd_generate(const Options& o, Manifest& m, std::ostream& out) {
    detail::require_file(o.config, "config");
    detail::require(!o.out.empty(), "--out is required");
    m.config("generator", o.config);
    m.seed("seed", o.seed);
    auto cfg = data::load_generator_config(o.config);
    if (o.patients) cfg.num_patients = *o.patients;
    data::validate(cfg);
    const auto cohort = data::generate_cohort(cfg, o.seed);
    const fs::path parent = fs::path(o.out).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    data::write_cohort(o.out, cohort);
    data::write_vocab(o.out + ".vocab", data::generator_vocab(cfg));
    data::write_catalog(o.out + ".catalog.tsv", data::generator_catalog(cfg));
    m.output(o.out);
    m.output(o.out + ".vocab");
    m.output(o.out + ".catalog.tsv");
    m.extra()["patients"] = cohort.size();
    m.write(o.out + ".manifest.json");
    out << "generate: " << cohort.size() << " patients -> " << o.out << '\n';
    return 0;
}

template <typename T>
int cmd_pretrain(const Options& o, Manifest& m, std::ostream& out) {
    detail::ensure_dir(o.out);
    m.seed("seed", o.seed);
    const auto cohort = detail::load_cohort(o, m);
    const auto vocab = detail::cohort_vocab(o, m);
    auto tc = detail::train_config(o, m);
    detail::require(tc.task == data::Task::mlm, "pre-training config must have task = MLM");
    m.seed("split_seed", tc.split_seed);
    const auto split = data::split_cohort(cohort.records, tc.split_seed);

    std::optional<model::Checkpoint<T>> resume;
    model::ModelConfig mc;
    if (!o.resume.empty()) {
        resume = detail::load_checkpoint<T>(o.resume, m);
        mc = resume->config;
        detail::check_same_vocab(detail::checkpoint_vocab(resume->metadata, o.resume), vocab);
    } else {
        detail::require_file(o.model_config, "model-config");
        m.config("model", o.model_config);
        mc = model::model_config_from_kv(KeyValueConfig::load(o.model_config), vocab.size());
    }
    auto tr = training::make_pretrainer(model::BehrtModel<T>::initialize(mc, o.seed), split.train, split.val, vocab,
                                        tc, o.threads);
    if (resume) tr.restore(*resume);
    m.extra()["split"] = {{"train", split.train.size()}, {"val", split.val.size()}, {"test", split.test.size()}};
    return detail::finish_training(tr, o, m, vocab, tc.split_seed, nlohmann::json::object(), out);
}

template <typename T>
int cmd_finetune(const Options& o, Manifest& m, std::ostream& out) {
    detail::ensure_dir(o.out);
    m.seed("seed", o.seed);
    detail::require(!o.task.empty(), "--task is required");
    const data::Task task = data::parse_task(o.task);
    detail::require(task != data::Task::mlm, "--task must be T1, T2 or T3");
    auto tc = detail::train_config(o, m);
    if (!o.config.empty() && KeyValueConfig::load(o.config).has("task")) {
        detail::require(tc.task == task, std::string("train config task ") + data::to_string(tc.task) +
                                             " does not match --task " + o.task);
    }
    tc.task = task;

    const std::string base_path = o.resume.empty() ? o.checkpoint : o.resume;
    auto base = detail::load_checkpoint<T>(base_path, m);
    const auto cohort = detail::load_cohort(o, m);
    const auto vocab = detail::cohort_vocab(o, m);
    detail::check_same_vocab(detail::checkpoint_vocab(base.metadata, base_path), vocab);
    const std::uint64_t split_seed = base.metadata.value("split_seed", tc.split_seed);
    m.seed("split_seed", split_seed);
    const auto split = data::split_cohort(cohort.records, split_seed);
    const int max_len = base.config.max_len;
    const auto mode = base.config.position_mode;
    const auto train_ds = data::build_task_dataset(split.train, vocab, task, o.seed, max_len, mode);
    const auto val_ds = data::build_task_dataset(split.val, vocab, task, o.seed, max_len, mode);

    nlohmann::json extra = nlohmann::json::object();
    std::string base_checkpoint = o.checkpoint;
    if (!o.resume.empty()) base_checkpoint = base.metadata.value("base_checkpoint", std::string());
    extra["base_checkpoint"] = base_checkpoint;
    m.extra()["base_checkpoint"] = base_checkpoint;
    m.extra()["task"] = data::to_string(task);
    m.extra()["examples"] = {{"train", train_ds.examples.size()}, {"val", val_ds.examples.size()}};
    m.extra()["skipped"] = {{"train", train_ds.skipped}, {"val", val_ds.skipped}};
    out << "finetune: " << data::to_string(task) << " train " << train_ds.examples.size() << " (skipped "
        << train_ds.skipped << "), val " << val_ds.examples.size() << " (skipped " << val_ds.skipped << ")\n";

    auto tr = training::make_finetuner(model::BehrtModel<T>(base.config, base.params), train_ds, val_ds, tc,
                                       o.threads);
    if (!o.resume.empty()) tr.restore(base);
    return detail::finish_training(tr, o, m, vocab, split_seed, extra, out);
}

template <typename T>
int cmd_evaluate(const Options& o, Manifest& m, std::ostream& out) {
    detail::ensure_dir(o.out);
    m.seed("seed", o.seed);
    detail::require(!o.task.empty(), "--task is required");
    const data::Task task = data::parse_task(o.task);
    detail::require(task != data::Task::mlm, "--task must be T1, T2 or T3");
    detail::require(o.scores == "model" || o.scores == "oracle" || o.scores == "prevalence",
                    "--scores must be model, oracle or prevalence");
    const auto cohort = detail::load_cohort(o, m);
    const auto vocab = detail::cohort_vocab(o, m);

    std::optional<model::Checkpoint<T>> ck;
    if (o.scores == "model" || !o.checkpoint.empty()) {
        ck = detail::load_checkpoint<T>(o.checkpoint, m);
        detail::check_same_vocab(detail::checkpoint_vocab(ck->metadata, o.checkpoint), vocab);
        if (!o.model_config.empty()) {
            detail::require_file(o.model_config, "model-config");
            m.config("model", o.model_config);
            const auto mc = model::model_config_from_kv(KeyValueConfig::load(o.model_config), vocab.size());
            detail::require(mc == ck->config, "model config does not match the checkpoint");
        }
        const std::string ck_task = ck->metadata.value("task", std::string("MLM"));
        if (o.scores == "model") {
            detail::require(ck_task == o.task, "checkpoint was fine-tuned for " + ck_task + ", not " + o.task);
        }
    }
    const std::uint64_t split_seed = ck ? ck->metadata.value("split_seed", std::uint64_t{0}) : std::uint64_t{0};
    m.seed("split_seed", split_seed);
    const auto split = data::split_cohort(cohort.records, split_seed);
    const int max_len = ck ? ck->config.max_len : 64;
    const auto mode = ck ? ck->config.position_mode : data::PositionMode::per_visit;
    const auto test_ds = data::build_task_dataset(split.test, vocab, task, o.seed, max_len, mode);
    detail::require(!test_ds.examples.empty(), "test split has no admissible examples for " + o.task);
    const auto test = training::task_examples<T>(test_ds);

    std::vector<metrics::PredictionVector> preds;
    std::string model_name;
    if (o.scores == "model") {
        model_name = "BEHRT";
        preds = training::predict_examples(model::BehrtModel<T>(ck->config, ck->params), test, o.threads);
    } else {
        std::vector<double> freq(static_cast<std::size_t>(vocab.num_diseases()), 0.0);
        if (o.scores == "prevalence") {
            model_name = "prevalence";
            const auto train_ds = data::build_task_dataset(split.train, vocab, task, o.seed, max_len, mode);
            detail::require(!train_ds.examples.empty(), "training split has no admissible examples");
            for (const auto& ex : train_ds.examples)
                for (std::size_t i = 0; i < freq.size(); ++i) freq[i] += ex.label[i];
            for (auto& f : freq) f /= static_cast<double>(train_ds.examples.size());
        } else {
            model_name = "oracle";
        }
        for (const auto& ex : test) {
            metrics::PredictionVector p;
            p.patient_id = ex.patient_id;
            p.labels.assign(ex.label.begin(), ex.label.end());
            if (o.scores == "oracle") {
                p.scores.assign(ex.label.begin(), ex.label.end());
            } else {
                p.scores = freq;
            }
            preds.push_back(std::move(p));
        }
    }

    const auto report = metrics::per_patient_report(preds);
    const std::string summary = detail::join(o.out, "summary.tsv");
    const std::string diseases = detail::join(o.out, "diseases.tsv");
    {
        std::ofstream s(summary, std::ios::binary);
        if (!s) throw ConfigError("cannot write " + summary);
        metrics::write_summary_header(s);
        metrics::write_summary_row(s, model_name, data::to_string(task), report);
    }
    {
        std::ofstream d(diseases, std::ios::binary);
        if (!d) throw ConfigError("cannot write " + diseases);
        metrics::write_disease_report(d, metrics::per_disease_report(preds), detail::disease_labels(o, vocab, m));
    }
    m.output(summary);
    m.output(diseases);
    m.extra()["task"] = data::to_string(task);
    m.extra()["scores"] = o.scores;
    m.extra()["test_examples"] = test.size();
    m.extra()["test_skipped"] = test_ds.skipped;
    m.write(detail::join(o.out, "manifest.json"));
    out << "evaluate: " << model_name << ' ' << data::to_string(task) << " APS " << metrics::fixed6(report.mean_aps)
        << " AUROC " << metrics::fixed6(report.mean_auroc) << " over " << report.patients_used << " patients\n";
    return 0;
}

template <typename T>
int cmd_export(const Options& o, Manifest& m, std::ostream& out) {
    detail::require(!o.out.empty(), "--out is required");
    detail::require(o.what == "embeddings" || o.what == "attention", "--what must be embeddings or attention");
    const auto ck = detail::load_checkpoint<T>(o.checkpoint, m);
    const auto vocab = detail::checkpoint_vocab(ck.metadata, o.checkpoint);
    const model::BehrtModel<T> net(ck.config, ck.params);
    const fs::path parent = fs::path(o.out).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ostringstream text;
    if (o.what == "embeddings") {
        model::write_disease_embeddings(text, net, vocab);
    } else {
        detail::require(!o.patient.empty(), "--patient is required for attention export");
        detail::require_file(o.cohort, "cohort");
        m.input(o.cohort);
        const auto records = data::read_cohort(o.cohort);
        const data::PatientRecord* rec = nullptr;
        for (const auto& r : records)
            if (r.patient_id == o.patient) rec = &r;
        detail::require(rec != nullptr, "unknown patient: " + o.patient);
        const auto seq = data::build_sequence(*rec, vocab, ck.config.max_len, ck.config.position_mode);
        model::write_attention_grid(text, model::extract_attention(net.attentions(seq)), model::token_labels(seq, vocab));
        m.extra()["patient"] = o.patient;
    }
    detail::write_text(o.out, text.str());
    m.output(o.out);
    m.extra()["what"] = o.what;
    m.write(o.out + ".manifest.json");
    out << "export: " << o.what << " -> " << o.out << '\n';
    return 0;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

namespace detail {

inline int replay(const Options& o, std::ostream& out, std::ostream& err) {
    require_file(o.manifest, "manifest");
    std::ifstream in(o.manifest);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("manifest " + o.manifest + ": " + e.what());
    }
    if (!j.contains("argv") || !j.at("argv").is_array()) throw ConfigError("manifest has no argv: " + o.manifest);
    auto argv = j.at("argv").get<std::vector<std::string>>();
    require(argv.size() >= 2 && argv[1] != "replay", "manifest does not describe a replayable command");
    return run(argv, out, err);
}

// Dispatch on scalar type.
template <template <typename> class Cmd>
int with_precision(const std::string& p, const Options& o, Manifest& m, std::ostream& out) {
    m.extra()["precision"] = p;
    return p == "f64" ? Cmd<double>{}(o, m, out) : Cmd<float>{}(o, m, out);
}

template <typename T> struct Pretrain { int operator()(const Options& o, Manifest& m, std::ostream& s) { return cmd_pretrain<T>(o, m, s); } };
template <typename T> struct Finetune { int operator()(const Options& o, Manifest& m, std::ostream& s) { return cmd_finetune<T>(o, m, s); } };
template <typename T> struct Evaluate { int operator()(const Options& o, Manifest& m, std::ostream& s) { return cmd_evaluate<T>(o, m, s); } };
template <typename T> struct Export { int operator()(const Options& o, Manifest& m, std::ostream& s) { return cmd_export<T>(o, m, s); } };

inline void common(CLI::App* sub, Options& o, bool seeded) {
    sub->add_option("--threads", o.threads, "Worker threads (1 = reproducible)")->check(CLI::PositiveNumber);
    sub->add_option("--precision", o.precision, "Scalar type")->check(CLI::IsMember({"f32", "f64"}));
    if (seeded) sub->add_option("--seed", o.seed, "Random seed")->required();
}

}  // namespace detail

// Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"BEHRT: transformer models over synthetic electronic health records", "behrt"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    auto* gen = app.add_subcommand("generate", "Generate a synthetic cohort");
    gen->add_option("--config", o.config, "Generator config (JSON)")->required();
    gen->add_option("--out", o.out, "Cohort file to write")->required();
    gen->add_option("--patients", o.patients, "Override the configured patient count");
    detail::common(gen, o, true);

    auto* pre = app.add_subcommand("pretrain", "Masked-language-model pre-training");
    pre->add_option("--cohort", o.cohort, "Cohort file")->required();
    pre->add_option("--model-config", o.model_config, "Model config (key = value)");
    pre->add_option("--config", o.config, "Train config (key = value)");
    pre->add_option("--vocab", o.vocab, "Vocabulary file (default: <cohort>.vocab)");
    pre->add_option("--out", o.out, "Output directory")->required();
    pre->add_option("--resume", o.resume, "Continue from a last.ckpt");
    pre->add_option("--stop-after", o.stop_after, "Pause after this step");
    detail::common(pre, o, true);

    auto* fine = app.add_subcommand("finetune", "Fine-tune a pre-trained model on T1, T2 or T3");
    fine->add_option("--checkpoint", o.checkpoint, "Pre-trained checkpoint");
    fine->add_option("--cohort", o.cohort, "Cohort file")->required();
    fine->add_option("--task", o.task, "T1, T2 or T3")->required();
    fine->add_option("--config", o.config, "Train config (key = value)");
    fine->add_option("--vocab", o.vocab, "Vocabulary file (default: <cohort>.vocab)");
    fine->add_option("--out", o.out, "Output directory")->required();
    fine->add_option("--resume", o.resume, "Continue from a last.ckpt");
    fine->add_option("--stop-after", o.stop_after, "Pause after this step");
    detail::common(fine, o, true);

    auto* eval = app.add_subcommand("evaluate", "Per-patient and per-disease reports on the test split");
    eval->add_option("--checkpoint", o.checkpoint, "Fine-tuned checkpoint");
    eval->add_option("--cohort", o.cohort, "Cohort file")->required();
    eval->add_option("--task", o.task, "T1, T2 or T3")->required();
    eval->add_option("--model-config", o.model_config, "Model config the checkpoint must match");
    eval->add_option("--vocab", o.vocab, "Vocabulary file (default: <cohort>.vocab)");
    eval->add_option("--catalog", o.catalog, "Disease catalog (default: <cohort>.catalog.tsv)");
    eval->add_option("--scores", o.scores, "model, oracle or prevalence");
    eval->add_option("--out", o.out, "Output directory")->required();
    detail::common(eval, o, true);

    auto* exp = app.add_subcommand("export", "Export disease embeddings or an attention grid");
    exp->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required();
    exp->add_option("--what", o.what, "embeddings or attention")->required();
    exp->add_option("--cohort", o.cohort, "Cohort file (attention)");
    exp->add_option("--patient", o.patient, "Patient id (attention)");
    exp->add_option("--out", o.out, "Output file")->required();
    detail::common(exp, o, false);

    auto* rep = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    rep->add_option("--manifest", o.manifest, "Manifest file")->required();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (rep->parsed()) return detail::replay(o, out, err);
        for (auto* sub : app.get_subcommands()) o.command = sub->get_name();
        Manifest m(o, args);
        if (gen->parsed()) return cmd_generate(o, m, out);
        if (pre->parsed()) return detail::with_precision<detail::Pretrain>(detail::resolve_precision(o, o.resume), o, m, out);
        if (fine->parsed()) {
            return detail::with_precision<detail::Finetune>(
                detail::resolve_precision(o, o.resume.empty() ? o.checkpoint : o.resume), o, m, out);
        }
        if (eval->parsed()) return detail::with_precision<detail::Evaluate>(detail::resolve_precision(o, o.checkpoint), o, m, out);
        if (exp->parsed()) return detail::with_precision<detail::Export>(detail::resolve_precision(o, o.checkpoint), o, m, out);
    } catch (const NumericError& e) {
        err << "behrt: numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "behrt: " << e.what() << '\n';
        return 2;
    }
    return 2;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace behrt::cli
