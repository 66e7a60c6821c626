#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "behrt/data/masking.hpp"
#include "behrt/data/record.hpp"
#include "behrt/data/sequence.hpp"
#include "behrt/data/tasks.hpp"
#include "behrt/data/vocab.hpp"
#include "behrt/errors.hpp"
#include "behrt/metrics/ranking.hpp"
#include "behrt/metrics/reports.hpp"
#include "behrt/model/behrt.hpp"
#include "behrt/model/checkpoint.hpp"
#include "behrt/parallel.hpp"
#include "behrt/rng.hpp"
#include "behrt/training/adam.hpp"
#include "behrt/training/losses.hpp"
#include "behrt/training/metric_log.hpp"
#include "behrt/training/train_config.hpp"

namespace behrt::training {

using model::BehrtModel;
using model::Checkpoint;
using model::ParamBinding;

template <typename T>
struct Example {
    data::TokenSequence input;
    std::vector<T> label;  // multi-hot over G for prediction tasks; empty for MLM
    std::string patient_id;
};

template <typename T>
std::vector<Example<T>> mlm_examples(const std::vector<data::PatientRecord>& records, const data::DiseaseVocab& vocab,
                                     int max_len, data::PositionMode mode = data::PositionMode::per_visit) {
    std::vector<Example<T>> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back({data::build_sequence(r, vocab, max_len, mode), {}, r.patient_id});
    return out;
}

template <typename T>
std::vector<Example<T>> task_examples(const data::TaskDataset& ds) {
    std::vector<Example<T>> out;
    out.reserve(ds.examples.size());
    for (const auto& ex : ds.examples) {
        out.push_back({ex.input, std::vector<T>(ex.label.begin(), ex.label.end()), ex.patient_id});
    }
    return out;
}

struct EvalResult {
    double loss = 0.0;
    double precision = 0.0;  // MLM: masked-token precision at 0.5
    double aps = 0.0;        // tasks: per-patient means
    double auroc = 0.0;
    std::size_t patients_used = 0;
    std::size_t skipped = 0;
};

// Sigmoid scores for every example, in order.
template <typename T>
std::vector<metrics::PredictionVector> predict_examples(const BehrtModel<T>& model, const std::vector<Example<T>>& set,
                                                        int threads = 1) {
    std::vector<metrics::PredictionVector> out(set.size());
    parallel_chunks(set.size(), threads, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i) {
            const auto probs = model.predict_label_probs(set[i].input);
            out[i].patient_id = set[i].patient_id;
            out[i].scores.assign(probs.begin(), probs.end());
            out[i].labels.assign(set[i].label.begin(), set[i].label.end());
        }
    });
    return out;
}

template <typename T>
class Trainer {
public:
    Trainer(BehrtModel<T> model, TrainConfig config, std::vector<Example<T>> train, std::vector<Example<T>> val,
            int threads = 1)
        : model_(std::move(model)),
          best_(model_.params()),
          config_(std::move(config)),
          train_(std::move(train)),
          val_(std::move(val)),
          threads_(std::max(threads, 1)),
          adam_(AdamState<T>::zeros_like(model_.params())) {
        config_.validate();
        if (train_.empty()) throw ConfigError("training split is empty");
        if (val_.empty()) throw ConfigError("validation split is empty");
        const bool mlm = config_.task == data::Task::mlm;
        const auto g = static_cast<std::size_t>(model_.config().num_labels());
        for (const auto* set : {&train_, &val_})
            for (const auto& ex : *set) {
                if (mlm != ex.label.empty() || (!mlm && ex.label.size() != g)) {
                    throw ConfigError("example for patient " + ex.patient_id + " does not fit task " +
                                      data::to_string(config_.task));
                }
            }
        build_trainable();
        best_metric_ = higher_is_better() ? -std::numeric_limits<double>::infinity()
                                          : std::numeric_limits<double>::infinity();
        build_val_masks();
    }

    const TrainConfig& config() const noexcept { return config_; }
    const BehrtModel<T>& model() const noexcept { return model_; }
    BehrtModel<T> best_model() const { return BehrtModel<T>(model_.config(), best_); }
    const MetricLog& log() const noexcept { return log_; }
    MetricLog& log() noexcept { return log_; }
    long step() const noexcept { return step_; }
    long best_step() const noexcept { return best_step_; }
    double best_metric() const noexcept { return best_metric_; }
    bool stopped() const noexcept { return stopped_; }
    bool finished() const noexcept { return stopped_ || step_ >= config_.max_steps; }

    // Name of the validation metric that drives early stopping.
    const char* selection_metric() const { return config_.task == data::Task::mlm ? "loss" : "aps"; }
    bool higher_is_better() const { return config_.task != data::Task::mlm; }

    // Trains until max_steps, early stopping, or (if >= 0) step `stop_at`.
    void run(long stop_at = -1) {
        if (!initial_evaluated_) {
            evaluate_and_log();
            initial_evaluated_ = true;
        }
        while (!finished() && (stop_at < 0 || step_ < stop_at)) {
            ++step_;
            train_step();
            if (step_ % config_.eval_every == 0 || step_ == config_.max_steps) evaluate_and_log();
        }
    }

    EvalResult evaluate(const BehrtModel<T>& m) const {
        return config_.task == data::Task::mlm ? evaluate_mlm(m) : evaluate_task(m);
    }

    // Full trainer state: current parameters, Adam moments, best parameters,
    // counters and the metric log so far.
    Checkpoint<T> snapshot(std::uint64_t model_seed = 0) const {
        Checkpoint<T> ck;
        ck.config = model_.config();
        ck.seed = model_seed;
        ck.params = model_.params();
        ck.groups.emplace_back("adam.m", adam_.m);
        ck.groups.emplace_back("adam.v", adam_.v);
        ck.groups.emplace_back("best", best_);
        nlohmann::json st;
        st["step"] = step_;
        st["adam_step"] = adam_.step;
        st["best_metric"] = encode_double(best_metric_);
        st["best_step"] = best_step_;
        st["evals_since_best"] = evals_since_best_;
        st["stopped"] = stopped_;
        st["initial_evaluated"] = initial_evaluated_;
        st["loss_sum"] = encode_double(loss_sum_);
        st["loss_count"] = loss_count_;
        ck.metadata["trainer"] = st;
        ck.metadata["train_config"] = to_json(config_);
        ck.metadata["metric_log"] = log_.str();
        return ck;
    }

    void restore(const Checkpoint<T>& ck) {
        if (!ck.metadata.contains("trainer")) throw ConfigError("checkpoint carries no trainer state");
        if (!(ck.config == model_.config())) throw ConfigError("checkpoint model config differs from the trainer's");
        if (ck.metadata.at("train_config").dump() != nlohmann::json(to_json(config_)).dump()) {
            throw ConfigError("checkpoint was written with a different train config");
        }
        const auto* m = ck.group("adam.m");
        const auto* v = ck.group("adam.v");
        const auto* best = ck.group("best");
        if (!m || !v || !best) throw FormatError("checkpoint lacks optimizer state");
        const auto& st = ck.metadata.at("trainer");
        model_ = BehrtModel<T>(ck.config, ck.params);
        adam_.m = *m;
        adam_.v = *v;
        adam_.step = st.at("adam_step").template get<long>();
        best_ = *best;
        step_ = st.at("step").template get<long>();
        best_metric_ = decode_double(st.at("best_metric"));
        best_step_ = st.at("best_step").template get<long>();
        evals_since_best_ = st.at("evals_since_best").template get<int>();
        stopped_ = st.at("stopped").template get<bool>();
        initial_evaluated_ = st.at("initial_evaluated").template get<bool>();
        loss_sum_ = decode_double(st.at("loss_sum"));
        loss_count_ = st.at("loss_count").template get<long>();
        std::istringstream in(ck.metadata.at("metric_log").template get<std::string>());
        log_ = MetricLog::read(in);
    }

private:
    // JSON cannot hold infinities; they are written as strings.
    static nlohmann::json encode_double(double v) {
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        return v;
    }
    static double decode_double(const nlohmann::json& j) {
        if (j.is_string()) return j.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                 : -std::numeric_limits<double>::infinity();
        return j.get<double>();
    }

    void build_trainable() {
        const auto& params = model_.params();
        trainable_.assign(params.size(), 1);
        const bool mlm = config_.task == data::Task::mlm;
        for (std::size_t i = 0; i < params.size(); ++i) {
            const std::string& name = params[i].first;
            const bool mlm_head = name.rfind("mlm.", 0) == 0;
            const bool classifier = name.rfind("classifier.", 0) == 0;
            // The head the objective does not reach stays untouched.
            if ((mlm && classifier) || (!mlm && mlm_head)) trainable_[i] = 0;
            if (config_.freeze == Freeze::all) trainable_[i] = 0;
            if (config_.freeze == Freeze::encoder && !mlm_head && !classifier) trainable_[i] = 0;
        }
    }

    data::MaskingOptions masking() const {
        data::MaskingOptions opt;
        opt.select_p = config_.mask_prob;
        return opt;
    }

    void build_val_masks() {
        if (config_.task != data::Task::mlm) return;
        val_masks_.clear();
        for (std::size_t i = 0; i < val_.size(); ++i) {
            Rng rng = derive_rng(config_.seed, {0xE7A1ULL, i});
            val_masks_.push_back(data::mask_sequence(val_[i].input, model_.config().vocab_size, rng, masking()));
        }
    }

    const std::vector<std::size_t>& epoch_order(long epoch) {
        auto it = orders_.find(epoch);
        if (it != orders_.end()) return it->second;
        if (orders_.size() > 2) orders_.erase(orders_.begin());
        std::vector<std::size_t> order(train_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng = derive_rng(config_.seed, {0xBA7CULL, static_cast<std::uint64_t>(epoch)});
        std::shuffle(order.begin(), order.end(), rng);
        return orders_.emplace(epoch, std::move(order)).first->second;
    }

    std::vector<std::size_t> batch_indices(long step) {
        const auto n = static_cast<long>(train_.size());
        const auto bsz = static_cast<long>(config_.batch_size);
        std::vector<std::size_t> idx;
        for (long b = 0; b < bsz; ++b) {
            const long p = (step - 1) * bsz + b;
            idx.push_back(epoch_order(p / n)[static_cast<std::size_t>(p % n)]);
        }
        return idx;
    }

    Var forward_loss(ParamBinding<T>& p, const data::TokenSequence& input, const Example<T>& ex,
                     const std::vector<int>* mlm_labels, T scale, Rng* dropout) const {
        auto& g = p.graph();
        auto enc = model_.encode(p, input, dropout);
        if (mlm_labels) return mlm_loss(g, model_.mlm_logits(p, enc.hidden), std::span<const int>(*mlm_labels), scale);
        return multilabel_loss(g, model_.classify(p, enc.hidden, input), std::span<const T>(ex.label), scale);
    }

    void train_step() {
        const auto idx = batch_indices(step_);
        const bool mlm = config_.task == data::Task::mlm;
        const int V = model_.config().vocab_size;
        std::vector<data::MaskedExample> masked(idx.size());
        double scale = 0.0;
        if (mlm) {
            std::size_t selected = 0;
            for (std::size_t b = 0; b < idx.size(); ++b) {
                Rng rng = derive_rng(config_.seed, {0x3A5CULL, static_cast<std::uint64_t>(step_), b});
                masked[b] = data::mask_sequence(train_[idx[b]].input, V, rng, masking());
                selected += static_cast<std::size_t>(masked[b].num_selected());
            }
            if (selected == 0) return;  // nothing to predict; the step is a no-op
            scale = 1.0 / static_cast<double>(selected);
        } else {
            scale = 1.0 / (static_cast<double>(idx.size()) * model_.config().num_labels());
        }

        const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(threads_), idx.size());
        std::vector<model::ParamStore<T>> grads(chunks);
        std::vector<double> losses(idx.size(), 0.0);
        const bool use_dropout = model_.config().dropout_rate > 0.0;
        parallel_chunks(idx.size(), static_cast<int>(chunks), [&](std::size_t b0, std::size_t e0, std::size_t c) {
            grads[c] = model_.params().zeros_like();
            for (std::size_t b = b0; b < e0; ++b) {
                const Example<T>& ex = train_[idx[b]];
                data::TokenSequence input = ex.input;
                if (mlm) {
                    if (masked[b].num_selected() == 0) continue;
                    input.token_ids = masked[b].input_ids;
                }
                Rng drop = derive_rng(config_.seed, {0xD80ULL, static_cast<std::uint64_t>(step_), b});
                Graph<T> g;
                ParamBinding<T> p(g, model_.params());
                Var loss = forward_loss(p, input, ex, mlm ? &masked[b].mlm_labels : nullptr, static_cast<T>(scale),
                                        use_dropout ? &drop : nullptr);
                losses[b] = static_cast<double>(g.value(loss)[0]);
                g.backward(loss);
                p.accumulate_into(grads[c]);
            }
        });
        for (std::size_t c = 1; c < chunks; ++c)
            for (std::size_t i = 0; i < grads[0].size(); ++i) {
                auto& dst = grads[0][i].second;
                const auto& src = grads[c][i].second;
                for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
            }
        for (const auto& [name, t] : grads[0])
            if (!t.all_finite()) throw NumericError("non-finite gradient in " + name + " at step " + std::to_string(step_));

        double batch_loss = 0.0;
        for (double l : losses) batch_loss += l;
        loss_sum_ += batch_loss;
        ++loss_count_;

        AdamConfig ac = config_.adam();
        ac.learning_rate = config_.learning_rate_at(step_);
        adam_step(model_.params(), grads[0], adam_, ac, trainable_);
    }

    EvalResult evaluate_mlm(const BehrtModel<T>& m) const {
        std::vector<double> ce(val_.size(), 0.0);
        std::vector<std::size_t> count(val_.size(), 0), tp(val_.size(), 0), pp(val_.size(), 0);
        parallel_chunks(val_.size(), threads_, [&](std::size_t b, std::size_t e, std::size_t) {
            std::vector<double> probs;
            std::vector<std::uint8_t> onehot;
            for (std::size_t i = b; i < e; ++i) {
                const auto& mk = val_masks_[i];
                if (mk.num_selected() == 0) continue;
                data::TokenSequence input = val_[i].input;
                input.token_ids = mk.input_ids;
                const Tensor<T> logits = m.predict_mlm_logits(input);
                const std::size_t V = logits.cols();
                for (std::size_t t = 0; t < mk.mlm_labels.size(); ++t) {
                    const int y = mk.mlm_labels[t];
                    if (y == data::kIgnoreLabel) continue;
                    const auto row = logits.row(t);
                    double mx = static_cast<double>(row[0]);
                    for (T v : row) mx = std::max(mx, static_cast<double>(v));
                    double z = 0.0;
                    probs.assign(V, 0.0);
                    for (std::size_t j = 0; j < V; ++j) z += probs[j] = std::exp(static_cast<double>(row[j]) - mx);
                    for (auto& q : probs) q /= z;
                    ce[i] += std::log(z) + mx - static_cast<double>(row[static_cast<std::size_t>(y)]);
                    ++count[i];
                    onehot.assign(V, 0);
                    onehot[static_cast<std::size_t>(y)] = 1;
                    const auto pr = metrics::precision_at_half(probs, onehot);
                    tp[i] += pr.true_positives;
                    pp[i] += pr.predicted_positives;
                }
            }
        });
        double total = 0.0;
        std::size_t n = 0, tps = 0, pps = 0;
        for (std::size_t i = 0; i < val_.size(); ++i) {
            total += ce[i];
            n += count[i];
            tps += tp[i];
            pps += pp[i];
        }
        if (n == 0) throw ConfigError("validation split has no masked tokens");
        EvalResult r;
        r.loss = total / static_cast<double>(n);
        r.precision = pps == 0 ? 0.0 : static_cast<double>(tps) / static_cast<double>(pps);
        return r;
    }

    EvalResult evaluate_task(const BehrtModel<T>& m) const {
        const auto preds = predict_examples(m, val_, threads_);
        EvalResult r;
        double total = 0.0;
        for (const auto& p : preds) {
            double s = 0.0;
            for (std::size_t i = 0; i < p.scores.size(); ++i) {
                const double prob = std::clamp(p.scores[i], 1e-300, 1.0 - 1e-16);
                s += p.labels[i] ? -std::log(prob) : -std::log1p(-prob);
            }
            total += s / static_cast<double>(p.scores.size());
        }
        r.loss = total / static_cast<double>(preds.size());
        try {
            const auto rep = metrics::per_patient_report(preds);
            r.aps = rep.mean_aps;
            r.auroc = rep.mean_auroc;
            r.patients_used = rep.patients_used;
            r.skipped = rep.skipped;
        } catch (const metrics::UndefinedMetric&) {
            r.skipped = preds.size();
        }
        return r;
    }

    void evaluate_and_log() {
        if (loss_count_ > 0) {
            log_.append(step_, "train", "loss", loss_sum_ / static_cast<double>(loss_count_));
            loss_sum_ = 0.0;
            loss_count_ = 0;
        }
        const EvalResult r = evaluate(model_);
        log_.append(step_, "val", "loss", r.loss);
        double metric = r.loss;
        if (config_.task == data::Task::mlm) {
            log_.append(step_, "val", "precision", r.precision);
        } else {
            log_.append(step_, "val", "aps", r.aps);
            log_.append(step_, "val", "auroc", r.auroc);
            metric = r.aps;
        }
        const bool improved = higher_is_better() ? metric > best_metric_ : metric < best_metric_;
        if (improved) {
            best_metric_ = metric;
            best_step_ = step_;
            best_ = model_.params();
            evals_since_best_ = 0;
        } else if (++evals_since_best_ >= config_.patience) {
            stopped_ = true;
        }
    }

    BehrtModel<T> model_;
    model::ParamStore<T> best_;
    TrainConfig config_;
    std::vector<Example<T>> train_, val_;
    int threads_;
    AdamState<T> adam_;
    std::vector<std::uint8_t> trainable_;
    std::vector<data::MaskedExample> val_masks_;
    std::map<long, std::vector<std::size_t>> orders_;
    MetricLog log_;
    long step_ = 0;
    long best_step_ = 0;
    double best_metric_ = 0.0;
    int evals_since_best_ = 0;
    bool stopped_ = false;
    bool initial_evaluated_ = false;
    double loss_sum_ = 0.0;
    long loss_count_ = 0;
};

// MLM trainer over train/validation records.
template <typename T>
Trainer<T> make_pretrainer(BehrtModel<T> model, const std::vector<data::PatientRecord>& train,
                           const std::vector<data::PatientRecord>& val, const data::DiseaseVocab& vocab,
                           TrainConfig config, int threads = 1) {
    if (config.task != data::Task::mlm) throw ConfigError("pre-training requires task MLM");
    if (train.empty() || val.empty()) throw ConfigError("pre-training needs non-empty train and validation splits");
    if (model.config().vocab_size != vocab.size()) throw ConfigError("model vocabulary size differs from the data");
    const int max_len = model.config().max_len;
    const auto mode = model.config().position_mode;
    return Trainer<T>(std::move(model), std::move(config), mlm_examples<T>(train, vocab, max_len, mode),
                      mlm_examples<T>(val, vocab, max_len, mode), threads);
}

// Fine-tuning trainer; every weight is trainable unless the config freezes some.
template <typename T>
Trainer<T> make_finetuner(BehrtModel<T> model, const data::TaskDataset& train, const data::TaskDataset& val,
                          TrainConfig config, int threads = 1) {
    if (config.task == data::Task::mlm) throw ConfigError("fine-tuning requires task T1, T2 or T3");
    if (train.task != config.task || val.task != config.task) {
        throw ConfigError(std::string("task dataset is ") + data::to_string(train.task) + " but config asks for " +
                          data::to_string(config.task));
    }
    if (train.examples.empty() || val.examples.empty()) {
        throw ConfigError("fine-tuning needs non-empty train and validation task datasets");
    }
    return Trainer<T>(std::move(model), std::move(config), task_examples<T>(train), task_examples<T>(val), threads);
}

}  // namespace behrt::training
