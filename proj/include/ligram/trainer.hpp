#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ligram/autodiff.hpp"
#include "ligram/corpus.hpp"
#include "ligram/error.hpp"
#include "ligram/graph.hpp"
#include "ligram/log.hpp"
#include "ligram/metrics.hpp"
#include "ligram/model.hpp"
#include "ligram/rng.hpp"
#include "ligram/semcon.hpp"

namespace ligram {

inline constexpr double probability_floor = 1e-12;
inline constexpr double clip_norm = 5.0;

/// -sum over labeled documents of log softmax(logits)[true class]; the log
/// is clamped below at ln(1e-12). A sum, not a mean.
template <typename T>
ad::Var<T> cross_entropy_loss(ad::Var<T> logits, const std::vector<std::size_t>& labels,
                              const std::vector<std::size_t>& labeled) {
    if (labeled.empty()) throw Error("cross-entropy needs at least one labeled document");
    if (labels.size() != labeled.size()) throw Error("labels and labeled indices differ in length");
    for (const auto y : labels) {
        if (y >= static_cast<std::size_t>(logits.cols())) throw Error("label index out of range");
    }
    const auto probs = ad::softmax_rows(ad::gather_rows(logits, labeled));
    std::vector<std::size_t> rows(labeled.size());
    for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = k;
    const auto picked = ad::gather_elements(probs, rows, labels);
    return ad::scale(ad::sum(ad::log(picked, static_cast<T>(probability_floor))), T(-1));
}

template <typename T>
ad::Var<T> unified_loss(ad::Var<T> cross_entropy, ad::Var<T> contrastive, double lambda) {
    if (lambda < 0.0) throw Error("lambda must be non-negative");
    return ad::add(cross_entropy, ad::scale(contrastive, static_cast<T>(lambda)));
}

/// AdamW with bias correction and decoupled weight decay:
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p
template <typename T>
class AdamW {
public:
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double epsilon = 1e-8;

    void step(std::vector<ad::Matrix<T>*> params, const std::vector<ad::Matrix<T>>& grads, double lr,
              double weight_decay) {
        if (params.size() != grads.size()) throw Error("AdamW: parameter and gradient counts differ");
        if (m_.empty()) {
            for (const auto* p : params) {
                m_.push_back(ad::Matrix<T>::Zero(p->rows(), p->cols()));
                v_.push_back(ad::Matrix<T>::Zero(p->rows(), p->cols()));
            }
        }
        if (m_.size() != params.size()) throw Error("AdamW: parameter set changed between steps");
        ++t_;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& p = *params[k];
            const auto& g = grads[k];
            if (g.rows() != p.rows() || g.cols() != p.cols()) throw Error("AdamW: gradient shape mismatch");
            auto& m = m_[k];
            auto& v = v_[k];
            for (Eigen::Index i = 0; i < p.size(); ++i) {
                const T gi = g.data()[i];
                m.data()[i] = static_cast<T>(beta1) * m.data()[i] + static_cast<T>(1.0 - beta1) * gi;
                v.data()[i] = static_cast<T>(beta2) * v.data()[i] + static_cast<T>(1.0 - beta2) * gi * gi;
                const double m_hat = static_cast<double>(m.data()[i]) / c1;
                const double v_hat = static_cast<double>(v.data()[i]) / c2;
                const double old = static_cast<double>(p.data()[i]);
                p.data()[i] = static_cast<T>(old - lr * m_hat / (std::sqrt(v_hat) + epsilon) - lr * weight_decay * old);
            }
        }
    }

    std::size_t steps() const { return t_; }
    const std::vector<ad::Matrix<T>>& first_moments() const { return m_; }
    const std::vector<ad::Matrix<T>>& second_moments() const { return v_; }

private:
    std::vector<ad::Matrix<T>> m_;
    std::vector<ad::Matrix<T>> v_;
    std::size_t t_ = 0;
};

/// Labeled documents of a split as (row indices, class indices).
struct LabeledSet {
    std::vector<std::size_t> indices;
    std::vector<std::size_t> labels;
};

inline LabeledSet labeled_set(const Corpus& corpus, Split split) {
    LabeledSet s;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& doc = corpus.documents[i];
        if (doc.split != split || !doc.label) continue;
        const auto c = corpus.class_index(*doc.label);
        if (!c) throw Error("document '" + doc.id + "' has a label outside the class list");
        s.indices.push_back(i);
        s.labels.push_back(*c);
    }
    return s;
}

struct EpochRecord {
    std::size_t epoch = 0;
    double cross_entropy = 0.0;
    double contrastive = 0.0;
    double loss = 0.0;
};

struct EvalRecord {
    std::size_t epoch = 0;
    double val_accuracy = 0.0;
    double val_macro_f1 = 0.0;
    double best_val_accuracy = 0.0;
};

template <typename T>
struct TrainRun {
    ModelConfig config;
    ModelParameters<T> best_params;
    ModelParameters<T> final_params;
    std::size_t best_epoch = 0;
    double best_val_accuracy = -1.0;
    std::vector<EpochRecord> history;
    std::vector<EvalRecord> evaluations;
    std::string rng_state;

    nlohmann::ordered_json history_json() const {
        nlohmann::ordered_json j;
        j["seed"] = config.hyper.seed;
        j["best_epoch"] = best_epoch;
        j["best_val_accuracy"] = best_val_accuracy;
        j["epochs"] = nlohmann::ordered_json::array();
        for (const auto& e : history) {
            j["epochs"].push_back({{"epoch", e.epoch}, {"l_ce", e.cross_entropy}, {"l_con", e.contrastive}, {"loss", e.loss}});
        }
        j["evaluations"] = nlohmann::ordered_json::array();
        for (const auto& e : evaluations) {
            j["evaluations"].push_back({{"epoch", e.epoch},
                                        {"val_accuracy", e.val_accuracy},
                                        {"val_macro_f1", e.val_macro_f1},
                                        {"best_val_accuracy", e.best_val_accuracy}});
        }
        return j;
    }
};

/// Metrics of the documents of `split` under eval-mode predictions.
template <typename T>
MetricsReport evaluate_logits(const ad::Matrix<T>& logits, const Corpus& corpus, Split split) {
    const auto set = labeled_set(corpus, split);
    if (set.indices.empty()) throw Error("split '" + std::string(to_string(split)) + "' has no labeled documents");
    const auto pred = predict(logits);
    std::vector<std::size_t> predicted;
    predicted.reserve(set.indices.size());
    for (const auto i : set.indices) predicted.push_back(pred.classes[i]);
    return compute_metrics(set.labels, predicted, corpus.class_names);
}

template <typename T>
MetricsReport evaluate(const ModelParameters<T>& params, const ModelConfig& config, const Corpus& corpus,
                       const GraphBundle& graphs, Split split) {
    const auto inputs = ModelInputs<T>::from(graphs, config);
    auto report = evaluate_logits(infer_logits(inputs, params, config), corpus, split);
    report.seed = config.hyper.seed;
    return report;
}

namespace detail {

template <typename T>
void clip_global_norm(std::vector<ad::Matrix<T>>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads) sq += g.template cast<double>().squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& g : grads) g *= factor;
}

} // namespace detail

/// Loss terms of one training-mode forward pass, with gradients on `vars`.
template <typename T>
struct StepLosses {
    ad::Var<T> cross_entropy;
    ad::Var<T> contrastive;
    ad::Var<T> total;
    bool has_contrastive = false;
};

/// Builds the unified objective on `tape`: cross-entropy over `train`, plus
/// the contrastive term over pseudo-topic pairs when SemCon is enabled.
template <typename T>
StepLosses<T> objective(ad::Tape<T>& tape, const ModelInputs<T>& inputs, const ParameterVars<T>& vars,
                        const ModelConfig& config, const LabeledSet& train, ad::Mode mode, Rng& rng,
                        const SparseMatrix* fixed_doc_graph = nullptr) {
    const auto fwd = full_forward(tape, inputs, vars, config, mode, rng, fixed_doc_graph);
    StepLosses<T> out;
    out.cross_entropy = cross_entropy_loss(fwd.logits, train.labels, train.indices);
    out.total = out.cross_entropy;
    if (config.use_semcon) {
        const auto topics = assign_pseudo_topics(fwd.logits);
        std::vector<bool> scope(inputs.num_documents, config.scope == ContrastiveScope::all);
        if (config.scope == ContrastiveScope::labeled) {
            for (const auto i : train.indices) scope[i] = true;
        }
        out.contrastive = contrastive_loss(fwd.doc_embeddings, form_pairs(topics, scope), config.hyper.temperature);
        out.has_contrastive = true;
        out.total = unified_loss(out.cross_entropy, out.contrastive, config.hyper.lambda);
    }
    return out;
}

/// Full-batch training with validation-accuracy model selection every
/// eval_every epochs (and after the last epoch).
template <typename T>
TrainRun<T> train(const Corpus& corpus, const GraphBundle& graphs, const ModelConfig& config) {
    config.validate();
    const auto& hp = config.hyper;
    const auto train_set = labeled_set(corpus, Split::train);
    if (train_set.indices.empty()) throw Error("the train split is empty");
    const auto val_set = labeled_set(corpus, Split::val);
    if (graphs.num_documents() != corpus.size()) throw Error("graph bundle and corpus disagree on document count");

    Rng rng(hp.seed);
    TrainRun<T> run;
    run.config = config;
    const auto inputs = ModelInputs<T>::from(graphs, config);
    auto params = ModelParameters<T>::initialize(config, dims_of(graphs, corpus.num_classes()), rng);
    AdamW<T> optimizer;

    auto evaluate_now = [&](std::size_t epoch) {
        const auto logits = infer_logits(inputs, params, config);
        EvalRecord rec;
        rec.epoch = epoch;
        if (!val_set.indices.empty()) {
            const auto m = evaluate_logits(logits, corpus, Split::val);
            rec.val_accuracy = m.accuracy;
            rec.val_macro_f1 = m.macro_f1;
        }
        if (rec.val_accuracy > run.best_val_accuracy) {
            run.best_val_accuracy = rec.val_accuracy;
            run.best_epoch = epoch;
            run.best_params = params;
        }
        rec.best_val_accuracy = run.best_val_accuracy;
        run.evaluations.push_back(rec);
        return rec;
    };

    for (std::size_t epoch = 1; epoch <= hp.max_epochs; ++epoch) {
        ad::Tape<T> tape;
        const auto vars = bind_parameters(tape, params);
        EpochRecord rec;
        rec.epoch = epoch;
        try {
            const auto losses = objective(tape, inputs, vars, config, train_set, ad::Mode::train, rng);
            rec.cross_entropy = static_cast<double>(losses.cross_entropy.value()(0, 0));
            rec.contrastive = losses.has_contrastive ? static_cast<double>(losses.contrastive.value()(0, 0)) : 0.0;
            rec.loss = static_cast<double>(losses.total.value()(0, 0));
            tape.backward(losses.total);
        } catch (const NumericError& e) {
            throw NumericError("training aborted at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        run.history.push_back(rec);

        std::vector<ad::Matrix<T>> grads;
        std::vector<ad::Matrix<T>*> targets;
        for (std::size_t k = 0; k < vars.vars.size(); ++k) {
            grads.push_back(tape.grad(vars.vars[k]));
            targets.push_back(&params.entries()[k].value);
        }
        if (config.clip_gradients) detail::clip_global_norm(grads, clip_norm);
        optimizer.step(targets, grads, hp.lr, hp.weight_decay);

        if (epoch % hp.eval_every == 0 || epoch == hp.max_epochs) {
            const auto ev = evaluate_now(epoch);
            std::ostringstream msg;
            msg << "epoch " << epoch << " L_ce=" << rec.cross_entropy << " L_con=" << rec.contrastive
                << " L=" << rec.loss << " val_acc=" << ev.val_accuracy << " val_f1=" << ev.val_macro_f1;
            log::info(msg.str());
        }
    }
    if (run.best_params.size() == 0) run.best_params = params; // max_epochs == 0
    run.final_params = params;
    run.rng_state = rng.state();
    return run;
}

} // namespace ligram
