// Acceptance checks P1-P10. One PASS/FAIL line per criterion; exit 1 on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "ligram/gradcheck.hpp"
#include "ligram/ligram.hpp"
#include "ligram/pipeline.hpp"

using namespace ligram;
using M = ad::Matrix<double>;
using Clock = std::chrono::steady_clock;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) detail = what;
        ok = ok && cond;
    }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

Corpus random_corpus(Rng& rng, std::size_t max_docs, std::size_t max_tokens) {
    Corpus c;
    const std::size_t docs = 1 + rng.below(max_docs);
    for (std::size_t i = 0; i < docs; ++i) {
        AnnotatedDocument d;
        d.id = std::to_string(i);
        d.label = "a";
        const std::size_t len = 1 + rng.below(max_tokens);
        for (std::size_t k = 0; k < len; ++k) {
            d.morphemes.push_back("m" + std::to_string(rng.below(12)));
            d.pos_tags.push_back("P" + std::to_string(rng.below(6)));
        }
        c.documents.push_back(d);
    }
    return build_vocabularies(c);
}

// Counts every unordered pair once per unit via a map keyed on strings.
Eigen::MatrixXd brute_force_pmi(const Corpus& c, TokenKind kind, std::size_t window) {
    std::vector<std::vector<std::string>> units;
    for (const auto& d : c.documents) {
        const auto& toks = Corpus::tokens_of(d, kind);
        const std::size_t w = std::min(window, toks.size());
        for (std::size_t s = 0; s + w <= toks.size(); ++s) {
            units.emplace_back(toks.begin() + static_cast<std::ptrdiff_t>(s), toks.begin() + static_cast<std::ptrdiff_t>(s + w));
            if (w == toks.size()) break;
        }
    }
    std::map<std::string, double> single;
    std::map<std::pair<std::string, std::string>, double> pair;
    for (auto u : units) {
        std::sort(u.begin(), u.end());
        u.erase(std::unique(u.begin(), u.end()), u.end());
        for (std::size_t a = 0; a < u.size(); ++a) {
            single[u[a]] += 1;
            for (std::size_t b = a + 1; b < u.size(); ++b) pair[{u[a], u[b]}] += 1;
        }
    }
    const auto& vocab = c.vocab(kind);
    const double total = static_cast<double>(units.size());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(vocab.size(), vocab.size());
    for (const auto& [key, n] : pair) {
        const double pmi = std::log(n * total / (single[key.first] * single[key.second]));
        if (pmi <= 0) continue;
        out(vocab.at(key.first), vocab.at(key.second)) = pmi;
        out(vocab.at(key.second), vocab.at(key.first)) = pmi;
    }
    return out;
}

Check p1() {
    Check c;
    const auto t0 = Clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
        const auto corpus = random_corpus(rng, 30, 15);
        const std::size_t window = 1 + rng.below(6);
        const auto got_w = compute_windowed_pmi(corpus, TokenKind::morpheme, window).to_dense();
        const auto got_d = compute_document_pmi(corpus, TokenKind::pos).to_dense();
        worst = std::max(worst, (got_w - brute_force_pmi(corpus, TokenKind::morpheme, window)).cwiseAbs().maxCoeff());
        worst = std::max(worst, (got_d - brute_force_pmi(corpus, TokenKind::pos, 1000)).cwiseAbs().maxCoeff());
    }
    const double secs = seconds_since(t0);
    c.require(worst <= 1e-12, fmt("max abs error %.3g", worst));
    c.require(secs < 10.0, fmt("took %.2f s", secs));
    if (c.ok) c.detail = fmt("25 corpora, max abs error %.3g, %.2f s", worst, secs);
    return c;
}

Check p2() {
    Check c;
    Rng rng(202);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.below(20);
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
        std::vector<Triplet> t;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i; j < n; ++j) {
                if (rng.uniform() < 0.6) continue;
                const double w = rng.uniform(0.0, 3.0);
                a(i, j) = a(j, i) = w;
                t.push_back({i, j, w});
                if (i != j) t.push_back({j, i, w});
            }
        }
        const Eigen::MatrixXd hat = a + Eigen::MatrixXd::Identity(n, n);
        const Eigen::VectorXd d = hat.rowwise().sum().array().rsqrt();
        const Eigen::MatrixXd want = d.asDiagonal() * hat * d.asDiagonal();
        const auto got = normalize_adjacency(SparseMatrix::from_triplets(n, n, t)).to_dense();
        worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
    }
    c.require(worst <= 1e-12, fmt("max abs error %.3g", worst));
    if (c.ok) c.detail = fmt("50 matrices, max abs error %.3g", worst);
    return c;
}

Check p3() {
    Check c;
    const auto t0 = Clock::now();
    const auto fx = make_gradcheck_fixture();
    const auto r = check_model_gradients(fx);
    const double secs = seconds_since(t0);
    c.require(fx.corpus.size() == 8 && fx.corpus.class_names.size() == 3, "fixture is not 8 docs / 3 classes");
    c.require(fx.config.hyper.lambda == 0.7 && fx.config.hyper.dropout == 0.0, "fixture hyperparameters");
    c.require(fx.doc_graph_edges > 0, "document graph has no edges");
    c.require(r.max_rel_error < 1e-4, fmt("max rel error %.3g", r.max_rel_error));
    c.require(secs < 60.0, fmt("took %.2f s", secs));
    if (c.ok) {
        c.detail = fmt("%.0f entries, max rel error %.3g, %.2f s", static_cast<double>(r.checked), r.max_rel_error, secs);
    }
    return c;
}

struct Fixture {
    Corpus corpus;
    GraphBundle graphs;
};

Fixture synthetic_fixture(const SyntheticSpec& spec, std::uint64_t seed, std::size_t min_freq, std::size_t per_class,
                          const GraphOptions& options = {}) {
    const auto syn = generate_synthetic_corpus(spec, seed);
    Fixture f;
    f.corpus = preprocess(syn.corpus, min_freq, per_class, seed).corpus;
    f.graphs = build_graph_bundle(f.corpus, syn.morpheme_embeddings, &syn.entity_embeddings, options);
    return f;
}

Check p4() {
    Check c;
    Rng pick(404);
    std::size_t full_rows = 0, edges = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        SyntheticSpec spec;
        spec.classes = 2 + pick.below(3);
        spec.docs_per_class = 6 + pick.below(6);
        spec.vocab_per_class = 6;
        spec.overlap = pick.uniform(0.0, 0.6);
        spec.entity_density = pick.uniform(0.2, 2.0);
        spec.embedding_dim = 8;
        spec.entity_dim = 5;
        const auto fx = synthetic_fixture(spec, seed, 1, 2, {3, 0.0});
        ModelConfig config;
        config.hyper.hidden = 6;
        config.hyper.delta = pick.uniform(0.0, 2.0);
        Rng init(seed);
        const auto params =
            ModelParameters<double>::initialize(config, dims_of(fx.graphs, fx.corpus.class_names.size()), init);
        ad::Tape<double> tape;
        Rng rng(seed);
        const auto vars = bind_parameters(tape, params);
        const auto fwd =
            full_forward(tape, ModelInputs<double>::from(fx.graphs, config), vars, config, ad::Mode::eval, rng);
        const auto n = static_cast<Eigen::Index>(fx.corpus.size());
        for (Eigen::Index i = 0; i < n; ++i) {
            int nonzero = 0;
            for (const auto& p : fwd.pooled) {
                const double norm = p.value().row(i).norm();
                c.require(norm == 0.0 || std::abs(norm - 1.0) <= 1e-6, fmt("pooled block norm %.12g", norm));
                nonzero += norm != 0.0;
            }
            const double row = fwd.doc_embeddings.value().row(i).norm();
            if (nonzero == 3) {
                ++full_rows;
                c.require(std::abs(row - std::sqrt(3.0)) <= 1e-6, fmt("concatenated norm %.12g", row));
            }
        }
        const auto& a = fwd.doc_graph;
        c.require(a.is_symmetric(), "document graph not symmetric");
        for (std::size_t r = 0; r < a.rows(); ++r) {
            for (std::size_t k = a.row_begin(r); k < a.row_end(r); ++k) {
                ++edges;
                const double v = a.value_at(k);
                c.require(a.col_at(k) != r, "self-loop in document graph");
                c.require(v >= config.hyper.delta && v <= 3.0 + 1e-12, fmt("edge weight %.12g, delta %.3g", v, config.hyper.delta));
            }
        }
    }
    c.require(full_rows > 0 && edges > 0, "fixtures never exercised three blocks or graph edges");
    if (c.ok) c.detail = fmt("20 fixtures, %.0f three-block rows, %.0f edges", static_cast<double>(full_rows), static_cast<double>(edges));
    return c;
}

double contrastive_value(const M& x, const ContrastivePairs& pairs, double tau = 1.0) {
    ad::Tape<double> tape;
    return contrastive_loss(tape.constant(x), pairs, tau).value()(0, 0);
}

ContrastivePairs pairs_from(const std::vector<std::size_t>& topics) {
    TopicAssignment a;
    a.topics = topics;
    return form_pairs(a);
}

// Pairs restricted to one anchor, so the loss is L_i itself.
ContrastivePairs anchor_only(const ContrastivePairs& all, std::size_t i) {
    ContrastivePairs p;
    p.positives.resize(all.positives.size());
    p.candidates.resize(all.candidates.size());
    p.positives[i] = all.positives[i];
    p.candidates[i] = all.candidates[i];
    p.scope_size = 1;
    return p;
}

double cosine(const M& x, Eigen::Index i, Eigen::Index j) { return x.row(i).dot(x.row(j)) / (x.row(i).norm() * x.row(j).norm()); }

Check p5() {
    Check c;
    for (const std::size_t n : {3u, 5u, 10u}) {
        const M x = M::Constant(static_cast<Eigen::Index>(n), 4, 0.3);
        const double got = contrastive_value(x, pairs_from(std::vector<std::size_t>(n, 1)));
        c.require(std::abs(got - std::log(static_cast<double>(n - 1))) <= 1e-9, fmt("N=%.0f: %.12g", static_cast<double>(n), got));
    }

    Rng rng(505);
    M x(7, 6);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.uniform(-1, 1);
    const std::vector<std::size_t> topics{0, 1, 0, 2, 1, 0, 2};
    const double tau = 0.5;
    double want = 0.0;
    for (Eigen::Index i = 0; i < 7; ++i) {
        double denom = 0.0;
        for (Eigen::Index a = 0; a < 7; ++a) {
            if (a != i) denom += std::exp(cosine(x, i, a) / tau);
        }
        double sum = 0.0;
        int count = 0;
        for (Eigen::Index p = 0; p < 7; ++p) {
            if (p == i || topics[p] != topics[i]) continue;
            sum -= std::log(std::exp(cosine(x, i, p) / tau) / denom);
            ++count;
        }
        if (count) want += sum / count;
    }
    want /= 7.0;
    const double got = contrastive_value(x, pairs_from(topics), tau);
    c.require(std::abs(got - want) <= 1e-10, fmt("7-doc fixture %.15g vs %.15g", got, want));

    // dL_i/ds_ip = softmax_ip - 1/|P_i|, so a dominant positive among several
    // can raise L_i; the positive probe uses anchors with a single positive.
    int probes = 0;
    while (probes < 100) {
        M y(6, 4);
        for (Eigen::Index k = 0; k < y.size(); ++k) y.data()[k] = rng.uniform(-1, 1);
        std::vector<std::size_t> t(6);
        for (auto& v : t) v = rng.below(3);
        const auto all = pairs_from(t);
        const std::size_t i = rng.below(6);
        if (all.positives[i].size() != 1 || all.candidates[i].size() < 2) continue;
        const auto only = anchor_only(all, i);
        const auto pos = static_cast<Eigen::Index>(all.positives[i][0]);
        Eigen::Index neg = -1;
        for (const auto a : all.candidates[i]) {
            if (t[a] != t[i]) neg = static_cast<Eigen::Index>(a);
        }
        const auto ii = static_cast<Eigen::Index>(i);
        const M dir = y.row(ii) / y.row(ii).norm();
        const double base = contrastive_value(y, only);

        M closer_pos = y;
        closer_pos.row(pos) += 0.1 * y.row(pos).norm() * dir;
        M closer_neg = y;
        closer_neg.row(neg) += 0.1 * y.row(neg).norm() * dir;
        if (!(cosine(closer_pos, ii, pos) > cosine(y, ii, pos)) || !(cosine(closer_neg, ii, neg) > cosine(y, ii, neg))) {
            continue; // already parallel
        }
        c.require(contrastive_value(closer_pos, only) < base, "raising a positive similarity did not lower L_i");
        c.require(contrastive_value(closer_neg, only) > base, "raising a negative similarity did not raise L_i");
        ++probes;
    }
    // negatives raise L_i whatever the number of positives
    int negative_probes = 0;
    while (negative_probes < 100) {
        M y(6, 4);
        for (Eigen::Index k = 0; k < y.size(); ++k) y.data()[k] = rng.uniform(-1, 1);
        std::vector<std::size_t> t(6);
        for (auto& v : t) v = rng.below(2);
        const auto all = pairs_from(t);
        const std::size_t i = rng.below(6);
        if (all.positives[i].empty() || all.positives[i].size() == all.candidates[i].size()) continue;
        const auto only = anchor_only(all, i);
        const auto ii = static_cast<Eigen::Index>(i);
        Eigen::Index neg = -1;
        for (const auto a : all.candidates[i]) {
            if (t[a] != t[i]) neg = static_cast<Eigen::Index>(a);
        }
        M closer = y;
        closer.row(neg) += 0.1 * y.row(neg).norm() * (y.row(ii) / y.row(ii).norm());
        if (!(cosine(closer, ii, neg) > cosine(y, ii, neg))) continue;
        c.require(contrastive_value(closer, only) > contrastive_value(y, only),
                  "raising a negative similarity did not raise L_i (several positives)");
        ++negative_probes;
    }
    if (c.ok) c.detail = fmt("ln(N-1) for N=3,5,10; 7-doc error %.3g; %.0f + 100 probes", std::abs(got - want), probes);
    return c;
}

Check p6() {
    Check c;
    for (const std::size_t classes : {2u, 7u, 8u}) {
        ad::Tape<double> tape;
        const auto z = tape.constant(M::Zero(3, static_cast<Eigen::Index>(classes)));
        const double per_doc = cross_entropy_loss(z, {0, classes - 1, 1}, {0, 1, 2}).value()(0, 0) / 3.0;
        c.require(std::abs(per_doc - std::log(static_cast<double>(classes))) <= 1e-9,
                  fmt("C=%.0f: %.12g", static_cast<double>(classes), per_doc));
    }
    SyntheticSpec spec;
    spec.docs_per_class = 12;
    spec.vocab_per_class = 8;
    spec.overlap = 0.3;
    spec.embedding_dim = 16;
    spec.entity_dim = 8;
    const auto fx = synthetic_fixture(spec, 6, 1, 6);
    ModelConfig zero;
    zero.hyper.hidden = 16;
    zero.hyper.max_epochs = 30;
    zero.hyper.lambda = 0.0;
    ModelConfig ce_only = zero;
    ce_only.use_semcon = false;
    const auto a = train<float>(fx.corpus, fx.graphs, zero);
    const auto b = train<float>(fx.corpus, fx.graphs, ce_only);
    bool same = a.history.size() == b.history.size();
    for (std::size_t k = 0; same && k < a.history.size(); ++k) {
        same = a.history[k].loss == b.history[k].loss && a.history[k].loss == b.history[k].cross_entropy;
    }
    c.require(same, "lambda=0 loss trace differs from the cross-entropy-only trace");
    c.require(a.final_params == b.final_params, "lambda=0 parameters differ from the cross-entropy-only run");
    if (c.ok) c.detail = "ln C for C=2,7,8; 30-epoch traces bit-identical";
    return c;
}

SyntheticSpec end_to_end_spec(double overlap) {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.docs_per_class = 40;
    spec.overlap = overlap;
    return spec;
}

ModelConfig end_to_end_config(std::uint64_t seed) {
    ModelConfig config;
    config.hyper.max_epochs = 200;
    config.hyper.seed = seed;
    return config;
}

Check p7() {
    Check c;
    const auto t0 = Clock::now();
    const auto fx = synthetic_fixture(end_to_end_spec(0.0), 17, 5, 20);
    const auto config = end_to_end_config(17);
    const auto a = train<float>(fx.corpus, fx.graphs, config);
    const double secs = seconds_since(t0);
    const auto b = train<float>(fx.corpus, fx.graphs, config);
    const auto report = evaluate(a.best_params, a.config, fx.corpus, fx.graphs, Split::test);
    c.require(report.accuracy >= 0.95, fmt("test accuracy %.4f", report.accuracy));
    c.require(report.macro_f1 >= 0.95, fmt("test macro-F1 %.4f", report.macro_f1));
    c.require(a.history_json().dump() == b.history_json().dump() && a.best_params == b.best_params,
              "two runs with the same seed differ");
    c.require(secs < 120.0, fmt("took %.1f s", secs));
    if (c.ok) c.detail = fmt("test accuracy %.4f, macro-F1 %.4f, %.1f s per run", report.accuracy, report.macro_f1, secs);
    return c;
}

Check p8() {
    Check c;
    // short documents and partly shared entities keep both models off the ceiling;
    // entities stay informative (80% from the document's class)
    auto spec = end_to_end_spec(0.5);
    spec.min_length = 3;
    spec.max_length = 7;
    spec.entity_overlap = 0.3;
    spec.entity_density = 1.0;
    const auto fx = synthetic_fixture(spec, 8, 5, 20);
    double full = 0.0, without = 0.0;
    const int seeds = 5;
    for (int s = 1; s <= seeds; ++s) {
        auto config = end_to_end_config(static_cast<std::uint64_t>(s));
        auto ce_only = config;
        ce_only.use_semcon = false;
        const auto a = train<float>(fx.corpus, fx.graphs, config);
        const auto b = train<float>(fx.corpus, fx.graphs, ce_only);
        full += evaluate(a.best_params, a.config, fx.corpus, fx.graphs, Split::test).macro_f1 / seeds;
        without += evaluate(b.best_params, b.config, fx.corpus, fx.graphs, Split::test).macro_f1 / seeds;
    }
    c.require(full >= without - 0.02, fmt("full %.4f vs without contrastive %.4f", full, without));
    c.detail = fmt("mean test macro-F1 full %.4f, without contrastive %.4f", full, without);
    return c;
}

Check p9() {
    Check c;
    SyntheticSpec spec;
    spec.docs_per_class = 16;
    spec.vocab_per_class = 10;
    spec.overlap = 0.3;
    spec.embedding_dim = 24;
    spec.entity_dim = 12;
    const auto syn = generate_synthetic_corpus(spec, 909);
    const auto corpus = preprocess(syn.corpus, 1, 8, 909).corpus;
    const auto graphs = build_graph_bundle(corpus, syn.morpheme_embeddings, &syn.entity_embeddings, {});
    ModelConfig config;
    config.hyper.hidden = 24;
    config.hyper.max_epochs = 40;
    config.hyper.delta = 1.0;
    const auto run = train<float>(corpus, graphs, config);

    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(9);
    rng.shuffle(order);
    const auto shuffled = permute_documents(corpus, order);
    const auto shuffled_graphs = build_graph_bundle(shuffled, syn.morpheme_embeddings, &syn.entity_embeddings, {});

    const auto za = infer_logits(ModelInputs<float>::from(graphs, run.config), run.best_params, run.config);
    const auto zb = infer_logits(ModelInputs<float>::from(shuffled_graphs, run.config), run.best_params, run.config);
    const auto pa = predict(za), pb = predict(zb);
    for (std::size_t i = 0; i < order.size(); ++i) {
        c.require(pb.classes[i] == pa.classes[order[i]], "prediction not permuted with its document");
    }
    for (const auto split : {Split::train, Split::val, Split::test}) {
        const auto ma = evaluate_logits(za, corpus, split).to_json();
        const auto mb = evaluate_logits(zb, shuffled, split).to_json();
        c.require(ma == mb, "metrics differ on " + std::string(to_string(split)));
    }
    if (c.ok) c.detail = fmt("%.0f documents shuffled, predictions and metrics identical", static_cast<double>(order.size()));
    return c;
}

Check p10() {
    Check c;
    M p = M::Constant(1, 1, 1.0);
    AdamW<double> first;
    first.step({&p}, {M::Constant(1, 1, 1.0)}, 5e-4, 1e-3);
    c.require(std::abs(p(0, 0) - 0.99949950) <= 1e-10, fmt("first step %.12f", p(0, 0)));

    // lr 0.1, wd 0.01, gradients 1, -2, 0.5 from theta 2, by hand
    const double lr = 0.1, wd = 0.01, eps = 1e-8;
    const double g[3] = {1.0, -2.0, 0.5};
    double theta = 2.0;
    const double m1 = 0.1 * g[0], v1 = 0.001 * g[0] * g[0];
    const double m2 = 0.9 * m1 + 0.1 * g[1], v2 = 0.999 * v1 + 0.001 * g[1] * g[1];
    const double m3 = 0.9 * m2 + 0.1 * g[2], v3 = 0.999 * v2 + 0.001 * g[2] * g[2];
    const double ms[3] = {m1, m2, m3}, vs[3] = {v1, v2, v3};
    const double bc1[3] = {0.1, 0.19, 0.271}, bc2[3] = {0.001, 0.001999, 0.002997001};
    M q = M::Constant(1, 1, theta);
    AdamW<double> opt;
    double worst = 0.0;
    for (int t = 0; t < 3; ++t) {
        theta = theta * (1 - lr * wd) - lr * (ms[t] / bc1[t]) / (std::sqrt(vs[t] / bc2[t]) + eps);
        opt.step({&q}, {M::Constant(1, 1, g[t])}, lr, wd);
        worst = std::max(worst, std::abs(q(0, 0) - theta));
    }
    c.require(worst <= 1e-10, fmt("trajectory error %.3g", worst));
    if (c.ok) c.detail = fmt("first step %.8f, trajectory error %.3g", p(0, 0), worst);
    return c;
}

} // namespace

int main() {
    log::set_threshold(log::Level::warn);
    const std::vector<std::pair<const char*, std::function<Check()>>> criteria{
        {"P1", p1}, {"P2", p2}, {"P3", p3}, {"P4", p4}, {"P5", p5},
        {"P6", p6}, {"P7", p7}, {"P8", p8}, {"P9", p9}, {"P10", p10}};
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        Check result;
        try {
            result = fn();
        } catch (const std::exception& e) {
            result.ok = false;
            result.detail = std::string("exception: ") + e.what();
        }
        failures += !result.ok;
        std::printf("%s %s: %s\n", result.ok ? "PASS" : "FAIL", name, result.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
