#pragma once

#include <vector>

#include "ligram/autodiff.hpp"
#include "ligram/corpus.hpp"
#include "ligram/graph.hpp"
#include "ligram/model.hpp"
#include "ligram/synthetic.hpp"
#include "ligram/trainer.hpp"

namespace ligram {

/// Tiny corpus + graphs + parameters used to check the full objective's
/// gradients against finite differences.
struct GradcheckFixture {
    Corpus corpus;
    GraphBundle graphs;
    ModelConfig config;
    ModelParameters<double> params;
    SparseMatrix doc_graph; // at the initial parameters
    std::size_t doc_graph_edges = 0;
};

/// 8 documents, 3 classes, small widths, dropout off. delta is lowered so the
/// document graph actually has edges at the initial parameters.
inline GradcheckFixture make_gradcheck_fixture(std::uint64_t seed = 7, double lambda = 0.7) {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.docs_per_class = 3;
    spec.vocab_per_class = 4;
    spec.overlap = 0.3;
    spec.min_length = 3;
    spec.max_length = 6;
    spec.entity_density = 1.5;
    spec.entities_per_class = 2;
    spec.embedding_dim = 6;
    spec.entity_dim = 5;
    auto syn = generate_synthetic_corpus(spec, seed);
    syn.corpus.documents.resize(8);

    GradcheckFixture fx;
    fx.corpus = assign_splits(build_vocabularies(syn.corpus), 2, seed);
    fx.graphs = build_graph_bundle(fx.corpus, syn.morpheme_embeddings, &syn.entity_embeddings, GraphOptions{3, 0.0});
    fx.config.hyper.hidden = 4;
    fx.config.hyper.dropout = 0.0;
    fx.config.hyper.lambda = lambda;
    fx.config.hyper.delta = 1.0;
    fx.config.hyper.seed = seed;
    Rng rng(seed);
    fx.params = ModelParameters<double>::initialize(fx.config, dims_of(fx.graphs, fx.corpus.num_classes()), rng);

    ad::Tape<double> tape;
    Rng unused(0);
    const auto vars = bind_parameters(tape, fx.params);
    fx.doc_graph =
        full_forward(tape, ModelInputs<double>::from(fx.graphs, fx.config), vars, fx.config, ad::Mode::train, unused)
            .doc_graph;
    fx.doc_graph_edges = fx.doc_graph.nnz();
    return fx;
}

/// Central-difference check of the unified loss w.r.t. every parameter entry.
/// The document graph gets no gradient, so the checked function holds it at
/// its value for the unperturbed parameters.
inline ad::GradCheckReport check_model_gradients(const GradcheckFixture& fx, double step = 1e-5) {
    const auto inputs = ModelInputs<double>::from(fx.graphs, fx.config);
    const auto train = labeled_set(fx.corpus, Split::train);
    std::vector<std::string> names;
    std::vector<ad::Matrix<double>> values;
    for (const auto& e : fx.params.entries()) {
        names.push_back(e.name);
        values.push_back(e.value);
    }
    const ad::ScalarFunction f = [&](ad::Tape<double>& tape, std::span<const ad::Var<double>> vars) {
        ParameterVars<double> bound{names, {vars.begin(), vars.end()}};
        Rng rng(fx.config.hyper.seed);
        return objective(tape, inputs, bound, fx.config, train, ad::Mode::train, rng, &fx.doc_graph).total;
    };
    return ad::check_gradients(f, values, step);
}

} // namespace ligram
