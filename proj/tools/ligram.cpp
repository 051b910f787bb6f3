// ligram command-line driver.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ligram/ablation.hpp"
#include "ligram/gradcheck.hpp"
#include "ligram/ligram.hpp"
#include "ligram/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ligram;

namespace {

struct Options {
    RunConfig run;
    std::string log_level = "info";
    std::string scope = "all";
    std::string missing = "error";
    bool no_morpheme = false;
    bool no_pos = false;
    bool no_entity = false;
    bool no_semcon = false;

    std::string checkpoint;
    std::string split = "test";
    std::vector<std::uint64_t> seeds;
    SyntheticSpec synth;
    double gradcheck_tolerance = 1e-4;
};

void finalize(Options& o) {
    log::set_threshold(log::parse_level(o.log_level));
    auto& m = o.run.model;
    m.use_morpheme = !o.no_morpheme;
    m.use_pos = !o.no_pos;
    m.use_entity = !o.no_entity;
    m.use_semcon = !o.no_semcon;
    m.scope = o.scope == "labeled" ? ContrastiveScope::labeled : ContrastiveScope::all;
    o.run.missing_embedding =
        o.missing == "zero-vector" ? MissingEmbeddingPolicy::zero_vector : MissingEmbeddingPolicy::error;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

fs::path ensure_out(const Options& o) {
    fs::path dir(o.run.out_dir);
    fs::create_directories(dir);
    return dir;
}

std::string stats_table(const CorpusStats& s) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "| #texts | avg length | #classes | #morphemes | #entities | #POS | train | val | test |\n"
                  "|---|---|---|---|---|---|---|---|---|\n"
                  "| %zu | %.2f | %zu | %zu | %zu | %zu | %zu | %zu | %zu |\n",
                  s.texts, s.avg_length, s.classes, s.morphemes, s.entities, s.pos, s.train, s.val, s.test);
    return buf;
}

// Counts vocabulary entries without an embedding row.
std::size_t missing_rows(const Vocabulary& vocab, const EmbeddingTable& table) {
    std::size_t missing = 0;
    for (const auto& t : vocab.tokens()) missing += table.find(t) ? 0 : 1;
    return missing;
}

int cmd_validate(const Options& o) {
    if (o.run.corpus_path.empty()) throw Error("--corpus is required");
    const auto raw = load_corpus(o.run.corpus_path);
    const auto indexed = build_vocabularies(deduplicate(raw));
    const auto pre = preprocess(raw, o.run.min_freq, o.run.per_class, o.run.model.hyper.seed);
    std::cout << "records: " << raw.size() << ", after deduplication: " << indexed.size() << "\n\n";
    std::cout << "before low-frequency filtering\n" << stats_table(corpus_stats(indexed)) << "\n";
    std::cout << "after low-frequency filtering (min_freq " << o.run.min_freq << ")\n"
              << stats_table(corpus_stats(pre.corpus));
    if (!o.run.morpheme_embeddings_path.empty()) {
        const auto emb = read_embeddings(o.run.morpheme_embeddings_path);
        if (o.run.embedding_dim != 0 && emb.dim() != o.run.embedding_dim) {
            throw Error(o.run.morpheme_embeddings_path + ": embedding dim " + std::to_string(emb.dim()) +
                        " does not match the configured dim " + std::to_string(o.run.embedding_dim));
        }
        const auto missing = missing_rows(pre.corpus.morpheme_vocab, emb);
        std::cout << "\nmorpheme embeddings: " << emb.rows() << " rows, dim " << emb.dim() << ", " << missing
                  << " vocabulary entries missing\n";
        if (missing > 0 && o.run.missing_embedding == MissingEmbeddingPolicy::error) {
            throw Error(o.run.morpheme_embeddings_path + ": " + std::to_string(missing) + " morphemes have no embedding");
        }
    }
    if (!o.run.entity_embeddings_path.empty()) {
        const auto emb = read_embeddings(o.run.entity_embeddings_path);
        const auto missing = missing_rows(pre.corpus.entity_vocab, emb);
        std::cout << "entity embeddings: " << emb.rows() << " rows, dim " << emb.dim() << ", " << missing
                  << " vocabulary entries missing\n";
        if (missing > 0) {
            throw Error(o.run.entity_embeddings_path + ": " + std::to_string(missing) + " entities have no embedding");
        }
    } else if (!pre.corpus.entity_vocab.empty()) {
        throw Error("corpus mentions entities but --entity-emb was not given");
    }
    return 0;
}

int cmd_build_graphs(const Options& o) {
    const auto data = prepare(o.run);
    const auto dir = ensure_out(o);
    const auto stats = graph_stats(data.graphs, data.corpus.size(), o.run.model.hyper.hidden);
    write_graph_bundle(dir.string(), data.graphs, stats);
    save_corpus((dir / "corpus.split.jsonl").string(), data.records);
    std::cout << stats.format();
    return 0;
}

void report_metrics(const MetricsReport& report, const fs::path& path) {
    const auto text = report.to_json().dump(2) + "\n";
    write_text(path, text);
    std::cout << text;
}

int cmd_train(const Options& o) {
    const auto data = prepare(o.run);
    const auto dir = ensure_out(o);
    const auto run = train<float>(data.corpus, data.graphs, o.run.model);
    save_checkpoint((dir / "best.lgck").string(), run.config, run.best_params);
    save_checkpoint((dir / "final.lgck").string(), run.config, run.final_params);
    write_text(dir / "history.json", run.history_json().dump(2) + "\n");
    save_corpus((dir / "corpus.split.jsonl").string(), data.records);
    log::info("best validation accuracy " + std::to_string(run.best_val_accuracy) + " at epoch " +
              std::to_string(run.best_epoch));
    if (!data.corpus.indices_in(Split::test).empty()) {
        auto report = evaluate(run.best_params, run.config, data.corpus, data.graphs, Split::test);
        report.epoch = run.best_epoch;
        report_metrics(report, dir / "test_metrics.json");
    }
    return 0;
}

int cmd_evaluate(Options o) {
    if (o.checkpoint.empty()) throw Error("--checkpoint is required");
    const auto split = parse_split(o.split);
    if (!split) throw Error("unknown split '" + o.split + "'");
    const auto ckpt = load_checkpoint<float>(o.checkpoint);
    // graphs must be rebuilt exactly as during training
    o.run.model = ckpt.config;
    const auto data = prepare(o.run);
    const auto report = evaluate(ckpt.params, ckpt.config, data.corpus, data.graphs, *split);
    report_metrics(report, ensure_out(o) / (o.split + "_metrics.json"));
    return 0;
}

int cmd_ablate(const Options& o) {
    const auto data = prepare(o.run);
    const auto dir = ensure_out(o);
    auto seeds = o.seeds;
    if (seeds.empty()) seeds.push_back(o.run.model.hyper.seed);
    std::vector<AblationRow> rows;
    for (const auto& variant : ablation_variants(o.run.model)) {
        AblationRow row{variant.name, seeds, {}, {}};
        std::string slug = variant.name;
        for (auto& ch : slug) {
            if (ch == '/' || ch == ' ') ch = '_';
        }
        fs::create_directories(dir / slug);
        for (const auto seed : seeds) {
            auto config = variant.config;
            config.hyper.seed = seed;
            log::info("ablation: " + variant.name + ", seed " + std::to_string(seed));
            const auto run = train<float>(data.corpus, data.graphs, config);
            const auto stem = dir / slug / ("seed" + std::to_string(seed));
            save_checkpoint(stem.string() + ".lgck", run.config, run.best_params);
            write_text(stem.string() + ".history.json", run.history_json().dump(2) + "\n");
            const auto report = evaluate(run.best_params, run.config, data.corpus, data.graphs, Split::test);
            row.accuracy.push_back(report.accuracy);
            row.macro_f1.push_back(report.macro_f1);
        }
        rows.push_back(std::move(row));
    }
    const auto dataset = fs::path(o.run.corpus_path).stem().string();
    const auto table = ablation_markdown(dataset, rows);
    write_text(dir / "ablation.md", table);
    write_text(dir / "ablation.json", ablation_json(dataset, rows).dump(2) + "\n");
    std::cout << table;
    return 0;
}

int cmd_synth(const Options& o) {
    const auto dir = ensure_out(o);
    const auto syn = generate_synthetic_corpus(o.synth, o.run.model.hyper.seed);
    save_corpus((dir / "corpus.jsonl").string(), syn.corpus);
    write_embeddings((dir / "morpheme.lgem").string(), syn.morpheme_embeddings);
    write_embeddings((dir / "entity.lgem").string(), syn.entity_embeddings);
    std::cout << "wrote " << syn.corpus.size() << " documents to " << (dir / "corpus.jsonl").string() << "\n";
    return 0;
}

int cmd_gradcheck(const Options& o) {
    const auto fx = make_gradcheck_fixture(o.run.model.hyper.seed);
    const auto r = check_model_gradients(fx);
    nlohmann::ordered_json j{{"parameters", fx.params.count()},
                             {"document_graph_edges", fx.doc_graph_edges},
                             {"checked", r.checked},
                             {"excluded", r.excluded},
                             {"max_relative_error", r.max_rel_error},
                             {"tolerance", o.gradcheck_tolerance}};
    std::cout << j.dump(2) << "\n";
    if (!(r.max_rel_error <= o.gradcheck_tolerance)) {
        std::cerr << "ligram: gradient check failed: max relative error " << r.max_rel_error << "\n";
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised short-text classification over morpheme, POS and entity graphs"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "flat key = value file; command-line flags take precedence");

    Options o;
    auto& hp = o.run.model.hyper;
    app.add_option("--corpus", o.run.corpus_path, "annotated corpus (JSON lines)");
    app.add_option("--morpheme-emb", o.run.morpheme_embeddings_path, "morpheme embedding file");
    app.add_option("--entity-emb", o.run.entity_embeddings_path, "entity embedding file");
    app.add_option("--out", o.run.out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", hp.seed, "seed for splits, initialization, dropout and fixtures")->capture_default_str();
    app.add_option("--min-freq", o.run.min_freq, "drop morphemes rarer than this")->capture_default_str();
    app.add_option("--per-class", o.run.per_class, "labeled documents per class (half train, half val)")
        ->capture_default_str();
    app.add_option("--embedding-dim", o.run.embedding_dim, "expected morpheme embedding dim (0 = any)")
        ->capture_default_str();
    app.add_option("--missing-embedding", o.missing, "policy for morphemes without an embedding")
        ->check(CLI::IsMember({"error", "zero-vector"}))
        ->capture_default_str();
    app.add_option("--hidden", hp.hidden)->capture_default_str();
    app.add_option("--window", hp.window, "PMI sliding window")->capture_default_str();
    app.add_option("--delta", hp.delta, "document graph threshold")->capture_default_str();
    app.add_option("--dropout", hp.dropout)->capture_default_str();
    app.add_option("--lambda", hp.lambda, "contrastive loss weight")->capture_default_str();
    app.add_option("--lr", hp.lr)->capture_default_str();
    app.add_option("--weight-decay", hp.weight_decay)->capture_default_str();
    app.add_option("--max-epochs", hp.max_epochs)->capture_default_str();
    app.add_option("--eval-every", hp.eval_every)->capture_default_str();
    app.add_option("--entity-min-sim", hp.entity_min_sim, "cosine threshold for entity edges")->capture_default_str();
    app.add_option("--temperature", hp.temperature, "contrastive temperature")->capture_default_str();
    app.add_flag("--no-morpheme", o.no_morpheme);
    app.add_flag("--no-pos", o.no_pos);
    app.add_flag("--no-entity", o.no_entity);
    app.add_flag("--no-semcon", o.no_semcon);
    app.add_flag("--clip-gradients", o.run.model.clip_gradients, "clip the global gradient norm at 5");
    app.add_option("--contrastive-scope", o.scope)
        ->check(CLI::IsMember({"all", "labeled"}))
        ->capture_default_str();
    app.add_option("--log-level", o.log_level)
        ->check(CLI::IsMember({"error", "quiet", "warn", "info", "debug"}))
        ->capture_default_str();

    auto* validate = app.add_subcommand("validate", "check corpus and embedding files and print statistics");
    auto* build = app.add_subcommand("build-graphs", "write adjacency, normalized adjacency and attention files");
    auto* train_cmd = app.add_subcommand("train", "train and write best.lgck and history.json");
    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on one split");
    eval_cmd->add_option("--checkpoint", o.checkpoint)->required();
    eval_cmd->add_option("--split", o.split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
    auto* ablate = app.add_subcommand("ablate", "train the eight ablation configurations");
    ablate->add_option("--seeds", o.seeds, "training seeds (default: --seed)")->delimiter(',');
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with embeddings");
    auto& s = o.synth;
    synth->add_option("--classes", s.classes)->capture_default_str();
    synth->add_option("--docs-per-class", s.docs_per_class)->capture_default_str();
    synth->add_option("--vocab-per-class", s.vocab_per_class)->capture_default_str();
    synth->add_option("--overlap", s.overlap, "fraction of tokens drawn from other classes")->capture_default_str();
    synth->add_option("--min-length", s.min_length)->capture_default_str();
    synth->add_option("--max-length", s.max_length)->capture_default_str();
    synth->add_option("--entity-density", s.entity_density)->capture_default_str();
    synth->add_option("--entities-per-class", s.entities_per_class)->capture_default_str();
    synth->add_option("--entity-overlap", s.entity_overlap)->capture_default_str();
    synth->add_option("--synth-dim", s.embedding_dim, "morpheme embedding dim")->capture_default_str();
    synth->add_option("--synth-entity-dim", s.entity_dim, "entity embedding dim")->capture_default_str();
    synth->add_option("--class-offset", s.class_offset)->capture_default_str();
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full loss on a micro-fixture");
    gradcheck->add_option("--tolerance", o.gradcheck_tolerance)->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    try {
        finalize(o);
        if (*validate) return cmd_validate(o);
        if (*build) return cmd_build_graphs(o);
        if (*train_cmd) return cmd_train(o);
        if (*eval_cmd) return cmd_evaluate(o);
        if (*ablate) return cmd_ablate(o);
        if (*synth) return cmd_synth(o);
        if (*gradcheck) return cmd_gradcheck(o);
    } catch (const std::exception& e) {
        std::cerr << "ligram: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
