#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ligram/autodiff.hpp"
#include "ligram/error.hpp"
#include "ligram/model.hpp"

namespace ligram {

/// Softmax topic distribution per document and its argmax pseudo-topic.
struct TopicAssignment {
    Eigen::MatrixXd distribution;
    std::vector<std::size_t> topics;
};

template <typename Derived>
TopicAssignment assign_pseudo_topics(const Eigen::MatrixBase<Derived>& logits) {
    if (logits.cols() < 2) throw Error("pseudo-topics need at least two classes");
    auto p = predict(logits);
    return {std::move(p.probabilities), std::move(p.classes)};
}

/// Same, from a tape node. The assignment is a detached target; it is folded
/// into the tape signature because it is a discrete decision.
template <typename T>
TopicAssignment assign_pseudo_topics(ad::Var<T> logits) {
    auto a = assign_pseudo_topics(logits.value());
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (const auto t : a.topics) h = (h ^ t) * 0x100000001b3ULL;
    logits.tape().mark(h);
    return a;
}

/// Z_i: the other in-scope documents; P_i: those of Z_i sharing i's pseudo-topic.
/// Out-of-scope documents get empty sets.
struct ContrastivePairs {
    std::vector<std::vector<std::size_t>> positives;
    std::vector<std::vector<std::size_t>> candidates;
    std::size_t scope_size = 0;
};

inline ContrastivePairs form_pairs(const TopicAssignment& assignment, const std::vector<bool>& in_scope) {
    const std::size_t n = assignment.topics.size();
    if (in_scope.size() != n) throw Error("scope mask size does not match the document count");
    ContrastivePairs pairs;
    pairs.positives.resize(n);
    pairs.candidates.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!in_scope[i]) continue;
        ++pairs.scope_size;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || !in_scope[j]) continue;
            pairs.candidates[i].push_back(j);
            if (assignment.topics[j] == assignment.topics[i]) pairs.positives[i].push_back(j);
        }
    }
    return pairs;
}

inline ContrastivePairs form_pairs(const TopicAssignment& assignment) {
    return form_pairs(assignment, std::vector<bool>(assignment.topics.size(), true));
}

/// Mean over in-scope documents of
///   L_i = -1/|P_i| sum_{p in P_i} log( exp(sim(i,p)) / sum_{a in Z_i} exp(sim(i,a)) )
/// with sim = cosine / temperature. Documents with empty P_i contribute 0 but
/// stay in the denominator.
template <typename T>
ad::Var<T> contrastive_loss(ad::Var<T> embeddings, const ContrastivePairs& pairs, double temperature = 1.0) {
    if (!(temperature > 0.0)) throw Error("temperature must be positive");
    const auto n = embeddings.rows();
    if (pairs.positives.size() != static_cast<std::size_t>(n) || pairs.candidates.size() != static_cast<std::size_t>(n)) {
        throw Error("contrastive pairs do not match the embedding rows");
    }
    auto& tape = embeddings.tape();
    if (pairs.scope_size == 0) return tape.constant(ad::Matrix<T>::Zero(1, 1));

    const auto sim = ad::scale(ad::cosine_similarity_matrix(embeddings), static_cast<T>(1.0 / temperature));
    const auto& s = sim.value();

    ad::Matrix<T> candidate_mask = ad::Matrix<T>::Zero(n, n);
    ad::Matrix<T> positive_weight = ad::Matrix<T>::Zero(n, n);
    ad::Matrix<T> active = ad::Matrix<T>::Zero(n, 1);
    ad::Matrix<T> row_max = ad::Matrix<T>::Zero(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& z = pairs.candidates[static_cast<std::size_t>(i)];
        const auto& p = pairs.positives[static_cast<std::size_t>(i)];
        if (!z.empty()) {
            T m = s(i, static_cast<Eigen::Index>(z.front()));
            for (const auto a : z) {
                candidate_mask(i, static_cast<Eigen::Index>(a)) = T(1);
                m = std::max(m, s(i, static_cast<Eigen::Index>(a)));
            }
            row_max(i, 0) = m;
        }
        if (!p.empty()) {
            active(i, 0) = T(1);
            const T w = static_cast<T>(1.0 / static_cast<double>(p.size()));
            for (const auto q : p) positive_weight(i, static_cast<Eigen::Index>(q)) = w;
        }
    }
    const ad::Matrix<T> inactive = (ad::Matrix<T>::Ones(n, 1) - active);

    // log-sum-exp over Z_i, shifted by a constant row max
    const auto shift = tape.constant(row_max);
    const auto e = ad::exp(ad::sub(sim, shift));
    const auto denom = ad::add(ad::row_sum(ad::mul(e, tape.constant(candidate_mask))), tape.constant(inactive));
    const auto lse = ad::add(ad::log(denom), shift);
    const auto normalizer = ad::sum(ad::mul(lse, tape.constant(active)));
    const auto attraction = ad::sum(ad::mul(sim, tape.constant(positive_weight)));
    return ad::scale(ad::sub(normalizer, attraction), static_cast<T>(1.0 / static_cast<double>(pairs.scope_size)));
}

} // namespace ligram
