#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <variant>
#include <vector>

#include "common.hpp"

namespace oltr {

using Ranking = std::vector<std::size_t>;

/// lists[0] is the current best ranker, lists[1..n] the candidates.
struct RankingSlate {
    std::vector<Ranking> lists;
};

/// Team-draft attribution: which ranker contributed each displayed slot.
struct TeamAttribution {
    std::vector<std::size_t> team_of_slot;
    std::size_t num_teams = 0;
};

/// Probabilistic attribution: placement_probability[slot][ranker] is the
/// probability that ranker would have placed the displayed document at that step.
struct ProbabilisticAttribution {
    std::vector<std::vector<double>> placement_probability;
};

struct MultileaveOutcome {
    Ranking displayed;
    std::variant<TeamAttribution, ProbabilisticAttribution> attribution;
};

/// One flag per displayed slot.
using ClickVector = std::vector<bool>;

/// Candidate indices (>= 1) preferred over the current best, ascending.
using WinnerSet = std::vector<std::size_t>;

/// Rounds of team-draft: each round visits the teams in a fresh random order and
/// every team appends its highest-ranked document not yet displayed.
inline MultileaveOutcome team_draft_multileave(const RankingSlate& slate, std::size_t kappa, Rng& rng) {
    if (kappa == 0) throw ValidationError("display depth must be >= 1");
    const std::size_t teams = slate.lists.size();
    MultileaveOutcome out;
    TeamAttribution attr{{}, teams};
    std::vector<std::size_t> cursor(teams, 0);
    std::vector<std::size_t> order(teams);
    std::vector<bool> shown;
    auto is_shown = [&](std::size_t d) { return d < shown.size() && shown[d]; };

    bool progress = true;
    while (out.displayed.size() < kappa && progress) {
        progress = false;
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t team : order) {
            if (out.displayed.size() >= kappa) break;
            const auto& list = slate.lists[team];
            while (cursor[team] < list.size() && is_shown(list[cursor[team]])) ++cursor[team];
            if (cursor[team] == list.size()) continue;
            const auto d = list[cursor[team]];
            if (d >= shown.size()) shown.resize(d + 1, false);
            shown[d] = true;
            out.displayed.push_back(d);
            attr.team_of_slot.push_back(team);
            progress = true;
        }
    }
    out.attribution = std::move(attr);
    return out;
}

/// b = { j >= 1 : clicks credited to j > clicks credited to the current best }.
inline WinnerSet team_draft_infer(const MultileaveOutcome& outcome, const ClickVector& clicks) {
    const auto& attr = std::get<TeamAttribution>(outcome.attribution);
    if (clicks.size() != outcome.displayed.size()) throw ValidationError("click vector length differs from display");
    std::vector<std::size_t> credit(attr.num_teams, 0);
    for (std::size_t s = 0; s < clicks.size(); ++s)
        if (clicks[s]) ++credit[attr.team_of_slot[s]];
    WinnerSet winners;
    for (std::size_t j = 1; j < attr.num_teams; ++j)
        if (credit[j] > credit[0]) winners.push_back(j);
    return winners;
}

struct ProbabilisticOptions {
    /// Rank decay exponent of each ranker's document distribution.
    double tau = 3.0;
};

/// Each ranker places document d with probability proportional to 1/rank(d)^tau,
/// renormalized over the documents not yet displayed. Per slot a ranker is picked
/// uniformly and one document is sampled from its distribution.
inline MultileaveOutcome probabilistic_multileave(const RankingSlate& slate, std::size_t kappa, Rng& rng,
                                                  ProbabilisticOptions opts = {}) {
    if (kappa == 0) throw ValidationError("display depth must be >= 1");
    const std::size_t rankers = slate.lists.size();
    if (rankers == 0) throw ValidationError("slate has no rankings");

    std::size_t universe = 0;
    std::size_t longest = 0;
    for (const auto& l : slate.lists) {
        longest = std::max(longest, l.size());
        for (auto d : l) universe = std::max(universe, d + 1);
    }
    std::vector<double> decay(longest);
    for (std::size_t i = 0; i < longest; ++i) decay[i] = 1.0 / std::pow(static_cast<double>(i + 1), opts.tau);

    // rank_weight[r][d] = 1 / rank^tau for documents in r's list, 0 otherwise.
    std::vector<std::vector<double>> rank_weight(rankers, std::vector<double>(universe, 0.0));
    std::vector<double> remaining(rankers, 0.0);
    for (std::size_t r = 0; r < rankers; ++r) {
        const auto& list = slate.lists[r];
        for (std::size_t i = 0; i < list.size(); ++i) {
            rank_weight[r][list[i]] = decay[i];
            remaining[r] += decay[i];
        }
    }

    std::vector<bool> placed(universe, false);
    std::size_t available = 0;
    for (std::size_t d = 0; d < universe; ++d) {
        bool any = false;
        for (std::size_t r = 0; r < rankers && !any; ++r) any = rank_weight[r][d] > 0.0;
        if (any) ++available;
        else placed[d] = true;
    }

    MultileaveOutcome out;
    ProbabilisticAttribution attr;
    const std::size_t slots = std::min(kappa, available);
    std::vector<std::size_t> live;
    for (std::size_t s = 0; s < slots; ++s) {
        live.clear();
        for (std::size_t r = 0; r < rankers; ++r)
            if (remaining[r] > 0.0) live.push_back(r);
        const auto r = live[std::uniform_int_distribution<std::size_t>(0, live.size() - 1)(rng)];

        const auto& list = slate.lists[r];
        double target = uniform01(rng) * remaining[r];
        std::size_t chosen = universe;
        for (auto d : list) {
            if (placed[d]) continue;
            chosen = d;
            target -= rank_weight[r][d];
            if (target < 0.0) break;
        }

        std::vector<double> probs(rankers, 0.0);
        for (std::size_t q = 0; q < rankers; ++q)
            if (remaining[q] > 0.0) probs[q] = rank_weight[q][chosen] / remaining[q];
        attr.placement_probability.push_back(std::move(probs));
        out.displayed.push_back(chosen);

        placed[chosen] = true;
        for (std::size_t q = 0; q < rankers; ++q) {
            if (rank_weight[q][chosen] == 0.0) continue;
            remaining[q] -= rank_weight[q][chosen];
            // Recompute from scratch when cancellation leaves a meaningless residue.
            if (remaining[q] < 1e-12) {
                remaining[q] = 0.0;
                for (auto d : slate.lists[q])
                    if (!placed[d]) remaining[q] += rank_weight[q][d];
            }
        }
    }
    out.attribution = std::move(attr);
    return out;
}

/// Sample-based credit inference. Each sample assigns every clicked document to
/// one ranker with probability proportional to its recorded placement
/// probability; a candidate wins the sample when its credit exceeds the current
/// best's. Winners are the candidates that win strictly more than half the samples.
inline WinnerSet probabilistic_infer(const MultileaveOutcome& outcome, const ClickVector& clicks,
                                     std::size_t num_samples, Rng& rng) {
    const auto& attr = std::get<ProbabilisticAttribution>(outcome.attribution);
    if (clicks.size() != outcome.displayed.size()) throw ValidationError("click vector length differs from display");
    if (num_samples == 0) throw ValidationError("inference needs at least one sample");

    // Cumulative assignment distribution for each clicked slot.
    std::vector<std::vector<double>> cumulative;
    std::size_t rankers = 0;
    for (std::size_t s = 0; s < clicks.size(); ++s) {
        if (!clicks[s]) continue;
        const auto& p = attr.placement_probability[s];
        rankers = p.size();
        std::vector<double> c(p.size());
        std::partial_sum(p.begin(), p.end(), c.begin());
        cumulative.push_back(std::move(c));
    }
    if (cumulative.empty()) return {};

    std::vector<std::size_t> wins(rankers, 0);
    std::vector<std::size_t> credit(rankers, 0);
    std::vector<std::size_t> touched;
    touched.reserve(cumulative.size());
    for (std::size_t n = 0; n < num_samples; ++n) {
        touched.clear();
        for (const auto& c : cumulative) {
            const double u = uniform01(rng) * c.back();
            auto r = static_cast<std::size_t>(std::upper_bound(c.begin(), c.end(), u) - c.begin());
            if (r >= rankers) r = rankers - 1;
            if (credit[r]++ == 0) touched.push_back(r);
        }
        const auto base = credit[0];
        for (auto r : touched) {
            if (r != 0 && credit[r] > base) ++wins[r];
            credit[r] = 0;
        }
    }
    WinnerSet winners;
    for (std::size_t j = 1; j < rankers; ++j)
        if (2 * wins[j] > num_samples) winners.push_back(j);
    return winners;
}

}  // namespace oltr
