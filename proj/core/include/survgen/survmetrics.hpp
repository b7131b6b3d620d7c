#pragma once

#include "survgen/tensor.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace survgen {

// One subject's outcome. bin is assigned from the source training split's
// uncensored-time quartiles and never recomputed downstream.
struct SurvivalRecord {
    double time = 0.0;
    bool event = false; // true = death observed, false = censored
    std::size_t bin = 0;
};

// Product-limit survival curve; one step per distinct event time.
struct KMCurve {
    std::vector<double> times;
    std::vector<double> survival;
    std::vector<std::size_t> at_risk;
    std::vector<std::size_t> deaths;
};

// Interval edges for discretizing times into B bins. edges has B-1 entries;
// time t lands in the first bin whose upper edge is > t (last bin otherwise).
std::vector<double> quartile_bin_edges(const std::vector<SurvivalRecord>& records, std::size_t bins);
std::size_t assign_bin(double time, const std::vector<double>& edges);

// Censored discrete-hazard negative log-likelihood, mean over the batch.
// hazards is n x B with entries in (0,1); logs are clamped at 1e-12.
double discrete_nll(const std::vector<std::vector<double>>& hazards,
                    const std::vector<SurvivalRecord>& records);

// Same likelihood on raw logits, kept inside the graph. Uses softplus
// identities (log h = -softplus(-z), log(1-h) = softplus(-z) - softplus(z)
// collapsed to -softplus(z)) so extreme logits stay finite.
Tensor discrete_nll_logits(const Tensor& logits, const std::vector<SurvivalRecord>& records);

// Negative expected number of bins survived: -sum_b prod_{k<=b} (1 - h_k).
// Higher value = worse prognosis.
double risk_score(const std::vector<double>& hazards);

// Harrell concordance. Pairs (i, j) are comparable iff time_i < time_j and
// event_i; concordant iff risk_i > risk_j; risk ties count half.
// O(n log n) via order-statistic counting.
double concordance_index(const std::vector<double>& risks,
                         const std::vector<SurvivalRecord>& records);

KMCurve km_estimator(const std::vector<SurvivalRecord>& records);

// Indices with risk <= median go low; median is the lower-middle order
// statistic for even n, so the split is deterministic under ties.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
median_risk_split(const std::vector<double>& risks);

} // namespace survgen
