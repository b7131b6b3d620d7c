#include "survgen/survmetrics.hpp"

#include "survgen/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace survgen {

namespace {

void require_finite_risks(const std::vector<double>& risks) {
    for (double r : risks)
        if (!std::isfinite(r)) fail(ErrorCategory::Numeric, "risk scores must be finite");
}

double clamped_log(double x) { return std::log(std::max(x, 1e-12)); }

// Fenwick tree over 1-based ranks.
class BitCounter {
public:
    explicit BitCounter(std::size_t n) : tree_(n + 1, 0) {}

    void add(std::size_t rank) {
        for (std::size_t i = rank; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
        ++total_;
    }

    std::size_t prefix(std::size_t rank) const {
        std::size_t acc = 0;
        for (std::size_t i = rank; i > 0; i -= i & (~i + 1)) acc += tree_[i];
        return acc;
    }

    std::size_t total() const { return total_; }

private:
    std::vector<std::size_t> tree_;
    std::size_t total_ = 0;
};

} // namespace

std::vector<double> quartile_bin_edges(const std::vector<SurvivalRecord>& records,
                                       std::size_t bins) {
    if (bins < 2) fail(ErrorCategory::Param, "quartile_bin_edges: need at least 2 bins");
    if (records.empty()) fail(ErrorCategory::Data, "quartile_bin_edges: empty record set");
    std::vector<double> times;
    for (const SurvivalRecord& r : records)
        if (r.event) times.push_back(r.time);
    if (times.empty()) // fully censored split: fall back to all observed times
        for (const SurvivalRecord& r : records) times.push_back(r.time);
    std::sort(times.begin(), times.end());
    std::vector<double> edges(bins - 1);
    for (std::size_t k = 1; k < bins; ++k) {
        std::size_t idx = k * times.size() / bins;
        if (idx >= times.size()) idx = times.size() - 1;
        edges[k - 1] = times[idx];
    }
    return edges;
}

std::size_t assign_bin(double time, const std::vector<double>& edges) {
    for (std::size_t k = 0; k < edges.size(); ++k)
        if (time < edges[k]) return k;
    return edges.size();
}

double discrete_nll(const std::vector<std::vector<double>>& hazards,
                    const std::vector<SurvivalRecord>& records) {
    if (hazards.size() != records.size() || hazards.empty())
        fail(ErrorCategory::Batch, "discrete_nll: " + std::to_string(hazards.size()) +
                                       " hazard rows vs " + std::to_string(records.size()) +
                                       " records");
    const std::size_t bins = hazards.front().size();
    double acc = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& h = hazards[i];
        const SurvivalRecord& r = records[i];
        if (h.size() != bins) fail(ErrorCategory::Shape, "discrete_nll: ragged hazard rows");
        if (r.bin >= bins)
            fail(ErrorCategory::Data, "discrete_nll: bin " + std::to_string(r.bin) +
                                          " out of range for B=" + std::to_string(bins));
        double li = 0.0;
        if (r.event) {
            li -= clamped_log(h[r.bin]);
            for (std::size_t k = 0; k < r.bin; ++k) li -= clamped_log(1.0 - h[k]);
        } else {
            for (std::size_t k = 0; k <= r.bin; ++k) li -= clamped_log(1.0 - h[k]);
        }
        acc += li;
    }
    return acc / static_cast<double>(records.size());
}

Tensor discrete_nll_logits(const Tensor& logits, const std::vector<SurvivalRecord>& records) {
    const std::size_t n = logits.rows(), bins = logits.cols();
    if (n != records.size() || n == 0)
        fail(ErrorCategory::Batch, "discrete_nll_logits: " + std::to_string(n) +
                                       " logit rows vs " + std::to_string(records.size()) +
                                       " records");
    // event=1: softplus(-z_b) + sum_{k<b} softplus(z_k)
    // event=0: sum_{k<=b} softplus(z_k)
    std::vector<double> pos_w(n * bins, 0.0), neg_w(n * bins, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const SurvivalRecord& r = records[i];
        if (r.bin >= bins)
            fail(ErrorCategory::Data, "discrete_nll_logits: bin " + std::to_string(r.bin) +
                                          " out of range for B=" + std::to_string(bins));
        if (r.event) {
            neg_w[i * bins + r.bin] = 1.0;
            for (std::size_t k = 0; k < r.bin; ++k) pos_w[i * bins + k] = 1.0;
        } else {
            for (std::size_t k = 0; k <= r.bin; ++k) pos_w[i * bins + k] = 1.0;
        }
    }
    Tensor wp(Shape{n, bins}, std::move(pos_w), false);
    Tensor wn(Shape{n, bins}, std::move(neg_w), false);
    Tensor per_entry = add(mul(wp, softplus(logits)), mul(wn, softplus(neg(logits))));
    return scale(sum(per_entry), 1.0 / static_cast<double>(n));
}

double risk_score(const std::vector<double>& hazards) {
    if (hazards.empty()) fail(ErrorCategory::Param, "risk_score: empty hazard vector");
    double surv = 1.0, acc = 0.0;
    for (double h : hazards) {
        surv *= 1.0 - h;
        acc += surv;
    }
    return -acc;
}

double concordance_index(const std::vector<double>& risks,
                         const std::vector<SurvivalRecord>& records) {
    const std::size_t n = risks.size();
    if (n != records.size() || n < 2)
        fail(ErrorCategory::Batch, "concordance_index: need matching risks/records, n >= 2");
    require_finite_risks(risks);

    std::vector<double> sorted_risks = risks;
    std::sort(sorted_risks.begin(), sorted_risks.end());
    sorted_risks.erase(std::unique(sorted_risks.begin(), sorted_risks.end()), sorted_risks.end());
    auto rank_of = [&](double r) {
        return static_cast<std::size_t>(
                   std::lower_bound(sorted_risks.begin(), sorted_risks.end(), r) -
                   sorted_risks.begin()) +
               1;
    };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return records[a].time < records[b].time; });

    // Sweep times ascending; the tree holds risk ranks of event subjects with
    // strictly smaller time. Equal-time groups query before inserting, so
    // time ties never form comparable pairs.
    BitCounter tree(sorted_risks.size());
    double concordant = 0.0;
    std::size_t comparable = 0;
    std::size_t g = 0;
    while (g < n) {
        std::size_t h = g;
        while (h < n && records[order[h]].time == records[order[g]].time) ++h;
        for (std::size_t k = g; k < h; ++k) {
            const std::size_t j = order[k];
            const std::size_t rank = rank_of(risks[j]);
            const std::size_t earlier = tree.total();
            if (earlier == 0) continue;
            const std::size_t le = tree.prefix(rank);
            const std::size_t eq = le - tree.prefix(rank - 1);
            comparable += earlier;
            concordant += static_cast<double>(earlier - le) + 0.5 * static_cast<double>(eq);
        }
        for (std::size_t k = g; k < h; ++k) {
            const std::size_t j = order[k];
            if (records[j].event) tree.add(rank_of(risks[j]));
        }
        g = h;
    }
    if (comparable == 0)
        fail(ErrorCategory::Metric, "concordance_index: no comparable pairs");
    return concordant / static_cast<double>(comparable);
}

KMCurve km_estimator(const std::vector<SurvivalRecord>& records) {
    if (records.empty()) fail(ErrorCategory::Data, "km_estimator: empty record set");
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return records[a].time < records[b].time; });

    KMCurve curve;
    double surv = 1.0;
    std::size_t remaining = records.size();
    std::size_t g = 0;
    while (g < order.size()) {
        std::size_t h = g;
        std::size_t deaths = 0;
        while (h < order.size() && records[order[h]].time == records[order[g]].time) {
            if (records[order[h]].event) ++deaths;
            ++h;
        }
        if (deaths > 0) {
            surv *= 1.0 - static_cast<double>(deaths) / static_cast<double>(remaining);
            curve.times.push_back(records[order[g]].time);
            curve.survival.push_back(surv);
            curve.at_risk.push_back(remaining);
            curve.deaths.push_back(deaths);
        }
        remaining -= h - g;
        g = h;
    }
    return curve;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
median_risk_split(const std::vector<double>& risks) {
    if (risks.size() < 2) fail(ErrorCategory::Batch, "median_risk_split: need at least 2 risks");
    require_finite_risks(risks);
    std::vector<double> sorted = risks;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[(sorted.size() - 1) / 2];
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split;
    for (std::size_t i = 0; i < risks.size(); ++i) {
        if (risks[i] <= median)
            split.first.push_back(i);
        else
            split.second.push_back(i);
    }
    return split;
}

} // namespace survgen
