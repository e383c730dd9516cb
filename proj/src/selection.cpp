#include "seqal/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "seqal/error.hpp"
#include "seqal/glm.hpp"
#include "seqal/numerics.hpp"

namespace seqal {

void SelectionConfig::validate() const {
    if (!(rho > 0.0 && rho <= 1.0)) throw Error(ErrorCode::InvalidArgument, "rho must lie in (0, 1]");
    if (!(p_target > 0.0 && p_target < 1.0))
        throw Error(ErrorCode::InvalidArgument, "target probability must lie in (0, 1)");
    if (cluster_prefilter) {
        if (cluster_prefilter->k < 1) throw Error(ErrorCode::InvalidArgument, "cluster count must be >= 1");
        if (cluster_prefilter->refresh_every < 1)
            throw Error(ErrorCode::InvalidArgument, "cluster refresh interval must be >= 1");
    }
}

std::vector<Candidate> DCriterion::score(const Matrix& x, std::span<const std::size_t> candidates,
                                         const SymMatrix& fisher, std::span<const double> beta_hat) const {
    const Cholesky chol(fisher);
    const double det_f = chol.determinant();
    std::vector<Candidate> out(candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        const auto xi = x.row(candidates[k]);
        const double w = mu_dot(dot(xi, beta_hat));
        out[k].pool_index = candidates[k];
        out[k].d_score = det_f * (1.0 + w * chol.inverse_quadratic(xi));
    }
    return out;
}

std::vector<Candidate> d_scores(const Matrix& x, std::span<const std::size_t> candidates, const SymMatrix& fisher,
                                std::span<const double> beta_hat) {
    return DCriterion{}.score(x, candidates, fisher, beta_hat);
}

std::vector<std::size_t> uncertainty_set(std::span<const Candidate> scored, double rho) {
    if (scored.empty()) throw Error(ErrorCode::EmptyUncertaintySet, "no candidates to rank");
    const std::size_t total = scored.size();
    // The small offset keeps e.g. 0.1 * 30 from rounding up to 4.
    auto keep = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(total) - 1e-9));
    keep = std::clamp<std::size_t>(keep, 1, total);

    std::vector<const Candidate*> order(total);
    for (std::size_t k = 0; k < total; ++k) order[k] = &scored[k];
    auto by_score = [](const Candidate* a, const Candidate* b) {
        if (a->d_score != b->d_score) return a->d_score > b->d_score;
        return a->pool_index < b->pool_index;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), by_score);

    std::vector<std::size_t> out(keep);
    for (std::size_t k = 0; k < keep; ++k) out[k] = order[k]->pool_index;
    return out;
}

double u_score(std::span<const double> x, std::span<const double> beta_hat, double p_target) {
    return std::abs(mu(dot(x, beta_hat)) - p_target);
}

Pick select_next(std::span<const std::size_t> u, const Matrix& x, std::span<const double> beta_hat, double p_target) {
    if (u.empty()) throw Error(ErrorCode::EmptyUncertaintySet, "uncertainty set is empty");
    Pick best;
    best.u_score = std::numeric_limits<double>::infinity();
    for (std::size_t rank = 0; rank < u.size(); ++rank) {
        const std::size_t idx = u[rank];
        const double s = u_score(x.row(idx), beta_hat, p_target);
        if (s < best.u_score || (s == best.u_score && idx < best.pool_index)) {
            best = Pick{idx, s, rank + 1};
        }
    }
    return best;
}

Pick select_from(const Matrix& x, std::span<const std::size_t> candidates, const SymMatrix& fisher,
                 std::span<const double> beta_hat, const SelectionConfig& cfg) {
    const auto scored = d_scores(x, candidates, fisher, beta_hat);
    const auto u = uncertainty_set(scored, cfg.rho);
    return select_next(u, x, beta_hat, cfg.p_target);
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

}  // namespace

KMeansResult kmeans(const Matrix& x, std::span<const std::size_t> rows, int k, std::uint64_t seed,
                    int max_iterations) {
    const std::size_t n = rows.size();
    if (k < 1 || static_cast<std::size_t>(k) > n)
        throw Error(ErrorCode::InvalidArgument, "cluster count must lie in [1, number of points]");
    const std::size_t p = x.cols();
    std::mt19937_64 rng(seed);

    KMeansResult res;
    res.centroids = Matrix(static_cast<std::size_t>(k), p);
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    std::vector<std::uint8_t> chosen(n, 0);
    chosen[first] = 1;
    std::copy_n(x.row(rows[first]).begin(), p, res.centroids.row(0).begin());
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], sq_dist(x.row(rows[i]), res.centroids.row(c - 1)));
            total += nearest[i];
        }
        std::size_t next = n;
        if (total > 0.0) {
            double r = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                r -= nearest[i];
                if (r <= 0.0) {
                    next = i;
                    break;
                }
            }
        }
        if (next == n) {
            // Duplicate points exhausted the distance mass: take the first unused row.
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) {
                    next = i;
                    break;
                }
        }
        chosen[next] = 1;
        std::copy_n(x.row(rows[next]).begin(), p, res.centroids.row(c).begin());
    }

    res.assignment.assign(n, -1);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k));
    for (res.iterations = 0; res.iterations < max_iterations;) {
        ++res.iterations;
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = sq_dist(x.row(rows[i]), res.centroids.row(c));
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (res.assignment[i] != best) {
                res.assignment[i] = best;
                changed = true;
            }
        }
        if (!changed) break;
        Matrix sums(static_cast<std::size_t>(k), p);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(res.assignment[i]);
            ++counts[c];
            auto xi = x.row(rows[i]);
            for (std::size_t j = 0; j < p; ++j) sums(c, j) += xi[j];
        }
        for (std::size_t c = 0; c < counts.size(); ++c) {
            if (counts[c] == 0) continue;  // empty cluster keeps its old centroid
            for (std::size_t j = 0; j < p; ++j) res.centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
        }
    }
    return res;
}

ClusterPrefilter::ClusterPrefilter(const Matrix& x, std::span<const std::size_t> candidates, int k,
                                   std::uint64_t seed)
    : rows_(candidates.begin(), candidates.end()),
      clusters_(kmeans(x, candidates, std::min<int>(k, static_cast<int>(candidates.size())), seed)) {}

Pick ClusterPrefilter::select(const Matrix& x, std::span<const std::uint8_t> available, const SymMatrix& fisher,
                              std::span<const double> beta_hat, const SelectionConfig& cfg) const {
    const std::size_t k = clusters_.centroids.rows();
    std::vector<std::size_t> rep(k, rows_.size());
    std::vector<double> rep_d(k, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        if (!available[rows_[i]]) continue;
        const auto c = static_cast<std::size_t>(clusters_.assignment[i]);
        const double d = sq_dist(x.row(rows_[i]), clusters_.centroids.row(c));
        if (d < rep_d[c]) {
            rep_d[c] = d;
            rep[c] = i;
        }
    }
    std::vector<std::size_t> reps;
    std::vector<int> rep_cluster;
    for (std::size_t c = 0; c < k; ++c) {
        if (rep[c] == rows_.size()) continue;
        reps.push_back(rows_[rep[c]]);
        rep_cluster.push_back(static_cast<int>(c));
    }
    if (reps.empty()) throw Error(ErrorCode::EmptyUncertaintySet, "no available subjects in any cluster");

    const Pick winner = select_from(x, reps, fisher, beta_hat, cfg);
    int cluster = -1;
    for (std::size_t r = 0; r < reps.size(); ++r)
        if (reps[r] == winner.pool_index) cluster = rep_cluster[r];

    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < rows_.size(); ++i)
        if (available[rows_[i]] && clusters_.assignment[i] == cluster) members.push_back(rows_[i]);
    return select_from(x, members, fisher, beta_hat, cfg);
}

}  // namespace seqal
