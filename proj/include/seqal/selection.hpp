#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "seqal/matrix.hpp"

namespace seqal {

struct ClusterPrefilterConfig {
    int k = 50;
    int refresh_every = 100;
};

struct SelectionConfig {
    double rho = 0.003;
    double p_target = 0.5;
    std::optional<ClusterPrefilterConfig> cluster_prefilter;

    void validate() const;
};

struct Candidate {
    std::size_t pool_index = 0;
    double d_score = 0.0;
    double u_score = 0.0;
};

/// The chosen subject together with its uncertainty and its 1-based rank by
/// design score inside the uncertainty set.
struct Pick {
    std::size_t pool_index = 0;
    double u_score = 0.0;
    std::size_t d_rank = 0;
};

/// Scores candidates by the information they would add to the design.
class DesignCriterion {
public:
    virtual ~DesignCriterion() = default;
    virtual std::vector<Candidate> score(const Matrix& x, std::span<const std::size_t> candidates,
                                         const SymMatrix& fisher, std::span<const double> beta_hat) const = 0;
};

/// det(F + mu_dot(x^T b) x x^T), evaluated as det(F) (1 + mu_dot x^T F^{-1} x)
/// from a single Cholesky factor of F.
class DCriterion final : public DesignCriterion {
public:
    std::vector<Candidate> score(const Matrix& x, std::span<const std::size_t> candidates, const SymMatrix& fisher,
                                 std::span<const double> beta_hat) const override;
};

std::vector<Candidate> d_scores(const Matrix& x, std::span<const std::size_t> candidates, const SymMatrix& fisher,
                                std::span<const double> beta_hat);

/// Pool indices of the ceil(rho * |scored|) largest design scores, in
/// descending score order with ties broken by ascending pool index.
std::vector<std::size_t> uncertainty_set(std::span<const Candidate> scored, double rho);

/// |mu(x^T b) - p_target|
double u_score(std::span<const double> x, std::span<const double> beta_hat, double p_target);

/// Minimiser of the uncertainty score over `u` (ties: ascending pool index).
/// Throws EmptyUncertaintySet.
Pick select_next(std::span<const std::size_t> u, const Matrix& x, std::span<const double> beta_hat, double p_target);

/// Design ranking followed by uncertainty sampling over `candidates`.
Pick select_from(const Matrix& x, std::span<const std::size_t> candidates, const SymMatrix& fisher,
                 std::span<const double> beta_hat, const SelectionConfig& cfg);

struct KMeansResult {
    std::vector<int> assignment;  ///< per input row
    Matrix centroids;
    int iterations = 0;
};

/// Lloyd's k-means on the given rows of `x` with seeded k-means++ seeding,
/// at most `max_iterations` rounds.
KMeansResult kmeans(const Matrix& x, std::span<const std::size_t> rows, int k, std::uint64_t seed,
                    int max_iterations = 50);

/// Cluster partition of the unlabeled pool used to shortcut selection: the
/// design/uncertainty scan runs over one representative per cluster (the
/// member nearest its centroid), then over the winning representative's
/// whole cluster.
class ClusterPrefilter {
public:
    ClusterPrefilter(const Matrix& x, std::span<const std::size_t> candidates, int k, std::uint64_t seed);

    Pick select(const Matrix& x, std::span<const std::uint8_t> available, const SymMatrix& fisher,
                std::span<const double> beta_hat, const SelectionConfig& cfg) const;

    const KMeansResult& clustering() const noexcept { return clusters_; }

private:
    std::vector<std::size_t> rows_;
    KMeansResult clusters_;
};

}  // namespace seqal
