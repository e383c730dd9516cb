#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqal/glm.hpp"
#include "seqal/matrix.hpp"
#include "seqal/selection.hpp"
#include "seqal/shrinkage.hpp"
#include "seqal/stopping.hpp"

namespace seqal {

enum class EstimatorMode { ASE, MLE };

std::string to_string(EstimatorMode mode);
EstimatorMode parse_estimator(const std::string& s);

struct LearnerConfig {
    ShrinkageConfig shrinkage;
    SelectionConfig selection;
    StoppingConfig stopping;
    EstimatorMode estimator = EstimatorMode::ASE;
    /// Cap on labeled subjects; 0 means the pool size.
    std::size_t max_steps = 0;
    std::uint64_t seed = 0;

    void validate(std::size_t p) const;
};

/// Candidate subjects with optional hidden labels. The learner tracks which
/// subjects it has acquired; a Pool only carries the data.
struct Pool {
    std::shared_ptr<const Matrix> features;
    std::optional<std::vector<int>> labels;

    static Pool make(Matrix x, std::optional<std::vector<int>> y = std::nullopt);
    std::size_t size() const { return features ? features->rows() : 0; }
    std::size_t dim() const { return features ? features->cols() : 0; }
};

/// Label source. Implementations must return the same label every time the
/// same subject is asked for; interactive oracles may block.
class Oracle {
public:
    virtual ~Oracle() = default;
    virtual int label(std::size_t subject) = 0;
};

/// Reveals pre-recorded labels and counts how often each subject was asked.
class ReplayOracle final : public Oracle {
public:
    explicit ReplayOracle(std::vector<int> labels) : labels_(std::move(labels)) {}

    int label(std::size_t subject) override;

    std::size_t calls() const noexcept { return calls_; }
    std::size_t max_calls_per_subject() const;

private:
    std::vector<int> labels_;
    std::size_t calls_ = 0;
    std::unordered_map<std::size_t, std::size_t> per_subject_;
};

/// Model summary after the labeled set reached size n.
struct Evaluation {
    std::size_t n = 0;
    Vector beta_tilde;
    Vector beta_hat;
    Indicators indicators;
    std::optional<int> p0_hat;  ///< absent in MLE mode
    std::optional<double> L;
    SymMatrix fisher_hat;       ///< information at beta_hat
    std::optional<double> nu_n;
    std::optional<double> a_n_sq;
    std::optional<double> threshold;
    bool stopped = false;
    std::optional<double> kappa;
    bool converged = false;
    bool separation = false;
};

struct TraceRecord {
    std::size_t n = 0;
    std::optional<double> nu_n;
    std::optional<double> threshold;
    int p0_hat = 0;
    std::optional<std::size_t> selected;
};

struct Query {
    std::size_t subject = 0;
    bool bootstrap = false;
    std::optional<double> u_score;
    std::optional<std::size_t> d_rank;
};

/// Uniform draw of `n0` distinct subjects for initial sampling attempt `attempt`.
std::vector<std::size_t> bootstrap_draw(std::size_t pool_size, std::size_t n0, std::uint64_t seed, int attempt);

struct InitialSample {
    std::vector<std::size_t> subjects;
    std::vector<int> labels;
    int attempts = 0;
};

/// Replay-mode initial sample: draw n0 subjects and redraw (at most 50 times)
/// until both classes appear. Labels already obtained are cached so no subject
/// is sent to the oracle twice. Throws CannotBalance.
InitialSample init_sample(const Pool& pool, std::size_t n0, std::uint64_t seed, Oracle& oracle);

/// One active-learning session as a state machine. Each submitted label
/// triggers refit, shrinkage and the stopping check, and, unless stopped,
/// selection of the next subject to query.
class ActiveLearner {
public:
    enum class Phase { Bootstrap, Active, Stopped, Capped, Exhausted };

    /// Bootstrap subjects come from bootstrap_draw(attempt 0); if they end up
    /// single-class, further random subjects are queried until both classes
    /// are present.
    ActiveLearner(std::shared_ptr<const Matrix> features, LearnerConfig cfg);
    /// Uses the given bootstrap subjects.
    ActiveLearner(std::shared_ptr<const Matrix> features, LearnerConfig cfg, std::vector<std::size_t> bootstrap);

    Phase phase() const noexcept { return phase_; }
    bool finished() const noexcept { return phase_ == Phase::Stopped || phase_ == Phase::Capped || phase_ == Phase::Exhausted; }

    std::optional<Query> pending() const;

    /// Records the label of the pending subject and advances. Throws
    /// InvalidArgument when `subject` is not the pending one or the session is
    /// finished, NonBinaryLabel for labels outside {0, 1}.
    void submit(std::size_t subject, int label);

    const LearnerConfig& config() const noexcept { return cfg_; }
    const Matrix& features() const noexcept { return *features_; }
    std::size_t n0() const noexcept { return n0_; }
    std::size_t n_labeled() const noexcept { return labeled_.size(); }
    const std::vector<std::size_t>& labeled() const noexcept { return labeled_; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    const std::vector<TraceRecord>& trace() const noexcept { return trace_; }
    const std::optional<Evaluation>& latest() const noexcept { return latest_; }
    std::size_t fits_separated() const noexcept { return separated_fits_; }

private:
    void evaluate();
    void choose_next();
    std::size_t next_random_unlabeled();

    std::shared_ptr<const Matrix> features_;
    LearnerConfig cfg_;
    std::size_t n0_;
    std::size_t cap_;
    Phase phase_ = Phase::Bootstrap;

    std::vector<std::size_t> bootstrap_;
    std::size_t bootstrap_pos_ = 0;
    std::vector<std::size_t> extension_order_;
    std::size_t extension_pos_ = 0;

    std::vector<std::uint8_t> is_labeled_;
    std::vector<std::size_t> unlabeled_;
    std::vector<std::size_t> labeled_;
    std::vector<int> labels_;
    std::optional<Query> pending_;

    std::optional<Evaluation> latest_;
    std::vector<TraceRecord> trace_;
    Vector warm_start_;
    std::size_t separated_fits_ = 0;

    std::optional<ClusterPrefilter> prefilter_;
    std::size_t steps_since_refresh_ = 0;
    std::uint64_t refreshes_ = 0;
};

std::string to_string(ActiveLearner::Phase phase);

/// Mann-Whitney AUC, ties counted one half. Throws OneClassOnly.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Fraction of subjects with (score >= threshold) == label.
double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Angle in radians between two coefficient vectors.
double angle_between(std::span<const double> a, std::span<const double> b);

struct EvalSet {
    std::shared_ptr<const Matrix> features;
    std::vector<int> labels;
};

struct RunReport {
    std::size_t N = 0;
    std::size_t n0 = 0;
    double wall_time = 0.0;
    std::string status;  ///< stopped | capped | exhausted
    EstimatorMode estimator = EstimatorMode::ASE;
    Vector beta_tilde;
    Vector beta_hat;
    Indicators indicators;
    std::optional<int> p0_hat;
    std::optional<double> kappa;
    std::optional<double> nu_n;
    std::optional<double> a_n_sq;
    SymMatrix fisher_hat;  ///< information at beta_hat when acquisition ended
    double acc = 0.0;
    double auc = 0.0;
    bool separation = false;
    std::size_t oracle_calls = 0;
    std::vector<TraceRecord> trace;
    std::vector<std::size_t> acquired;  ///< subject ids in acquisition order
    std::vector<int> acquired_labels;
    /// Filled by the benchmark when the true coefficients are known.
    std::optional<bool> covers_truth;
    std::optional<double> angle_to_truth;
};

/// Acquisition until stop, cap or exhaustion. Metrics use `holdout` when
/// given, otherwise the acquired training set. Evaluation is on mu(x^T beta_hat).
RunReport run(const Pool& pool, const LearnerConfig& cfg, Oracle& oracle,
              const std::optional<EvalSet>& holdout = std::nullopt);

/// Builds a report from a finished (or interrupted) learner.
RunReport summarize(const ActiveLearner& learner, const std::optional<EvalSet>& holdout = std::nullopt);

}  // namespace seqal
