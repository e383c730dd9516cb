#include "seqal/learner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "seqal/error.hpp"
#include "seqal/numerics.hpp"

namespace seqal {

std::string to_string(EstimatorMode mode) { return mode == EstimatorMode::ASE ? "ase" : "mle"; }

EstimatorMode parse_estimator(const std::string& s) {
    if (s == "ase" || s == "ASE") return EstimatorMode::ASE;
    if (s == "mle" || s == "MLE") return EstimatorMode::MLE;
    throw Error(ErrorCode::InvalidArgument, "estimator must be 'ase' or 'mle', got '" + s + "'");
}

std::string to_string(ActiveLearner::Phase phase) {
    switch (phase) {
        case ActiveLearner::Phase::Bootstrap: return "bootstrap";
        case ActiveLearner::Phase::Active: return "active";
        case ActiveLearner::Phase::Stopped: return "stopped";
        case ActiveLearner::Phase::Capped: return "capped";
        case ActiveLearner::Phase::Exhausted: return "exhausted";
    }
    return "unknown";
}

void LearnerConfig::validate(std::size_t p) const {
    shrinkage.validate();
    selection.validate();
    stopping.validate(p);
    if (max_steps != 0 && max_steps < stopping.effective_n0(p))
        throw Error(ErrorCode::InvalidArgument, "max_steps must be at least n0");
}

Pool Pool::make(Matrix x, std::optional<std::vector<int>> y) {
    if (y && y->size() != x.rows()) throw Error(ErrorCode::InvalidArgument, "label count does not match rows");
    return Pool{std::make_shared<const Matrix>(std::move(x)), std::move(y)};
}

int ReplayOracle::label(std::size_t subject) {
    if (subject >= labels_.size()) throw Error(ErrorCode::InvalidArgument, "subject id out of range");
    ++calls_;
    ++per_subject_[subject];
    return labels_[subject];
}

std::size_t ReplayOracle::max_calls_per_subject() const {
    std::size_t m = 0;
    for (const auto& [_, c] : per_subject_) m = std::max(m, c);
    return m;
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t pool_size, std::uint64_t seed, int attempt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(attempt), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> idx(pool_size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Fisher-Yates written out so the permutation does not depend on the
    // standard library's shuffle implementation.
    for (std::size_t i = pool_size; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace

std::vector<std::size_t> bootstrap_draw(std::size_t pool_size, std::size_t n0, std::uint64_t seed, int attempt) {
    if (n0 > pool_size) throw Error(ErrorCode::InvalidArgument, "pool smaller than the initial sample");
    auto idx = shuffled_indices(pool_size, seed, attempt);
    idx.resize(n0);
    return idx;
}

InitialSample init_sample(const Pool& pool, std::size_t n0, std::uint64_t seed, Oracle& oracle) {
    if (pool.size() < n0) throw Error(ErrorCode::InvalidArgument, "pool has fewer than n0 subjects");
    std::unordered_map<std::size_t, int> cache;
    constexpr int max_redraws = 50;
    for (int attempt = 0; attempt <= max_redraws; ++attempt) {
        InitialSample s;
        s.subjects = bootstrap_draw(pool.size(), n0, seed, attempt);
        s.attempts = attempt + 1;
        int ones = 0;
        for (std::size_t id : s.subjects) {
            auto it = cache.find(id);
            if (it == cache.end()) it = cache.emplace(id, oracle.label(id)).first;
            s.labels.push_back(it->second);
            ones += it->second;
        }
        if (ones > 0 && ones < static_cast<int>(n0)) return s;
    }
    throw Error(ErrorCode::CannotBalance, "initial sample stayed single-class after 50 redraws");
}

ActiveLearner::ActiveLearner(std::shared_ptr<const Matrix> features, LearnerConfig cfg)
    : ActiveLearner(features, cfg,
                    bootstrap_draw(features->rows(), cfg.stopping.effective_n0(features->cols()), cfg.seed, 0)) {}

ActiveLearner::ActiveLearner(std::shared_ptr<const Matrix> features, LearnerConfig cfg,
                             std::vector<std::size_t> bootstrap)
    : features_(std::move(features)),
      cfg_(std::move(cfg)),
      n0_(cfg_.stopping.effective_n0(features_->cols())),
      cap_(cfg_.max_steps == 0 ? features_->rows() : std::min(cfg_.max_steps, features_->rows())),
      bootstrap_(std::move(bootstrap)) {
    const std::size_t total = features_->rows();
    cfg_.validate(features_->cols());
    if (total < n0_) throw Error(ErrorCode::InvalidArgument, "pool has fewer than n0 subjects");
    if (bootstrap_.size() != n0_) throw Error(ErrorCode::InvalidArgument, "bootstrap sample must have n0 subjects");
    is_labeled_.assign(total, 0);
    std::vector<std::uint8_t> seen(total, 0);
    for (std::size_t id : bootstrap_) {
        if (id >= total || seen[id]) throw Error(ErrorCode::InvalidArgument, "invalid bootstrap subject");
        seen[id] = 1;
    }
    unlabeled_.resize(total);
    std::iota(unlabeled_.begin(), unlabeled_.end(), std::size_t{0});
    pending_ = Query{bootstrap_.front(), true, std::nullopt, std::nullopt};
}

std::optional<Query> ActiveLearner::pending() const { return pending_; }

std::size_t ActiveLearner::next_random_unlabeled() {
    if (extension_order_.empty()) extension_order_ = shuffled_indices(features_->rows(), cfg_.seed, -1);
    while (extension_pos_ < extension_order_.size() && is_labeled_[extension_order_[extension_pos_]])
        ++extension_pos_;
    if (extension_pos_ == extension_order_.size())
        throw Error(ErrorCode::PoolExhausted, "pool exhausted before both classes were observed");
    return extension_order_[extension_pos_];
}

void ActiveLearner::submit(std::size_t subject, int label) {
    if (!pending_) throw Error(ErrorCode::InvalidArgument, "session is finished; no query is pending");
    if (subject != pending_->subject)
        throw Error(ErrorCode::InvalidArgument, "subject " + std::to_string(subject) + " is not the pending query");
    if (label != 0 && label != 1) throw Error(ErrorCode::NonBinaryLabel, "label must be 0 or 1");

    is_labeled_[subject] = 1;
    labeled_.push_back(subject);
    labels_.push_back(label);
    unlabeled_.erase(std::lower_bound(unlabeled_.begin(), unlabeled_.end(), subject));
    pending_.reset();
    if (trace_.size() > 0 && !trace_.back().selected) trace_.back().selected = subject;

    if (phase_ == Phase::Bootstrap) {
        ++bootstrap_pos_;
        if (bootstrap_pos_ < bootstrap_.size()) {
            pending_ = Query{bootstrap_[bootstrap_pos_], true, std::nullopt, std::nullopt};
            return;
        }
        const int ones = std::accumulate(labels_.begin(), labels_.end(), 0);
        if (ones == 0 || ones == static_cast<int>(labels_.size())) {
            if (unlabeled_.empty() || labeled_.size() >= cap_) {
                phase_ = unlabeled_.empty() ? Phase::Exhausted : Phase::Capped;
                return;
            }
            pending_ = Query{next_random_unlabeled(), true, std::nullopt, std::nullopt};
            return;
        }
        phase_ = Phase::Active;
    }
    evaluate();
    if (phase_ == Phase::Active) choose_next();
}

void ActiveLearner::evaluate() {
    const Matrix xa = features_->select_rows(labeled_);
    const std::size_t n = labeled_.size();
    const std::size_t p = features_->cols();

    FitResult fit;
    try {
        fit = warm_start_.empty() ? fit_mle(xa, labels_) : fit_mle(xa, labels_, std::span<const double>(warm_start_));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::SingularInformation || warm_start_.empty()) throw;
        fit = fit_mle(xa, labels_);
    }
    if (fit.separation_flag) {
        ++separated_fits_;
        warm_start_.clear();
    } else {
        warm_start_ = fit.beta_tilde;
    }

    Evaluation ev;
    ev.n = n;
    ev.beta_tilde = fit.beta_tilde;
    ev.converged = fit.converged;
    ev.separation = fit.separation_flag;
    if (cfg_.estimator == EstimatorMode::ASE) {
        try {
            ShrinkageState s = shrink(fit.beta_tilde, fit.fisher, n, cfg_.shrinkage);
            ev.L = s.L;
            ev.indicators = std::move(s.indicators);
            ev.beta_hat = std::move(s.beta_hat);
            ev.p0_hat = s.p0_hat;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::IllConditioned) throw;
            // Too little information for L: keep every coordinate for now.
            ev.indicators.assign(p, 1);
            ev.beta_hat = fit.beta_tilde;
            ev.p0_hat = static_cast<int>(p);
        }
    } else {
        ev.indicators.assign(p, 1);
        ev.beta_hat = fit.beta_tilde;
    }
    ev.fisher_hat = fisher_info(ev.beta_hat, xa);

    const int df = ev.p0_hat.value_or(static_cast<int>(p));
    if (df >= 1) {
        try {
            const double nu = nu_n(ev.fisher_hat, ev.indicators, n, cfg_.stopping.growth);
            const StoppingState st = should_stop(nu, n, df, cfg_.stopping);
            ev.nu_n = st.nu_n;
            ev.a_n_sq = st.a_n_sq;
            ev.threshold = st.threshold;
            ev.stopped = st.stopped;
            ev.kappa = st.kappa;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NotPositiveDefinite) throw;
        }
    }

    trace_.push_back(TraceRecord{n, ev.nu_n, ev.threshold, df, std::nullopt});
    latest_ = std::move(ev);

    if (latest_->stopped)
        phase_ = Phase::Stopped;
    else if (n >= cap_)
        phase_ = Phase::Capped;
    else if (unlabeled_.empty())
        phase_ = Phase::Exhausted;
}

void ActiveLearner::choose_next() {
    const Evaluation& ev = *latest_;
    const SelectionConfig& sel = cfg_.selection;
    Pick pick;
    bool factorable = true;
    try {
        Cholesky probe(ev.fisher_hat);
    } catch (const Error&) {
        factorable = false;
    }

    if (!factorable) {
        // No usable design criterion yet: plain uncertainty sampling over the pool.
        pick = select_next(unlabeled_, *features_, ev.beta_hat, sel.p_target);
        pick.d_rank = 0;
    } else if (sel.cluster_prefilter) {
        const auto& pf = *sel.cluster_prefilter;
        if (!prefilter_ || steps_since_refresh_ >= static_cast<std::size_t>(pf.refresh_every)) {
            prefilter_.emplace(*features_, unlabeled_, pf.k, cfg_.seed + 7919 * (++refreshes_));
            steps_since_refresh_ = 0;
        }
        ++steps_since_refresh_;
        std::vector<std::uint8_t> available(is_labeled_.size());
        for (std::size_t i = 0; i < available.size(); ++i) available[i] = is_labeled_[i] ? 0 : 1;
        pick = prefilter_->select(*features_, available, ev.fisher_hat, ev.beta_hat, sel);
    } else {
        pick = select_from(*features_, unlabeled_, ev.fisher_hat, ev.beta_hat, sel);
    }
    pending_ = Query{pick.pool_index, false, pick.u_score,
                     pick.d_rank == 0 ? std::nullopt : std::optional<std::size_t>(pick.d_rank)};
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error(ErrorCode::InvalidArgument, "scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double n_pos = 0.0;
    double rank_sum_pos = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                rank_sum_pos += mid_rank;
                n_pos += 1.0;
            }
        }
        i = j;
    }
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) throw Error(ErrorCode::OneClassOnly, "AUC needs both classes");
    return (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
    if (scores.size() != labels.size()) throw Error(ErrorCode::InvalidArgument, "scores and labels differ in length");
    if (scores.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if ((scores[i] >= threshold ? 1 : 0) == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double angle_between(std::span<const double> a, std::span<const double> b) {
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) return M_PI / 2.0;
    const double c = std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
    return std::acos(c);
}

RunReport summarize(const ActiveLearner& learner, const std::optional<EvalSet>& holdout) {
    RunReport r;
    r.N = learner.n_labeled();
    r.n0 = learner.n0();
    r.status = to_string(learner.phase());
    r.estimator = learner.config().estimator;
    r.trace = learner.trace();
    r.acquired = learner.labeled();
    r.acquired_labels = learner.labels();
    if (const auto& ev = learner.latest()) {
        r.beta_tilde = ev->beta_tilde;
        r.beta_hat = ev->beta_hat;
        r.indicators = ev->indicators;
        r.p0_hat = ev->p0_hat;
        r.kappa = ev->kappa;
        r.nu_n = ev->nu_n;
        r.a_n_sq = ev->a_n_sq;
        r.fisher_hat = ev->fisher_hat;
        r.separation = ev->separation;

        const Matrix& x = holdout ? *holdout->features : learner.features();
        std::vector<std::size_t> rows;
        std::vector<int> y;
        if (holdout) {
            rows.resize(x.rows());
            std::iota(rows.begin(), rows.end(), std::size_t{0});
            y = holdout->labels;
        } else {
            rows = learner.labeled();
            y = learner.labels();
        }
        Vector s(rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) s[k] = mu(dot(x.row(rows[k]), r.beta_hat));
        r.acc = accuracy(s, y);
        try {
            r.auc = auc(s, y);
        } catch (const Error&) {
            r.auc = std::nan("");
        }
    }
    return r;
}

namespace {

class CountingOracle final : public Oracle {
public:
    explicit CountingOracle(Oracle& inner) : inner_(inner) {}
    int label(std::size_t subject) override {
        ++calls;
        return inner_.label(subject);
    }
    std::size_t calls = 0;

private:
    Oracle& inner_;
};

}  // namespace

RunReport run(const Pool& pool, const LearnerConfig& cfg, Oracle& oracle, const std::optional<EvalSet>& holdout) {
    if (!pool.features) throw Error(ErrorCode::InvalidArgument, "pool has no features");
    cfg.validate(pool.dim());
    const auto start = std::chrono::steady_clock::now();

    CountingOracle counted(oracle);
    const std::size_t n0 = cfg.stopping.effective_n0(pool.dim());
    const InitialSample init = init_sample(pool, n0, cfg.seed, counted);

    ActiveLearner learner(pool.features, cfg, init.subjects);
    for (std::size_t k = 0; k < init.subjects.size(); ++k) learner.submit(init.subjects[k], init.labels[k]);
    while (auto q = learner.pending()) learner.submit(q->subject, counted.label(q->subject));

    RunReport r = summarize(learner, holdout);
    r.oracle_calls = counted.calls;
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

}  // namespace seqal
