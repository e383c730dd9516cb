#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "seqal/bench.hpp"
#include "seqal/error.hpp"
#include "seqal/glm.hpp"
#include "seqal/learner.hpp"
#include "seqal/numerics.hpp"
#include "seqal/selection.hpp"
#include "seqal/stopping.hpp"
#include "../support/oracles.hpp"
#include "../support/service_fixture.hpp"

using namespace seqal;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v, int digits = 3) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::string sci(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << v;
    return os.str();
}

/// Sub-checks of one criterion; the criterion passes when all of them do.
class Criterion {
public:
    explicit Criterion(std::string id) : id_(std::move(id)) {}

    void in_band(const std::string& what, double v, double lo, double hi, int digits = 3) {
        const bool ok = v >= lo && v <= hi;
        add(ok, what + "=" + fmt(v, digits) + (ok ? " in " : " outside ") + "[" + fmt(lo, digits) + ", " +
                    fmt(hi, digits) + "]");
    }
    void at_most(const std::string& what, double v, double bound, bool scientific = false) {
        const bool ok = v <= bound;
        const auto f = [&](double x) { return scientific ? sci(x) : fmt(x); };
        add(ok, what + "=" + f(v) + (ok ? " <= " : " > ") + f(bound));
    }
    void at_least(const std::string& what, double v, double bound) {
        const bool ok = v >= bound;
        add(ok, what + "=" + fmt(v) + (ok ? " >= " : " < ") + fmt(bound));
    }
    void add(bool ok, const std::string& detail) {
        pass_ = pass_ && ok;
        parts_.push_back(detail + (ok ? "" : " [FAIL]"));
    }

    bool pass() const { return pass_; }
    std::string line() const {
        std::string s = std::string(pass_ ? "PASS" : "FAIL") + " " + id_ + ": ";
        for (std::size_t i = 0; i < parts_.size(); ++i) s += (i ? "; " : "") + parts_[i];
        return s;
    }

private:
    std::string id_;
    bool pass_ = true;
    std::vector<std::string> parts_;
};

struct Settings {
    std::size_t ase_runs = 200;
    std::size_t coverage_runs = 500;
    std::size_t mle_runs = 100;
    std::size_t real_runs = 50;
    std::uint64_t seed = 20240601;
    unsigned jobs = 1;
    fs::path data_dir;
};

class Acceptance {
public:
    explicit Acceptance(Settings s) : s_(std::move(s)) {}

    void emit(const Criterion& c) {
        std::cout << c.line() << std::endl;
        lines_.push_back(c.line());
        all_pass_ = all_pass_ && c.pass();
    }
    void skip(const std::string& id, const std::string& why) {
        const std::string line = "SKIP " + id + ": " + why;
        std::cout << line << std::endl;
        lines_.push_back(line);
    }
    void note(const std::string& text) { notes_ += text; }

    bool all_pass() const { return all_pass_; }
    std::string report() const {
        std::string out;
        for (const auto& l : lines_) out += l + "\n";
        return out + "\n" + notes_;
    }

    ReplicationSummary simulate(double d, EstimatorMode mode, std::size_t runs) {
        SyntheticSpec spec;
        spec.seed = s_.seed;
        LearnerConfig cfg;
        cfg.stopping.d = d;
        cfg.estimator = mode;
        const auto t0 = std::chrono::steady_clock::now();
        ReplicationSummary r = replicate(spec, cfg, ReplicateOptions{runs, s_.jobs, false});
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << "  " << to_string(mode) << " d=" << d << " runs=" << runs << " (" << fmt(secs, 1) << " s)"
                  << std::endl;
        return r;
    }

    void synthetic() {
        const std::vector<double> ds{0.5, 0.4, 0.3};
        std::map<double, ReplicationSummary> ase, mle;

        std::cerr << "synthetic replications" << std::endl;
        const std::size_t first_d03 = std::max(s_.ase_runs, s_.coverage_runs);
        ReplicationSummary cov_runs = simulate(0.3, EstimatorMode::ASE, first_d03);
        {
            std::vector<std::optional<RunReport>> head;
            for (std::size_t i = 0; i < std::min(s_.ase_runs, cov_runs.per_run.size()); ++i)
                head.emplace_back(cov_runs.per_run[i]);
            LearnerConfig cfg;
            cfg.stopping.d = 0.3;
            ase[0.3] = aggregate(std::move(head), {}, cfg);
        }
        ase[0.4] = simulate(0.4, EstimatorMode::ASE, s_.ase_runs);
        ase[0.5] = simulate(0.5, EstimatorMode::ASE, s_.ase_runs);
        for (double d : ds) mle[d] = simulate(d, EstimatorMode::MLE, s_.mle_runs);

        for (double d : ds) {
            note(emit_report(ase[d], ReportFormat::Markdown) + "\n");
            note(emit_report(mle[d], ReportFormat::Markdown) + "\n");
        }

        Criterion t2("table2 (ASE, " + std::to_string(s_.ase_runs) + " runs)");
        t2.in_band("d=0.3 mean N", ase[0.3].N.mean, 620, 840, 1);
        t2.in_band("d=0.3 mean kappa", ase[0.3].kappa.mean, 0.95, 1.10);
        t2.in_band("d=0.3 mean AUC", ase[0.3].auc.mean, 0.64, 0.70);
        t2.in_band("d=0.5 mean N", ase[0.5].N.mean, 170, 330, 1);
        t2.in_band("d=0.5 mean kappa", ase[0.5].kappa.mean, 0.95, 1.15);
        const bool n_mono = ase[0.5].N.mean < ase[0.4].N.mean && ase[0.4].N.mean < ase[0.3].N.mean;
        t2.add(n_mono, "mean N over d=0.5,0.4,0.3: " + fmt(ase[0.5].N.mean, 1) + " < " + fmt(ase[0.4].N.mean, 1) +
                           " < " + fmt(ase[0.3].N.mean, 1));
        auto coef_sd = [](const ReplicationSummary& r) {
            double s = 0.0;
            for (const auto& b : r.beta) s += b.sd;
            return s / static_cast<double>(r.beta.size());
        };
        const bool sd_mono = coef_sd(ase[0.5]) > coef_sd(ase[0.4]) && coef_sd(ase[0.4]) > coef_sd(ase[0.3]);
        t2.add(sd_mono, "mean coefficient sd over d=0.5,0.4,0.3: " + fmt(coef_sd(ase[0.5])) + " > " +
                            fmt(coef_sd(ase[0.4])) + " > " + fmt(coef_sd(ase[0.3])));
        emit(t2);

        Criterion t3("table3 (ASE, d=0.3, " + std::to_string(s_.ase_runs) + " runs)");
        const ReplicationSummary& a3 = ase[0.3];
        t3.in_band("mean p0_hat", a3.p0_hat ? a3.p0_hat->mean : -1.0, 1.85, 2.00);
        t3.in_band("mean beta_1", a3.beta[0].mean, -1.05, -0.85);
        t3.in_band("mean beta_2", a3.beta[1].mean, 0.93, 1.05);
        t3.at_most("|mean beta_3|", std::abs(a3.beta[2].mean), 0.02);
        t3.at_most("|mean beta_4|", std::abs(a3.beta[3].mean), 0.02);
        emit(t3);

        Criterion mc("mle_contrast (" + std::to_string(s_.mle_runs) + " MLE runs per d)");
        for (double d : ds)
            mc.at_least("d=" + fmt(d, 1) + " N_MLE/N_ASE", mle[d].N.mean / ase[d].N.mean, 1.5);
        bool no_p0 = true;
        for (double d : ds) {
            no_p0 = no_p0 && !mle[d].p0_hat;
            for (const auto& r : mle[d].per_run) no_p0 = no_p0 && !r.p0_hat;
        }
        mc.add(no_p0, no_p0 ? "MLE mode reports no p0_hat" : "MLE mode reported a p0_hat");
        emit(mc);

        Criterion cov("coverage (d=0.3, alpha=0.05, " + std::to_string(cov_runs.runs) + " runs)");
        cov.add(cov_runs.runs >= s_.coverage_runs,
                std::to_string(cov_runs.runs) + " successful runs of " + std::to_string(s_.coverage_runs));
        cov.in_band("P(beta_0 in R_N)", cov_runs.coverage.value_or(-1.0), 0.92, 0.98);
        emit(cov);
    }

    void oracles() {
        Criterion c("oracle_equivalence");
        std::mt19937_64 rng(s_.seed);
        std::normal_distribution<double> g(0.0, 1.0);
        std::uniform_real_distribution<double> u(0.0, 1.0);

        // IRLS against Nelder-Mead on the exact log-likelihood, n=20, p=2.
        double irls_dev = 0.0;
        int fits = 0;
        for (int rep = 0; fits < 10 && rep < 100; ++rep) {
            Matrix x(20, 2);
            std::vector<int> y(20);
            for (std::size_t i = 0; i < 20; ++i) {
                x(i, 0) = g(rng);
                x(i, 1) = g(rng);
                y[i] = u(rng) < mu(-x(i, 0) + x(i, 1)) ? 1 : 0;
            }
            const int ones = static_cast<int>(std::count(y.begin(), y.end(), 1));
            if (ones == 0 || ones == 20) continue;
            const FitResult fit = fit_mle(x, y);
            if (fit.separation_flag || !fit.converged) continue;
            const auto nm = oracle::nelder_mead_max(
                [&](const std::vector<double>& b) { return oracle::logistic_loglik(b, x, y); }, {0.0, 0.0});
            for (int j = 0; j < 2; ++j) irls_dev = std::max(irls_dev, std::abs(fit.beta_tilde[j] - nm[j]));
            ++fits;
        }
        c.add(fits == 10, std::to_string(fits) + " IRLS fits compared");
        c.at_most("IRLS vs Nelder-Mead max |diff|", irls_dev, 1e-5, true);

        // AUC against the pairwise count, 200 scores with heavy ties.
        double auc_dev = 0.0;
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<double> s(200);
            std::vector<int> y(200);
            for (std::size_t i = 0; i < 200; ++i) {
                s[i] = std::round(g(rng) * 3.0) / 3.0;
                y[i] = u(rng) < 0.4 ? 1 : 0;
            }
            auc_dev = std::max(auc_dev, std::abs(auc(s, y) - oracle::pairwise_auc(s, y)));
        }
        c.add(auc_dev == 0.0, "AUC vs pairwise oracle max |diff|=" + sci(auc_dev) + " (exact)");

        // Determinant-lemma design scores against cofactor determinants.
        double d_dev = 0.0;
        for (std::size_t p = 2; p <= 8; ++p) {
            for (int rep = 0; rep < 5; ++rep) {
                const SymMatrix f = oracle::random_spd(p, rng);
                Matrix x(30, p);
                Vector b(p);
                for (double& v : b) v = 0.5 * g(rng);
                for (std::size_t i = 0; i < 30; ++i)
                    for (std::size_t j = 0; j < p; ++j) x(i, j) = g(rng);
                std::vector<std::size_t> cand(30);
                for (std::size_t i = 0; i < 30; ++i) cand[i] = i;
                for (const Candidate& cd : d_scores(x, cand, f, b)) {
                    const double ref = oracle::brute_d_score(f, x.row(cd.pool_index), b);
                    d_dev = std::max(d_dev, std::abs(cd.d_score - ref) / std::abs(ref));
                }
            }
        }
        c.at_most("D-score vs full determinant max rel diff (p<=8)", d_dev, 1e-9, true);

        // Shrunk inverse against the partitioned formula.
        double s_dev = 0.0;
        std::uniform_int_distribution<int> coin(0, 1);
        for (std::size_t p = 1; p <= 6; ++p) {
            for (int rep = 0; rep < 34; ++rep) {
                const SymMatrix f = oracle::random_spd(p, rng);
                std::vector<int> ind(p);
                int any = 0;
                for (auto& v : ind) any += (v = coin(rng));
                if (!any) ind[static_cast<std::size_t>(rep) % p] = 1;
                s_dev = std::max(s_dev, oracle::max_rel_diff(oracle::to_grid(shrunk_inverse(f, ind)),
                                                             oracle::partitioned_shrunk_inverse(f, ind)));
            }
        }
        c.at_most("shrunk inverse vs partitioned formula max rel diff (p<=6)", s_dev, 1e-8, true);

        // Chi-square quantiles.
        const double q1 = chi2_quantile(1, 0.95), q2 = chi2_quantile(2, 0.95);
        c.at_most("|chi2_0.95(1) - 3.84146|", std::abs(q1 - 3.84146), 1e-4, true);
        c.at_most("|chi2_0.95(2) - 5.99146|", std::abs(q2 - 5.99146), 1e-4, true);
        double q_dev = 0.0;
        for (int df = 1; df <= 8; ++df)
            for (double prob : {0.5, 0.9, 0.95, 0.99})
                q_dev = std::max(q_dev, std::abs(chi2_quantile(df, prob) - oracle::chi2_quantile_bisect(df, prob)));
        c.at_most("chi2 quantile vs gamma-CDF bisection max |diff|", q_dev, 1e-4, true);
        emit(c);
    }

    void offline_online() {
        Criterion c("offline_online_equivalence");
        SyntheticSpec spec;
        spec.seed = s_.seed;
        const Pool pool = gen_synthetic(spec);
        LearnerConfig cfg;
        cfg.stopping.d = 0.5;
        cfg.seed = s_.seed;
        ReplayOracle oracle(*pool.labels);
        const RunReport offline = run(pool, cfg, oracle);

        fixture::TempDir dir;
        fixture::LiveServer srv(dir.path);
        auto client = srv.client();
        json req{{"config", {{"d", 0.5}, {"seed", s_.seed}}},
                 {"synthetic", {{"n_pool", spec.n_pool}, {"seed", spec.seed}}},
                 {"bootstrap", std::vector<std::size_t>(offline.acquired.begin(),
                                                        offline.acquired.begin() + static_cast<long>(offline.n0))}};
        auto created = client.Post("/sessions", req.dump(), "application/json");
        if (!created || created->status != 201) {
            c.add(false, "session creation failed");
            emit(c);
            return;
        }
        const std::string id = fixture::body_of(created)["session_id"];
        std::size_t labels = 0;
        for (;;) {
            const json q = fixture::body_of(client.Get("/sessions/" + id + "/query"));
            if (q.value("status", "") != "pending") break;
            const auto subject = q["subject_id"].get<std::size_t>();
            client.Post("/sessions/" + id + "/labels",
                        json{{"subject_id", subject}, {"label", (*pool.labels)[subject]}}.dump(), "application/json");
            ++labels;
        }
        const json st = fixture::body_of(client.Get("/sessions/" + id + "/state"));
        const auto n_online = st["n_labeled"].get<std::size_t>();
        c.add(n_online == offline.N, "N offline=" + std::to_string(offline.N) + " online=" + std::to_string(n_online));
        const auto beta = st["beta_hat"].get<std::vector<double>>();
        bool same_beta = beta.size() == offline.beta_hat.size();
        for (std::size_t j = 0; same_beta && j < beta.size(); ++j) same_beta = beta[j] == offline.beta_hat[j];
        c.add(same_beta, same_beta ? "beta_hat bitwise identical" : "beta_hat differs");
        const bool same_p0 = !st["p0_hat"].is_null() && offline.p0_hat && st["p0_hat"].get<int>() == *offline.p0_hat;
        c.add(same_p0, "p0_hat offline=" + (offline.p0_hat ? std::to_string(*offline.p0_hat) : "none") +
                           " online=" + st["p0_hat"].dump());
        c.add(labels == offline.N, std::to_string(labels) + " labels posted over HTTP");
        emit(c);
    }

    void real_data() {
        const fs::path credit = s_.data_dir / "creditcard.csv";
        const fs::path magic = s_.data_dir / "magic04.csv";
        if (!fs::exists(credit)) {
            skip("real_data_creditcard", credit.string() + " not present (scripts/fetch_data.sh downloads it)");
        } else {
            Pool pool = ingest_csv(credit.string(), CsvSchema{"Class", {"V1", "V2", "V3", "V27", "V28"}, "1", "0"});
            const ReplicationSummary r = real_runs(pool, 400, 1600);
            Criterion c("real_data_creditcard (d=0.5, " + std::to_string(r.runs) + " runs)");
            c.in_band("mean ACC", r.acc.mean, 0.97, 0.99);
            c.in_band("mean AUC", r.auc.mean, 0.80, 0.87);
            note(emit_report(r, ReportFormat::Markdown) + "\n");
            emit(c);
        }
        if (!fs::exists(magic)) {
            skip("real_data_magic", magic.string() + " not present (scripts/fetch_data.sh downloads it)");
        } else {
            Pool raw = ingest_csv(magic.string(), CsvSchema{"class", {}, "g", "h"});
            const std::vector<std::size_t> keep{0, 1, 2, 3, 8, 9};
            Pool pool = Pool::make(pca_transform(*raw.features, keep), raw.labels);
            const ReplicationSummary r = real_runs(pool, 2466, 1338);
            Criterion c("real_data_magic (d=0.5, " + std::to_string(r.runs) + " runs)");
            c.in_band("mean ACC", r.acc.mean, 0.77, 0.83);
            note(emit_report(r, ReportFormat::Markdown) + "\n");
            emit(c);
        }
    }

private:
    ReplicationSummary real_runs(const Pool& pool, std::size_t n_pos, std::size_t n_neg) {
        LearnerConfig cfg;
        cfg.stopping.d = 0.5;
        std::vector<std::optional<RunReport>> results(s_.real_runs);
        std::vector<std::string> failures;
        for (std::size_t i = 0; i < s_.real_runs; ++i) {
            const Split split = make_split(pool, n_pos, n_neg, s_.seed + i);
            LearnerConfig run_cfg = cfg;
            run_cfg.seed = s_.seed + i;
            ReplayOracle oracle(*split.train.labels);
            try {
                results[i] = run(split.train, run_cfg, oracle, EvalSet{split.test.features, *split.test.labels});
            } catch (const std::exception& e) {
                failures.push_back(e.what());
            }
        }
        return aggregate(std::move(results), failures, cfg);
    }

    Settings s_;
    std::vector<std::string> lines_;
    std::string notes_;
    bool all_pass_ = true;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks: one PASS/FAIL/SKIP line per criterion."};
    Settings s;
    bool quick = false, strict = false;
    std::string report_path;
    std::string data_dir;
    s.jobs = std::max(1u, std::thread::hardware_concurrency());
    app.add_flag("--quick", quick, "Few replications; bands are not meaningful, for smoke testing only");
    app.add_flag("--strict", strict, "Exit 1 when any criterion fails");
    app.add_option("--report", report_path, "Also write the lines plus summary tables to this file");
    app.add_option("--jobs", s.jobs, "Worker threads")->capture_default_str();
    app.add_option("--seed", s.seed, "Base seed")->capture_default_str();
    app.add_option("--data-dir", data_dir, "Directory holding creditcard.csv and magic04.csv");
    CLI11_PARSE(app, argc, argv);

    if (quick) {
        s.ase_runs = 10;
        s.coverage_runs = 20;
        s.mle_runs = 5;
        s.real_runs = 3;
    }
    if (!data_dir.empty()) s.data_dir = data_dir;
    else if (const char* env = std::getenv("SEQAL_DATA_DIR"); env && *env) s.data_dir = env;
    else s.data_dir = fs::current_path() / "data";

    Acceptance acc(s);
    try {
        acc.oracles();
        acc.offline_online();
        acc.synthetic();
        acc.real_data();
    } catch (const std::exception& e) {
        std::cout << "FAIL acceptance: aborted with " << e.what() << std::endl;
        return 1;
    }
    if (!report_path.empty()) {
        std::ofstream f(report_path);
        f << acc.report();
    }
    return strict && !acc.all_pass() ? 1 : 0;
}
