#include "seqal/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "seqal/bench.hpp"
#include "seqal/error.hpp"
#include "seqal/numerics.hpp"
#include "seqal/service.hpp"
#include "seqal/version.hpp"

namespace seqal::cli {

namespace fs = std::filesystem;

namespace {

enum class Level { Debug, Info, Warn, Error };

class Log {
public:
    Log(std::ostream& sink, Level threshold) : sink_(sink), threshold_(threshold) {}

    void operator()(Level level, const std::string& msg,
                    std::initializer_list<std::pair<const char*, std::string>> fields = {}) const {
        if (level < threshold_) return;
        static const char* names[] = {"debug", "info", "warn", "error"};
        std::ostringstream line;
        line << "ts=" << now() << " level=" << names[static_cast<int>(level)] << " msg=" << quote(msg);
        for (const auto& [k, v] : fields) line << ' ' << k << '=' << quote(v);
        line << '\n';
        sink_ << line.str() << std::flush;
    }

private:
    static std::string quote(const std::string& v) {
        if (!v.empty() && v.find_first_of(" \"=\t\n") == std::string::npos) return v;
        std::string q = "\"";
        for (char c : v) {
            if (c == '"' || c == '\\') q += '\\';
            q += c == '\n' ? ' ' : c;
        }
        return q + '"';
    }
    static std::string now() {
        const std::time_t t = std::time(nullptr);
        std::tm tm{};
        gmtime_r(&t, &tm);
        std::ostringstream os;
        os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
        return os.str();
    }

    std::ostream& sink_;
    Level threshold_;
};

struct LearnerFlags {
    double d = 0.3;
    double alpha = 0.05;
    std::size_t n0 = 0;
    std::string estimator = "ase";
    double gamma = 2.0;
    double epsilon = 0.5;
    double lambda_exponent = 0.75;
    double rho = 0.003;
    double p_target = 0.5;
    std::size_t max_steps = 0;
    int cluster_k = 0;
    std::optional<std::uint64_t> seed;
    std::size_t runs = 1;
    unsigned jobs = 1;
    std::string format = "json";
    bool timing = false;
    std::string output;
};

std::string num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

CLI::Validator interval(double lo, double hi, bool hi_closed) {
    const std::string desc = "(" + num(lo) + "," + num(hi) + (hi_closed ? "]" : ")");
    return CLI::Validator(
        [=](std::string& in) -> std::string {
            double v = 0.0;
            if (!CLI::detail::lexical_cast(in, v)) return "value " + in + " is not a number";
            if (v > lo && (hi_closed ? v <= hi : v < hi)) return {};
            return "value " + in + " not in " + desc;
        },
        desc);
}

const CLI::Validator positive(
    [](std::string& in) -> std::string {
        double v = 0.0;
        if (!CLI::detail::lexical_cast(in, v)) return "value " + in + " is not a number";
        return v > 0.0 ? std::string() : "value " + in + " must be positive";
    },
    "POSITIVE");

void add_learner_flags(CLI::App* app, LearnerFlags& f) {
    app->add_option("--d", f.d, "Half-width of the fixed-size confidence ellipsoid")
        ->check(positive)
        ->capture_default_str();
    app->add_option("--alpha", f.alpha, "One minus the confidence level")
        ->check(interval(0.0, 1.0, false))
        ->capture_default_str();
    app->add_option("--n0", f.n0, "Initial labeled sample size; 0 means max(2p, 20)")->capture_default_str();
    app->add_option("--estimator", f.estimator, "Coefficient estimator")
        ->check(CLI::IsMember({"ase", "mle"}))
        ->capture_default_str();
    app->add_option("--gamma", f.gamma, "Shrinkage exponent on |beta|")->check(positive)->capture_default_str();
    app->add_option("--epsilon", f.epsilon, "Variable selection threshold")
        ->check(positive)
        ->capture_default_str();
    app->add_option("--lambda-exponent", f.lambda_exponent, "lambda(n) = n^-exponent")->capture_default_str();
    app->add_option("--rho", f.rho, "Fraction of the pool kept by the design-score filter")
        ->check(interval(0.0, 1.0, true))
        ->capture_default_str();
    app->add_option("--p-target", f.p_target, "Target probability for uncertainty sampling")
        ->check(interval(0.0, 1.0, false))
        ->capture_default_str();
    app->add_option("--max-steps", f.max_steps, "Cap on labeled subjects; 0 means the pool size")->capture_default_str();
    app->add_option("--cluster-k", f.cluster_k, "k-means prefilter cluster count; 0 disables it")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app->add_option("--seed", f.seed, "Base seed; drawn and logged when absent");
    app->add_option("--runs", f.runs, "Independent replications")->check(positive)->capture_default_str();
    app->add_option("--jobs", f.jobs, "Worker threads for replications")->check(positive)->capture_default_str();
    app->add_option("--format", f.format, "Report format")
        ->check(CLI::IsMember({"json", "csv", "markdown"}))
        ->capture_default_str();
    app->add_flag("--timing", f.timing, "Include wall-clock times in the report");
    app->add_option("--output", f.output, "Write the report here instead of stdout");
}

/// Maps flags onto a LearnerConfig. Throws CLI::ValidationError naming the flag.
LearnerConfig learner_config(const LearnerFlags& f, std::size_t p, std::uint64_t seed) {
    LearnerConfig cfg;
    cfg.stopping.d = f.d;
    cfg.stopping.alpha = f.alpha;
    cfg.stopping.n0 = f.n0;
    cfg.estimator = parse_estimator(f.estimator);
    cfg.shrinkage.gamma = f.gamma;
    cfg.shrinkage.epsilon = f.epsilon;
    cfg.shrinkage.lambda_exponent = f.lambda_exponent;
    cfg.selection.rho = f.rho;
    cfg.selection.p_target = f.p_target;
    if (f.cluster_k > 0) cfg.selection.cluster_prefilter = ClusterPrefilterConfig{f.cluster_k, 100};
    cfg.max_steps = f.max_steps;
    cfg.seed = seed;

    auto check = [](bool ok, const char* flag, const std::string& what) {
        if (!ok) throw CLI::ValidationError(flag, what);
    };
    check(f.n0 == 0 || f.n0 >= p, "--n0", "must be at least the number of coefficients (" + std::to_string(p) + ")");
    check(f.lambda_exponent > 0.5 && f.lambda_exponent < 0.5 + 0.5 * f.gamma, "--lambda-exponent",
          "must lie in (0.5, 0.5 + gamma/2)");
    check(f.max_steps == 0 || f.max_steps >= cfg.stopping.effective_n0(p), "--max-steps", "must be 0 or at least n0");
    try {
        cfg.validate(p);
    } catch (const Error& e) {
        throw CLI::ValidationError("configuration", e.what());
    }
    return cfg;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed, const Log& log) {
    if (seed) return *seed;
    const std::uint64_t drawn = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
    log(Level::Info, "no --seed given; drew one", {{"seed", std::to_string(drawn)}});
    return drawn;
}

void write_output(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text;
        if (!text.empty() && text.back() != '\n') out << '\n';
        return;
    }
    std::ofstream f(path);
    f << text;
    if (!text.empty() && text.back() != '\n') f << '\n';
    if (!f) throw Error(ErrorCode::Io, "cannot write report to '" + path + "'");
}

fs::path data_path(const std::string& arg) {
    fs::path p(arg);
    if (p.is_relative()) {
        if (const char* dir = std::getenv("SEQAL_DATA_DIR"); dir && *dir) return fs::path(dir) / p;
    }
    return p;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

int simulate(const LearnerFlags& f, std::vector<double> beta, std::size_t pool_size, bool intercept, const Log& log,
             std::ostream& out) {
    const std::uint64_t seed = resolve_seed(f.seed, log);
    SyntheticSpec spec;
    spec.n_pool = pool_size;
    spec.beta_true = std::move(beta);
    spec.intercept = intercept;
    spec.covariate_dim = spec.beta_true.size() - (intercept ? 1 : 0);
    spec.seed = seed;
    try {
        spec.validate();
    } catch (const Error& e) {
        throw CLI::ValidationError("--beta", e.what());
    }
    const LearnerConfig cfg = learner_config(f, spec.beta_true.size(), seed);

    log(Level::Info, "simulate",
        {{"runs", std::to_string(f.runs)}, {"d", num(f.d)}, {"estimator", f.estimator},
         {"pool_size", std::to_string(pool_size)}, {"seed", std::to_string(seed)}});
    const ReplicationSummary summary = replicate(spec, cfg, ReplicateOptions{f.runs, f.jobs, false});
    for (const auto& msg : summary.failures) log(Level::Warn, "run failed", {{"detail", msg}});
    if (summary.runs == 0) throw Error(ErrorCode::InvalidArgument, "every run failed");
    write_output(emit_report(summary, parse_format(f.format), f.timing), f.output, out);
    log(Level::Info, "done", {{"mean_N", num(summary.N.mean)}});
    return 0;
}

struct DataFlags {
    std::string data;
    std::string label_col = "Class";
    std::string positive = "1";
    std::string features;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    std::string pca_keep;
};

int run_dataset(const LearnerFlags& f, const DataFlags& df, const Log& log, std::ostream& out) {
    const fs::path path = data_path(df.data);
    const CsvTable table = read_csv(path.string());
    if (std::find(table.header.begin(), table.header.end(), df.label_col) == table.header.end())
        throw Error(ErrorCode::InvalidArgument,
                    "'" + path.string() + "' has no label column '" + df.label_col +
                        "'; run replays recorded labels, so it needs a labeled CSV (features-only data belongs to serve)");
    Pool pool = ingest_table(table, CsvSchema{df.label_col, split_list(df.features), df.positive, std::nullopt});

    if (!df.pca_keep.empty()) {
        std::vector<std::size_t> keep;
        for (const auto& k : split_list(df.pca_keep)) {
            try {
                keep.push_back(std::stoul(k));
            } catch (const std::exception&) {
                throw CLI::ValidationError("--pca-keep", "'" + k + "' is not a component index");
            }
        }
        pool = Pool::make(pca_transform(*pool.features, keep), pool.labels);
    }
    if ((df.n_pos == 0) != (df.n_neg == 0))
        throw CLI::ValidationError("--n-pos/--n-neg", "give both split sizes or neither");

    const std::uint64_t seed = resolve_seed(f.seed, log);
    const LearnerConfig cfg = learner_config(f, pool.dim(), seed);
    log(Level::Info, "run",
        {{"data", path.string()}, {"rows", std::to_string(pool.size())}, {"dim", std::to_string(pool.dim())},
         {"runs", std::to_string(f.runs)}, {"seed", std::to_string(seed)}});

    std::vector<std::optional<RunReport>> results(f.runs);
    std::vector<std::string> errors(f.runs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < f.runs; i = next++) {
            LearnerConfig run_cfg = cfg;
            run_cfg.seed = seed + i;
            try {
                if (df.n_pos > 0) {
                    const Split split = make_split(pool, df.n_pos, df.n_neg, seed + i);
                    if (split.warning) log(Level::Warn, *split.warning);
                    ReplayOracle oracle(*split.train.labels);
                    std::optional<EvalSet> holdout;
                    if (split.test.size() > 0) holdout = EvalSet{split.test.features, *split.test.labels};
                    results[i] = run(split.train, run_cfg, oracle, holdout);
                } else {
                    ReplayOracle oracle(*pool.labels);
                    results[i] = run(pool, run_cfg, oracle);
                }
            } catch (const std::exception& e) {
                errors[i] = "run " + std::to_string(i) + ": " + e.what();
            }
        }
    };
    std::vector<std::thread> threads;
    for (unsigned t = 1; t < std::min<std::size_t>(f.jobs, f.runs); ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();

    std::vector<std::string> failures;
    for (const auto& e : errors)
        if (!e.empty()) {
            log(Level::Warn, "run failed", {{"detail", e}});
            failures.push_back(e);
        }
    if (failures.size() == f.runs) throw Error(ErrorCode::InvalidArgument, failures.front());

    if (f.runs == 1) {
        write_output(emit_report(*results.front(), parse_format(f.format), f.timing), f.output, out);
    } else {
        const ReplicationSummary summary = aggregate(std::move(results), failures, cfg);
        write_output(emit_report(summary, parse_format(f.format), f.timing), f.output, out);
    }
    return 0;
}

struct ServeFlags {
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string data;
    std::string features;
    std::string label_col;
    std::string store = "seqal-sessions";
};

int serve(const ServeFlags& sf, const Log& log) {
    service::StoreOptions opts;
    opts.root = sf.store;
    const char* env_dir = std::getenv("SEQAL_DATA_DIR");
    opts.data_dir = env_dir && *env_dir ? fs::path(env_dir) : fs::current_path();
    if (!sf.data.empty()) {
        const fs::path path = data_path(sf.data);
        if (!fs::exists(path)) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
        nlohmann::json ds{{"path", fs::absolute(path).string()}};
        if (!sf.label_col.empty()) ds["label_column"] = sf.label_col;
        if (!sf.features.empty()) ds["feature_columns"] = split_list(sf.features);
        opts.default_source = nlohmann::json{{"dataset", ds}};
    }

    // Signals are taken synchronously by a watcher thread; every other thread
    // inherits the blocked mask.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    sigaddset(&signals, SIGUSR1);
    sigset_t previous;
    pthread_sigmask(SIG_BLOCK, &signals, &previous);
    struct RestoreMask {
        sigset_t mask;
        ~RestoreMask() { pthread_sigmask(SIG_SETMASK, &mask, nullptr); }
    } restore{previous};

    service::SessionStore store(opts);
    service::Server server(store);
    if (!server.bind(sf.host, sf.port)) {
        log(Level::Error, "cannot bind", {{"host", sf.host}, {"port", std::to_string(sf.port)}});
        return 1;
    }
    log(Level::Info, "serving",
        {{"host", sf.host}, {"port", std::to_string(sf.port)}, {"store", fs::absolute(opts.root).string()},
         {"sessions", std::to_string(store.size())}, {"version", kVersion}});

    std::atomic<bool> shutting_down{false};
    std::thread watcher([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        if (sig == SIGUSR1) return;
        shutting_down = true;
        log(Level::Info, "shutting down", {{"signal", sig == SIGINT ? "SIGINT" : "SIGTERM"}});
        server.wait_until_ready();
        server.stop();
    });
    server.listen();
    if (!shutting_down) pthread_kill(watcher.native_handle(), SIGUSR1);
    watcher.join();
    log(Level::Info, "stopped", {{"sessions", std::to_string(store.size())}});
    return 0;
}

}  // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Active learning for logistic models with sequential variable selection and a fixed-size "
                 "confidence-ellipsoid stopping rule.",
                 "seqal"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.fallthrough();
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "Minimum level of log records written to stderr")
        ->check(CLI::IsMember({"debug", "info", "warn", "error"}))
        ->capture_default_str();

    LearnerFlags sim_flags;
    std::vector<double> beta{-1.0, 1.0, 0.0, 0.0};
    std::size_t pool_size = 30000;
    bool intercept = false;
    CLI::App* sim = app.add_subcommand("simulate", "Replicated runs on synthetic logistic data");
    add_learner_flags(sim, sim_flags);
    sim->add_option("--pool-size", pool_size, "Unlabeled pool size per run")
        ->check(positive)
        ->capture_default_str();
    sim->add_option("--beta", beta, "True coefficients, comma separated")
        ->delimiter(',')
        ->allow_extra_args(false)
        ->default_str("-1,1,0,0");
    sim->add_flag("--intercept", intercept, "Prepend a column of ones; the first --beta entry is its coefficient");

    LearnerFlags run_flags;
    DataFlags data_flags;
    CLI::App* run_cmd = app.add_subcommand("run", "Replay a labeled CSV dataset through the learner");
    add_learner_flags(run_cmd, run_flags);
    run_cmd->add_option("--data", data_flags.data, "CSV file; relative paths resolve against $SEQAL_DATA_DIR")
        ->required();
    run_cmd->add_option("--label-col", data_flags.label_col, "Label column name")->capture_default_str();
    run_cmd->add_option("--positive", data_flags.positive, "Label value of the positive class")->capture_default_str();
    run_cmd->add_option("--features", data_flags.features, "Comma separated feature columns; default all others");
    run_cmd->add_option("--n-pos", data_flags.n_pos, "Positives drawn for training; the rest form the test set")
        ->capture_default_str();
    run_cmd->add_option("--n-neg", data_flags.n_neg, "Negatives drawn for training")->capture_default_str();
    run_cmd->add_option("--pca-keep", data_flags.pca_keep, "Replace features by these principal components (0-based)");

    ServeFlags serve_flags;
    CLI::App* serve_cmd = app.add_subcommand("serve", "Run the HTTP annotation service");
    serve_cmd->add_option("--port", serve_flags.port, "TCP port")->check(CLI::Range(1, 65535))->capture_default_str();
    serve_cmd->add_option("--host", serve_flags.host, "Listen address")->capture_default_str();
    serve_cmd->add_option("--data", serve_flags.data, "Default CSV for sessions that name no feature source");
    serve_cmd->add_option("--features", serve_flags.features, "Feature columns of --data");
    serve_cmd->add_option("--label-col", serve_flags.label_col, "Column of --data to exclude from the features");
    serve_cmd->add_option("--store", serve_flags.store, "Directory of session event logs")->capture_default_str();

    try {
        std::vector<std::string> args;
        for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        err << "run with --help for usage\n";
        return 2;
    }

    const Level level = log_level == "debug" ? Level::Debug
                        : log_level == "warn"  ? Level::Warn
                        : log_level == "error" ? Level::Error
                                               : Level::Info;
    const Log log(err, level);

    try {
        if (sim->parsed()) return simulate(sim_flags, beta, pool_size, intercept, log, out);
        if (run_cmd->parsed()) return run_dataset(run_flags, data_flags, log, out);
        return serve(serve_flags, log);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        log(Level::Error, e.what(), {{"code", std::string(to_string(e.code()))}});
        return 1;
    } catch (const std::exception& e) {
        log(Level::Error, e.what());
        return 1;
    }
}

}  // namespace seqal::cli
