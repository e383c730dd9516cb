#include "seqal/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include <httplib.h>

#include "seqal/bench.hpp"
#include "seqal/error.hpp"
#include "seqal/version.hpp"

namespace seqal::service {

namespace fs = std::filesystem;

json ApiError::body() const {
    json j{{"code", code_}, {"message", what()}};
    if (field_) j["field"] = *field_;
    return j;
}

namespace {

ApiError bad_request(const std::string& field, const std::string& message) {
    return ApiError(400, "invalid_request", message, field);
}

double number_field(const json& cfg, const char* key, double fallback) {
    if (!cfg.contains(key)) return fallback;
    const json& v = cfg.at(key);
    if (!v.is_number()) throw bad_request(std::string("config.") + key, std::string(key) + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw bad_request(std::string("config.") + key, std::string(key) + " must be finite");
    return x;
}

std::uint64_t count_field(const json& cfg, const char* key, std::uint64_t fallback) {
    if (!cfg.contains(key)) return fallback;
    const json& v = cfg.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw bad_request(std::string("config.") + key, std::string(key) + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

void require(bool ok, const char* key, const std::string& message) {
    if (!ok) throw bad_request(std::string("config.") + key, message);
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
    return os.str();
}

std::string new_id() {
    static thread_local std::mt19937_64 rng(std::random_device{}() ^
                                            static_cast<std::uint64_t>(std::chrono::steady_clock::now()
                                                                           .time_since_epoch()
                                                                           .count()));
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << rng();
    return os.str();
}

bool valid_id(const std::string& id) {
    return !id.empty() && id.size() <= 64 &&
           std::all_of(id.begin(), id.end(), [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

LearnerConfig parse_learner_config(const json& j, std::size_t p) {
    static const std::set<std::string> known{"d",           "alpha",           "n0",         "growth",
                                             "estimator",   "rho",             "p_target",   "epsilon",
                                             "gamma",       "lambda_scale",    "lambda_exponent",
                                             "max_steps",   "seed",            "covariate_dim",
                                             "cluster_k",   "cluster_refresh"};
    if (!j.is_object()) throw bad_request("config", "config must be an object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw bad_request("config." + key, "unknown configuration key '" + key + "'");

    LearnerConfig cfg;
    if (j.contains("covariate_dim")) {
        const auto dim = count_field(j, "covariate_dim", 0);
        require(dim == p, "covariate_dim",
                "covariate_dim " + std::to_string(dim) + " does not match the data's " + std::to_string(p) + " columns");
    }

    cfg.stopping.d = number_field(j, "d", cfg.stopping.d);
    require(cfg.stopping.d > 0.0, "d", "d must be positive");
    cfg.stopping.alpha = number_field(j, "alpha", cfg.stopping.alpha);
    require(cfg.stopping.alpha > 0.0 && cfg.stopping.alpha < 1.0, "alpha", "alpha must lie in (0, 1)");
    cfg.stopping.n0 = count_field(j, "n0", 0);
    require(cfg.stopping.n0 == 0 || cfg.stopping.n0 >= p, "n0", "n0 must be at least the number of coefficients");
    if (j.contains("growth")) {
        require(j["growth"].is_string(), "growth", "growth must be a string such as \"n\"");
        try {
            cfg.stopping.growth = GrowthFunction::parse(j["growth"].get<std::string>());
        } catch (const Error& e) {
            throw bad_request("config.growth", e.what());
        }
    }
    if (j.contains("estimator")) {
        require(j["estimator"].is_string(), "estimator", "estimator must be \"ase\" or \"mle\"");
        try {
            cfg.estimator = parse_estimator(j["estimator"].get<std::string>());
        } catch (const Error& e) {
            throw bad_request("config.estimator", e.what());
        }
    }

    cfg.selection.rho = number_field(j, "rho", cfg.selection.rho);
    require(cfg.selection.rho > 0.0 && cfg.selection.rho <= 1.0, "rho", "rho must lie in (0, 1]");
    cfg.selection.p_target = number_field(j, "p_target", cfg.selection.p_target);
    require(cfg.selection.p_target > 0.0 && cfg.selection.p_target < 1.0, "p_target", "p_target must lie in (0, 1)");
    if (j.contains("cluster_k")) {
        ClusterPrefilterConfig pf;
        pf.k = static_cast<int>(count_field(j, "cluster_k", 0));
        pf.refresh_every = static_cast<int>(count_field(j, "cluster_refresh", 100));
        require(pf.k >= 1, "cluster_k", "cluster_k must be >= 1");
        require(pf.refresh_every >= 1, "cluster_refresh", "cluster_refresh must be >= 1");
        cfg.selection.cluster_prefilter = pf;
    }

    cfg.shrinkage.epsilon = number_field(j, "epsilon", cfg.shrinkage.epsilon);
    require(cfg.shrinkage.epsilon > 0.0, "epsilon", "epsilon must be positive");
    cfg.shrinkage.gamma = number_field(j, "gamma", cfg.shrinkage.gamma);
    require(cfg.shrinkage.gamma > 0.0, "gamma", "gamma must be positive");
    cfg.shrinkage.lambda_scale = number_field(j, "lambda_scale", cfg.shrinkage.lambda_scale);
    require(cfg.shrinkage.lambda_scale > 0.0, "lambda_scale", "lambda_scale must be positive");
    cfg.shrinkage.lambda_exponent = number_field(j, "lambda_exponent", cfg.shrinkage.lambda_exponent);
    require(cfg.shrinkage.lambda_exponent > 0.5 && cfg.shrinkage.lambda_exponent < 0.5 + 0.5 * cfg.shrinkage.gamma,
            "lambda_exponent", "lambda_exponent must lie in (0.5, 0.5 + gamma/2)");

    cfg.max_steps = count_field(j, "max_steps", 0);
    require(cfg.max_steps == 0 || cfg.max_steps >= cfg.stopping.effective_n0(p), "max_steps",
            "max_steps must be 0 or at least n0");
    cfg.seed = count_field(j, "seed", 0);

    try {
        cfg.validate(p);
    } catch (const Error& e) {
        throw bad_request("config", e.what());
    }
    return cfg;
}

json learner_config_json(const LearnerConfig& cfg) {
    json j{{"d", cfg.stopping.d},
           {"alpha", cfg.stopping.alpha},
           {"n0", cfg.stopping.n0},
           {"growth", cfg.stopping.growth.id()},
           {"estimator", to_string(cfg.estimator)},
           {"rho", cfg.selection.rho},
           {"p_target", cfg.selection.p_target},
           {"epsilon", cfg.shrinkage.epsilon},
           {"gamma", cfg.shrinkage.gamma},
           {"lambda_scale", cfg.shrinkage.lambda_scale},
           {"lambda_exponent", cfg.shrinkage.lambda_exponent},
           {"max_steps", cfg.max_steps},
           {"seed", cfg.seed}};
    if (cfg.selection.cluster_prefilter) {
        j["cluster_k"] = cfg.selection.cluster_prefilter->k;
        j["cluster_refresh"] = cfg.selection.cluster_prefilter->refresh_every;
    }
    return j;
}

struct SessionStore::Session {
    std::string id;
    fs::path log_path;
    std::ofstream log;
    std::mutex mutex;
    std::shared_ptr<const Matrix> features;
    std::unique_ptr<ActiveLearner> learner;
    json init_record;
    bool stop_logged = false;

    void append(json event) {
        event["time"] = timestamp();
        log << event.dump() << '\n';
        log.flush();
        if (!log) throw ApiError(500, "log_write_failed", "cannot append to the session event log");
    }

    json pending_json() const {
        const auto q = learner->pending();
        if (!q) return nullptr;
        return json{{"subject_id", q->subject},
                    {"bootstrap", q->bootstrap},
                    {"u_score", opt_json(q->u_score)},
                    {"d_rank", q->d_rank ? json(*q->d_rank) : json(nullptr)}};
    }

    json view() const {
        const ActiveLearner& l = *learner;
        json v;
        v["session_id"] = id;
        v["phase"] = to_string(l.phase());
        v["estimator"] = to_string(l.config().estimator);
        v["n_labeled"] = l.n_labeled();
        v["n0"] = l.n0();
        v["stopped"] = l.phase() == ActiveLearner::Phase::Stopped;
        v["finished"] = l.finished();
        if (const auto& ev = l.latest()) {
            v["beta_hat"] = ev->beta_hat;
            v["beta_tilde"] = ev->beta_tilde;
            v["indicators"] = ev->indicators;
            v["p0_hat"] = ev->p0_hat ? json(*ev->p0_hat) : json(nullptr);
            v["nu_n"] = opt_json(ev->nu_n);
            v["threshold"] = opt_json(ev->threshold);
            v["a_n_sq"] = opt_json(ev->a_n_sq);
            v["kappa"] = opt_json(ev->kappa);
        } else {
            for (const char* k : {"beta_hat", "beta_tilde", "indicators", "p0_hat", "nu_n", "threshold", "a_n_sq", "kappa"})
                v[k] = nullptr;
        }
        json history = json::array();
        for (const auto& t : l.trace())
            history.push_back({{"n", t.n}, {"nu_n", opt_json(t.nu_n)}, {"threshold", opt_json(t.threshold)}});
        v["history"] = std::move(history);
        v["pending"] = pending_json();
        return v;
    }

    void log_progress() {
        if (const auto q = learner->pending()) {
            json e = pending_json();
            e["type"] = "query";
            append(std::move(e));
        } else if (learner->finished() && !stop_logged) {
            append({{"type", "stop"}, {"status", to_string(learner->phase())}, {"n", learner->n_labeled()}});
            stop_logged = true;
        }
    }
};

namespace {

std::shared_ptr<const Matrix> load_features(const json& source, const StoreOptions& opts) {
    if (source.contains("features")) {
        const json& rows = source["features"];
        if (!rows.is_array() || rows.empty()) throw bad_request("features", "features must be a non-empty array of rows");
        const std::size_t p = rows[0].is_array() ? rows[0].size() : 0;
        if (p == 0) throw bad_request("features", "feature rows must be non-empty arrays");
        Matrix x(rows.size(), p);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!rows[i].is_array() || rows[i].size() != p)
                throw bad_request("features", "row " + std::to_string(i) + " does not have " + std::to_string(p) + " values");
            for (std::size_t c = 0; c < p; ++c) {
                if (!rows[i][c].is_number()) throw bad_request("features", "row " + std::to_string(i) + " holds a non-number");
                x(i, c) = rows[i][c].get<double>();
                if (!std::isfinite(x(i, c))) throw bad_request("features", "features must be finite");
            }
        }
        return std::make_shared<const Matrix>(std::move(x));
    }
    if (source.contains("dataset")) {
        const json& ds = source["dataset"];
        if (!ds.is_object() || !ds.contains("path") || !ds["path"].is_string())
            throw bad_request("dataset.path", "dataset must be an object with a string path");
        fs::path path = ds["path"].get<std::string>();
        if (path.is_relative()) path = opts.data_dir / path;
        CsvTable table;
        try {
            table = read_csv(path.string());
        } catch (const Error& e) {
            throw bad_request("dataset.path", e.what());
        }
        std::vector<std::string> columns;
        if (ds.contains("feature_columns")) {
            if (!ds["feature_columns"].is_array()) throw bad_request("dataset.feature_columns", "must be a list of names");
            for (const auto& c : ds["feature_columns"]) {
                if (!c.is_string()) throw bad_request("dataset.feature_columns", "must be a list of names");
                columns.push_back(c.get<std::string>());
            }
        } else {
            const std::string skip = ds.value("label_column", std::string());
            for (const auto& h : table.header)
                if (h != skip) columns.push_back(h);
        }
        try {
            return ingest_table(table, CsvSchema{"", columns, "1", std::nullopt}).features;
        } catch (const Error& e) {
            throw bad_request("dataset", e.what());
        }
    }
    if (source.contains("synthetic")) {
        const json& sy = source["synthetic"];
        if (!sy.is_object()) throw bad_request("synthetic", "synthetic must be an object");
        SyntheticSpec spec;
        try {
            spec.n_pool = sy.value("n_pool", spec.n_pool);
            spec.seed = sy.value("seed", spec.seed);
            spec.intercept = sy.value("intercept", spec.intercept);
            if (sy.contains("beta")) spec.beta_true = sy["beta"].get<Vector>();
            spec.covariate_dim = sy.value("covariate_dim", spec.beta_true.size() - (spec.intercept ? 1 : 0));
            return gen_synthetic(spec).features;
        } catch (const Error& e) {
            throw bad_request("synthetic", e.what());
        } catch (const json::exception& e) {
            throw bad_request("synthetic", e.what());
        }
    }
    if (opts.default_source) return load_features(*opts.default_source, opts);
    throw bad_request("features", "request names no feature source and the server has no default dataset");
}

}  // namespace

SessionStore::SessionStore(StoreOptions options) : options_(std::move(options)) {
    fs::create_directories(options_.root);
    std::vector<fs::path> logs;
    for (const auto& entry : fs::directory_iterator(options_.root))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") logs.push_back(entry.path());
    std::sort(logs.begin(), logs.end());
    for (const auto& log : logs) {
        auto s = replay(log);
        sessions_.emplace(s->id, std::move(s));
    }
}

SessionStore::~SessionStore() = default;

std::shared_ptr<SessionStore::Session> SessionStore::replay(const fs::path& log_path) {
    std::ifstream in(log_path);
    std::string line;
    auto s = std::make_shared<Session>();
    s->id = log_path.stem().string();
    s->log_path = log_path;
    std::size_t lineno = 0;
    std::vector<json> events;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            events.push_back(json::parse(line));
        } catch (const json::exception&) {
            // A torn final write is dropped; anything earlier is corruption.
            if (in.peek() == std::char_traits<char>::eof()) break;
            throw Error(ErrorCode::ParseError, log_path.string() + ": line " + std::to_string(lineno) + " is not JSON");
        }
    }
    if (events.empty() || events.front().value("type", "") != "init")
        throw Error(ErrorCode::ParseError, log_path.string() + ": event log does not start with init");

    s->init_record = events.front();
    const json& req = s->init_record["request"];
    s->features = load_features(req, options_);
    const LearnerConfig cfg = parse_learner_config(req.value("config", json::object()), s->features->cols());
    if (req.contains("bootstrap"))
        s->learner = std::make_unique<ActiveLearner>(s->features, cfg, req["bootstrap"].get<std::vector<std::size_t>>());
    else
        s->learner = std::make_unique<ActiveLearner>(s->features, cfg);

    for (std::size_t k = 1; k < events.size(); ++k) {
        const json& e = events[k];
        const std::string type = e.value("type", "");
        if (type == "label") {
            const auto q = s->learner->pending();
            const auto subject = e.at("subject_id").get<std::size_t>();
            if (!q || q->subject != subject)
                throw Error(ErrorCode::ParseError, log_path.string() + ": label event " + std::to_string(k) +
                                                       " does not match the replayed query");
            s->learner->submit(subject, e.at("label").get<int>());
        } else if (type == "stop") {
            s->stop_logged = true;
        }
    }
    s->log.open(log_path, std::ios::app);
    if (s->learner->finished() && !s->stop_logged) s->log_progress();
    return s;
}

std::string SessionStore::create(const json& request) {
    if (!request.is_object()) throw bad_request("body", "request body must be a JSON object");
    json normalized = request;
    if (!request.contains("features") && !request.contains("dataset") && !request.contains("synthetic") &&
        options_.default_source)
        normalized.update(*options_.default_source);

    auto s = std::make_shared<Session>();
    s->features = load_features(normalized, options_);
    const LearnerConfig cfg = parse_learner_config(normalized.value("config", json::object()), s->features->cols());
    try {
        if (normalized.contains("bootstrap")) {
            if (!normalized["bootstrap"].is_array()) throw bad_request("bootstrap", "bootstrap must be a list of subject ids");
            s->learner = std::make_unique<ActiveLearner>(s->features, cfg,
                                                         normalized["bootstrap"].get<std::vector<std::size_t>>());
        } else {
            s->learner = std::make_unique<ActiveLearner>(s->features, cfg);
        }
    } catch (const Error& e) {
        throw bad_request(normalized.contains("bootstrap") ? "bootstrap" : "config", e.what());
    } catch (const json::exception& e) {
        throw bad_request("bootstrap", e.what());
    }

    std::unique_lock lock(mutex_);
    do {
        s->id = new_id();
    } while (sessions_.count(s->id) || fs::exists(options_.root / (s->id + ".jsonl")));
    s->log_path = options_.root / (s->id + ".jsonl");
    s->log.open(s->log_path, std::ios::app);
    if (!s->log) throw ApiError(500, "log_write_failed", "cannot create the session event log");
    s->init_record = {{"type", "init"}, {"session_id", s->id}, {"version", kVersion}, {"request", normalized}};
    s->append(s->init_record);
    s->log_progress();
    sessions_.emplace(s->id, s);
    return s->id;
}

std::shared_ptr<SessionStore::Session> SessionStore::find(const std::string& id) const {
    if (valid_id(id)) {
        std::shared_lock lock(mutex_);
        if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
    }
    throw ApiError(404, "unknown_session", "no session with id '" + id + "'");
}

json SessionStore::query(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    const auto q = s->learner->pending();
    if (!q) return json{{"status", to_string(s->learner->phase())}, {"state", s->view()}};
    const auto row = s->features->row(q->subject);
    return json{{"status", "pending"},
                {"subject_id", q->subject},
                {"features", Vector(row.begin(), row.end())},
                {"u_score", opt_json(q->u_score)},
                {"d_rank", q->d_rank ? json(*q->d_rank) : json(nullptr)},
                {"bootstrap", q->bootstrap},
                {"n_labeled", s->learner->n_labeled()}};
}

json SessionStore::label(const std::string& id, const json& body) {
    auto s = find(id);
    if (!body.is_object()) throw bad_request("body", "request body must be a JSON object");
    if (!body.contains("subject_id") || !body["subject_id"].is_number_integer())
        throw bad_request("subject_id", "subject_id must be an integer");
    if (!body.contains("label")) throw bad_request("label", "label is required");
    const json& lj = body["label"];
    if (!lj.is_number_integer() || (lj.get<std::int64_t>() != 0 && lj.get<std::int64_t>() != 1))
        throw ApiError(422, "non_binary_label", "label must be 0 or 1", "label");
    const auto subject = body["subject_id"].get<std::int64_t>();
    const int label = lj.get<int>();

    std::lock_guard lock(s->mutex);
    const auto q = s->learner->pending();
    if (!q) throw ApiError(409, "session_finished", "session is " + to_string(s->learner->phase()) + "; no query is pending");
    if (subject < 0 || static_cast<std::size_t>(subject) != q->subject)
        throw ApiError(409, "stale_subject",
                       "subject " + std::to_string(subject) + " is not the pending query " + std::to_string(q->subject),
                       "subject_id");
    try {
        s->learner->submit(q->subject, label);
    } catch (const Error& e) {
        // The learner may be half-advanced; rebuild it from the log, which lacks this label.
        s->log.close();
        auto fresh = replay(s->log_path);
        s->learner = std::move(fresh->learner);
        s->stop_logged = fresh->stop_logged;
        s->log.open(s->log_path, std::ios::app);
        throw ApiError(500, "learner_failure", e.what());
    }
    s->append({{"type", "label"}, {"subject_id", q->subject}, {"label", label}});
    s->log_progress();
    return s->view();
}

json SessionStore::state(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    return s->view();
}

std::size_t SessionStore::size() const {
    std::shared_lock lock(mutex_);
    return sessions_.size();
}

json SessionStore::health() const {
    return json{{"status", "ok"},
                {"service", "seqal"},
                {"version", kVersion},
                {"sessions", size()},
                {"endpoints",
                 {"POST /sessions", "GET /sessions/{id}/query", "POST /sessions/{id}/labels",
                  "GET /sessions/{id}/state", "GET /healthz"}}};
}

struct Server::Impl {
    SessionStore& store;
    httplib::Server http;

    explicit Impl(SessionStore& s) : store(s) {}

    template <class F>
    void guarded(httplib::Response& res, int ok_status, F&& body) {
        try {
            json out = body();
            res.status = ok_status;
            res.set_content(out.dump(), "application/json");
        } catch (const ApiError& e) {
            res.status = e.status();
            res.set_content(e.body().dump(), "application/json");
        } catch (const json::parse_error& e) {
            res.status = 400;
            res.set_content(ApiError(400, "invalid_json", e.what(), "body").body().dump(), "application/json");
        } catch (const Error& e) {
            res.status = 500;
            res.set_content(ApiError(500, std::string(to_string(e.code())), e.what()).body().dump(), "application/json");
        } catch (const std::exception& e) {
            res.status = 500;
            res.set_content(ApiError(500, "internal", e.what()).body().dump(), "application/json");
        }
    }

    void routes() {
        // SO_REUSEADDR only: with SO_REUSEPORT a second instance would silently share the port.
        http.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
        });
        http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (!res.body.empty()) return;
            const std::string code = res.status == 404 ? "not_found" : "http_" + std::to_string(res.status);
            res.set_content(json{{"code", code}, {"message", req.method + " " + req.path}}.dump(), "application/json");
        });
        http.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, 200, [&] { return store.health(); });
        });
        http.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, 201, [&] {
                const json body = req.body.empty() ? json::object() : json::parse(req.body);
                const std::string id = store.create(body);
                return json{{"session_id", id}, {"state", store.state(id)}};
            });
        });
        http.Get(R"(/sessions/([^/]+)/query)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, 200, [&] { return store.query(req.matches[1]); });
        });
        http.Post(R"(/sessions/([^/]+)/labels)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, 200, [&] { return store.label(req.matches[1], json::parse(req.body)); });
        });
        http.Get(R"(/sessions/([^/]+)/state)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, 200, [&] { return store.state(req.matches[1]); });
        });
    }
};

Server::Server(SessionStore& store) : impl_(std::make_unique<Impl>(store)) { impl_->routes(); }

Server::~Server() = default;

bool Server::bind(const std::string& host, int port) { return impl_->http.bind_to_port(host, port); }

int Server::bind_any(const std::string& host) { return impl_->http.bind_to_any_port(host); }

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::wait_until_ready() const { impl_->http.wait_until_ready(); }

void Server::stop() { impl_->http.stop(); }

}  // namespace seqal::service
