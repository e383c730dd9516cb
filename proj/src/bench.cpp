#include "seqal/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "seqal/error.hpp"
#include "seqal/numerics.hpp"

namespace seqal {

using nlohmann::json;

void SyntheticSpec::validate() const {
    if (n_pool == 0) throw Error(ErrorCode::InvalidArgument, "pool size must be positive");
    if (covariate_dim == 0) throw Error(ErrorCode::InvalidArgument, "covariate dimension must be positive");
    if (beta_true.size() != covariate_dim + (intercept ? 1 : 0))
        throw Error(ErrorCode::InvalidArgument, "beta length must equal covariate_dim (+1 with intercept)");
}

Pool gen_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t p = spec.beta_true.size();
    const std::size_t offset = spec.intercept ? 1 : 0;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Matrix x(spec.n_pool, p);
    std::vector<int> y(spec.n_pool);
    for (std::size_t i = 0; i < spec.n_pool; ++i) {
        auto xi = x.row(i);
        if (spec.intercept) xi[0] = 1.0;
        for (std::size_t j = offset; j < p; ++j) xi[j] = normal(rng);
        y[i] = unif(rng) < mu(dot(xi, spec.beta_true)) ? 1 : 0;
    }
    return Pool::make(std::move(x), std::move(y));
}

MeanSd mean_sd(const std::vector<double>& values) {
    MeanSd out;
    out.count = values.size();
    if (values.empty()) return out;
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

bool covers(const RunReport& report, std::span<const double> beta_true, const StoppingConfig& stopping) {
    if (!report.nu_n || report.status != "stopped") return false;
    int selected = 0;
    for (int v : report.indicators) selected += v;
    if (selected == 0) return false;
    const SymMatrix precision = selected_precision(report.fisher_hat, report.indicators);
    return ellipsoid_contains(beta_true, report.beta_hat, precision, *report.nu_n, report.N, stopping.d,
                              report.indicators, stopping.growth);
}

ReplicationSummary aggregate(std::vector<std::optional<RunReport>> runs, std::vector<std::string> failures,
                             const LearnerConfig& cfg) {
    ReplicationSummary s;
    s.estimator = cfg.estimator;
    s.d = cfg.stopping.d;
    s.failures = std::move(failures);
    s.failed = s.failures.size();

    std::vector<double> n, t, acc, auc_v, kap, ang, p0;
    std::vector<std::vector<double>> beta;
    std::size_t covered = 0;
    std::size_t with_coverage = 0;
    for (auto& r : runs) {
        if (!r) continue;
        if (r->status != "stopped") ++s.capped;
        n.push_back(static_cast<double>(r->N));
        t.push_back(r->wall_time);
        acc.push_back(r->acc);
        if (!std::isnan(r->auc)) auc_v.push_back(r->auc);
        if (r->kappa) kap.push_back(*r->kappa);
        if (r->angle_to_truth) ang.push_back(*r->angle_to_truth);
        if (r->p0_hat) p0.push_back(*r->p0_hat);
        if (beta.size() < r->beta_hat.size()) beta.resize(r->beta_hat.size());
        for (std::size_t j = 0; j < r->beta_hat.size(); ++j) beta[j].push_back(r->beta_hat[j]);
        if (r->covers_truth) {
            ++with_coverage;
            covered += *r->covers_truth ? 1 : 0;
        }
        s.per_run.push_back(std::move(*r));
    }
    s.runs = s.per_run.size();
    s.N = mean_sd(n);
    s.wall_time = mean_sd(t);
    s.acc = mean_sd(acc);
    s.auc = mean_sd(auc_v);
    s.kappa = mean_sd(kap);
    s.angle = mean_sd(ang);
    if (cfg.estimator == EstimatorMode::ASE) s.p0_hat = mean_sd(p0);
    for (const auto& b : beta) s.beta.push_back(mean_sd(b));
    if (with_coverage > 0) s.coverage = static_cast<double>(covered) / static_cast<double>(with_coverage);
    return s;
}

ReplicationSummary replicate(const SyntheticSpec& spec, const LearnerConfig& cfg, const ReplicateOptions& opts) {
    if (opts.runs < 1) throw Error(ErrorCode::InvalidArgument, "runs must be >= 1");
    spec.validate();
    cfg.validate(spec.beta_true.size());

    std::vector<std::optional<RunReport>> results(opts.runs);
    std::vector<std::string> errors(opts.runs);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < opts.runs; i = next++) {
            SyntheticSpec run_spec = spec;
            run_spec.seed = spec.seed + i;
            LearnerConfig run_cfg = cfg;
            run_cfg.seed = spec.seed + i;
            try {
                const Pool pool = gen_synthetic(run_spec);
                ReplayOracle oracle(*pool.labels);
                RunReport r = run(pool, run_cfg, oracle);
                r.covers_truth = covers(r, spec.beta_true, cfg.stopping);
                r.angle_to_truth = angle_between(r.beta_hat, spec.beta_true);
                if (!opts.keep_traces) {
                    r.trace.clear();
                    r.acquired.clear();
                    r.acquired_labels.clear();
                }
                results[i] = std::move(r);
            } catch (const std::exception& e) {
                errors[i] = "run " + std::to_string(i) + ": " + e.what();
            }
        }
    };

    const unsigned jobs = std::max(1u, std::min<unsigned>(opts.jobs, static_cast<unsigned>(opts.runs)));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < jobs; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::vector<std::string> failures;
    for (auto& e : errors)
        if (!e.empty()) failures.push_back(std::move(e));
    return aggregate(std::move(results), std::move(failures), cfg);
}

CsvTable parse_csv(const std::string& text) {
    CsvTable table;
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    std::size_t line = 1;
    std::size_t i = 0;
    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
        record.clear();
    };
    while (i < text.size()) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            ++i;
            continue;
        }
        if (c == '"') {
            if (!field.empty() || field_was_quoted)
                throw Error(ErrorCode::ParseError,
                            "line " + std::to_string(line) + ", column " + std::to_string(record.size() + 1) +
                                ": stray quote inside unquoted field");
            in_quotes = true;
            field_was_quoted = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_record();
            ++line;
        } else if (c == '\n') {
            end_record();
            ++line;
        } else {
            if (field_was_quoted)
                throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ", column " +
                                                       std::to_string(record.size() + 1) +
                                                       ": text after closing quote");
            field.push_back(c);
        }
        ++i;
    }
    if (in_quotes) throw Error(ErrorCode::ParseError, "unterminated quoted field at end of input");
    if (!field.empty() || !record.empty() || field_was_quoted) end_record();

    if (records.empty()) throw Error(ErrorCode::ParseError, "CSV input has no header row");
    table.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.header.size())
            throw Error(ErrorCode::ParseError, "row " + std::to_string(r + 1) + ": expected " +
                                                   std::to_string(table.header.size()) + " fields, found " +
                                                   std::to_string(records[r].size()));
        table.rows.push_back(std::move(records[r]));
    }
    return table;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str());
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
    const std::string t = trim(cell);
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used == t.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::ParseError, "row " + std::to_string(row) + ", column '" + column +
                                           "': non-numeric value '" + cell + "'");
}

}  // namespace

Pool ingest_table(const CsvTable& table, const CsvSchema& schema) {
    auto column_index = [&](const std::string& name) {
        auto it = std::find(table.header.begin(), table.header.end(), name);
        if (it == table.header.end()) throw Error(ErrorCode::ParseError, "column '" + name + "' not found in header");
        return static_cast<std::size_t>(it - table.header.begin());
    };

    std::optional<std::size_t> label_idx;
    if (!schema.label_column.empty()) label_idx = column_index(schema.label_column);

    std::vector<std::size_t> feat_idx;
    std::vector<std::string> feat_names;
    if (schema.feature_columns.empty()) {
        for (std::size_t c = 0; c < table.header.size(); ++c)
            if (!label_idx || c != *label_idx) {
                feat_idx.push_back(c);
                feat_names.push_back(table.header[c]);
            }
    } else {
        for (const auto& name : schema.feature_columns) {
            feat_idx.push_back(column_index(name));
            feat_names.push_back(name);
        }
    }
    if (feat_idx.empty()) throw Error(ErrorCode::InvalidArgument, "no feature columns selected");

    Matrix x(table.rows.size(), feat_idx.size());
    std::optional<std::vector<int>> y;
    if (label_idx) y.emplace(table.rows.size());
    std::optional<std::string> negative = schema.negative_value;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        for (std::size_t c = 0; c < feat_idx.size(); ++c) x(r, c) = parse_number(row[feat_idx[c]], r + 2, feat_names[c]);
        if (label_idx) {
            const std::string v = trim(row[*label_idx]);
            if (v == schema.positive_value) {
                (*y)[r] = 1;
            } else {
                if (!negative) negative = v;
                if (v != *negative)
                    throw Error(ErrorCode::NonBinaryLabel, "row " + std::to_string(r + 2) + ": label '" + v +
                                                               "' is neither '" + schema.positive_value + "' nor '" +
                                                               *negative + "'");
                (*y)[r] = 0;
            }
        }
    }
    return Pool::make(std::move(x), std::move(y));
}

Pool ingest_csv(const std::string& path, const CsvSchema& schema) { return ingest_table(read_csv(path), schema); }

Split make_split(const Pool& pool, std::size_t n_pos, std::size_t n_neg, std::uint64_t seed) {
    if (!pool.labels) throw Error(ErrorCode::InvalidArgument, "splitting requires labels");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < pool.size(); ++i) ((*pool.labels)[i] == 1 ? pos : neg).push_back(i);
    if (pos.size() < n_pos || neg.size() < n_neg)
        throw Error(ErrorCode::InsufficientClass, "requested " + std::to_string(n_pos) + " positives and " +
                                                      std::to_string(n_neg) + " negatives; pool has " +
                                                      std::to_string(pos.size()) + " and " +
                                                      std::to_string(neg.size()));
    std::mt19937_64 rng(seed);
    auto partial_shuffle = [&](std::vector<std::size_t>& v, std::size_t k) {
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng() % (v.size() - i));
            std::swap(v[i], v[j]);
        }
    };
    partial_shuffle(pos, n_pos);
    partial_shuffle(neg, n_neg);

    std::vector<std::uint8_t> in_train(pool.size(), 0);
    for (std::size_t k = 0; k < n_pos; ++k) in_train[pos[k]] = 1;
    for (std::size_t k = 0; k < n_neg; ++k) in_train[neg[k]] = 1;

    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < pool.size(); ++i) (in_train[i] ? train_idx : test_idx).push_back(i);
    auto take = [&](const std::vector<std::size_t>& idx) {
        std::vector<int> y(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) y[k] = (*pool.labels)[idx[k]];
        return Pool::make(pool.features->select_rows(idx), std::move(y));
    };
    Split out{take(train_idx), take(test_idx), std::nullopt};
    if (test_idx.empty()) out.warning = "split uses every subject for training; the test set is empty";
    return out;
}

ReportFormat parse_format(const std::string& s) {
    if (s == "json") return ReportFormat::Json;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "markdown" || s == "md") return ReportFormat::Markdown;
    throw Error(ErrorCode::InvalidArgument, "format must be json, csv or markdown");
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json opt(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

json mean_sd_json(const MeanSd& m) { return json{{"mean", m.mean}, {"sd", m.sd}, {"count", m.count}}; }

json run_json(const RunReport& r, bool timing) {
    json j;
    j["N"] = r.N;
    j["n0"] = r.n0;
    j["status"] = r.status;
    j["estimator"] = to_string(r.estimator);
    if (timing) j["wall_time"] = r.wall_time;
    j["beta_tilde"] = r.beta_tilde;
    j["beta_hat"] = r.beta_hat;
    j["indicators"] = r.indicators;
    j["p0_hat"] = opt(r.p0_hat);
    j["kappa"] = opt(r.kappa);
    j["nu_n"] = opt(r.nu_n);
    j["a_n_sq"] = opt(r.a_n_sq);
    j["acc"] = r.acc;
    j["auc"] = std::isnan(r.auc) ? json(nullptr) : json(r.auc);
    j["separation"] = r.separation;
    j["oracle_calls"] = r.oracle_calls;
    if (r.covers_truth) j["covers_truth"] = *r.covers_truth;
    if (r.angle_to_truth) j["angle_to_truth"] = *r.angle_to_truth;
    j["acquired"] = r.acquired;
    json trace = json::array();
    for (const auto& t : r.trace) {
        trace.push_back({{"n", t.n},
                         {"nu_n", opt(t.nu_n)},
                         {"threshold", opt(t.threshold)},
                         {"p0_hat", t.p0_hat},
                         {"selected", t.selected ? json(*t.selected) : json(nullptr)}});
    }
    j["trace"] = std::move(trace);
    return j;
}



std::string fmt_num(double v, int digits) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    std::string out = os.str();
    if (out.front() == '-' && out.find_first_not_of("-0.") == std::string::npos) out.erase(0, 1);
    return out;
}

std::string fmt_cell(const MeanSd& m, int digits) { return fmt_num(m.mean, digits) + "(" + fmt_num(m.sd, digits) + ")"; }

std::string upper(EstimatorMode m) { return m == EstimatorMode::ASE ? "ASE" : "MLE"; }

std::string csv_opt(const std::optional<double>& v) { return v ? fmt_num(*v, 6) : ""; }

}  // namespace

std::string emit_report(const ReplicationSummary& s, ReportFormat format, bool include_timing) {
    switch (format) {
        case ReportFormat::Json: {
            json j;
            j["runs"] = s.runs;
            j["failed"] = s.failed;
            j["capped"] = s.capped;
            j["estimator"] = to_string(s.estimator);
            j["d"] = s.d;
            j["N"] = mean_sd_json(s.N);
            if (include_timing) j["wall_time"] = mean_sd_json(s.wall_time);
            j["acc"] = mean_sd_json(s.acc);
            j["auc"] = mean_sd_json(s.auc);
            j["kappa"] = mean_sd_json(s.kappa);
            j["angle"] = mean_sd_json(s.angle);
            j["p0_hat"] = s.p0_hat ? mean_sd_json(*s.p0_hat) : json(nullptr);
            json beta = json::array();
            for (const auto& b : s.beta) beta.push_back(mean_sd_json(b));
            j["beta"] = std::move(beta);
            j["coverage"] = opt(s.coverage);
            json runs = json::array();
            for (const auto& r : s.per_run) runs.push_back(run_json(r, include_timing));
            j["per_run"] = std::move(runs);
            j["failures"] = s.failures;
            return j.dump(2) + "\n";
        }
        case ReportFormat::Csv: {
            std::ostringstream os;
            const std::size_t p = s.beta.size();
            os << "run,N,status,kappa,acc,auc,p0_hat";
            if (include_timing) os << ",wall_time";
            for (std::size_t j = 0; j < p; ++j) os << ",beta_" << (j + 1);
            os << ",covers_truth\n";
            for (std::size_t i = 0; i < s.per_run.size(); ++i) {
                const auto& r = s.per_run[i];
                os << i << "," << r.N << "," << r.status << "," << csv_opt(r.kappa) << "," << fmt_num(r.acc, 6)
                   << "," << (std::isnan(r.auc) ? "" : fmt_num(r.auc, 6)) << ","
                   << (r.p0_hat ? std::to_string(*r.p0_hat) : "");
                if (include_timing) os << "," << fmt_num(r.wall_time, 6);
                for (std::size_t j = 0; j < p; ++j) os << "," << (j < r.beta_hat.size() ? fmt_num(r.beta_hat[j], 6) : "");
                os << "," << (r.covers_truth ? (*r.covers_truth ? "1" : "0") : "") << "\n";
            }
            return os.str();
        }
        case ReportFormat::Markdown: {
            std::ostringstream os;
            os << "| d | Method | N | kappa |" << (include_timing ? " time |" : "") << " ACC | AUC |\n";
            os << "|---|---|---|---|" << (include_timing ? "---|" : "") << "---|---|\n";
            if (s.runs > 0) {
                os << "| " << fmt_num(s.d, 1) << " | " << upper(s.estimator) << " | " << fmt_cell(s.N, 3) << " | "
                   << fmt_num(s.kappa.mean, 3) << " | ";
                if (include_timing) os << fmt_cell(s.wall_time, 3) << " | ";
                os << fmt_cell(s.acc, 3) << " | " << fmt_cell(s.auc, 3) << " |\n";
            }
            os << "\n| Method | d | p0_hat |";
            for (std::size_t j = 0; j < s.beta.size(); ++j) os << " beta_" << (j + 1) << " |";
            os << "\n|---|---|---|";
            for (std::size_t j = 0; j < s.beta.size(); ++j) os << "---|";
            os << "\n";
            if (s.runs > 0) {
                os << "| " << upper(s.estimator) << " | " << fmt_num(s.d, 1) << " | "
                   << (s.p0_hat ? fmt_cell(*s.p0_hat, 3) : "-") << " |";
                for (const auto& b : s.beta) os << " " << fmt_cell(b, 3) << " |";
                os << "\n";
            }
            return os.str();
        }
    }
    return {};
}

std::string emit_report(const RunReport& r, ReportFormat format, bool include_timing) {
    switch (format) {
        case ReportFormat::Json: return run_json(r, include_timing).dump(2) + "\n";
        case ReportFormat::Csv: {
            std::ostringstream os;
            os << "n,nu_n,threshold,p0_hat,selected\n";
            for (const auto& t : r.trace)
                os << t.n << "," << csv_opt(t.nu_n) << "," << csv_opt(t.threshold) << "," << t.p0_hat << ","
                   << (t.selected ? std::to_string(*t.selected) : "") << "\n";
            return os.str();
        }
        case ReportFormat::Markdown: {
            std::ostringstream os;
            os << "| N | status | kappa | ACC | AUC | p0_hat |";
            for (std::size_t j = 0; j < r.beta_hat.size(); ++j) os << " beta_" << (j + 1) << " |";
            os << "\n|---|---|---|---|---|---|";
            for (std::size_t j = 0; j < r.beta_hat.size(); ++j) os << "---|";
            os << "\n| " << r.N << " | " << r.status << " | " << (r.kappa ? fmt_num(*r.kappa, 3) : "-") << " | "
               << fmt_num(r.acc, 3) << " | " << (std::isnan(r.auc) ? "-" : fmt_num(r.auc, 3)) << " | "
               << (r.p0_hat ? std::to_string(*r.p0_hat) : "-") << " |";
            for (double b : r.beta_hat) os << " " << fmt_num(b, 3) << " |";
            os << "\n";
            return os.str();
        }
    }
    return {};
}

}  // namespace seqal
