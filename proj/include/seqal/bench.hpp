#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seqal/learner.hpp"

namespace seqal {

/// Logistic data with i.i.d. standard normal covariates. With `intercept`
/// a leading column of ones is prepended and beta_true[0] is its coefficient.
struct SyntheticSpec {
    std::size_t n_pool = 30000;
    Vector beta_true{-1.0, 1.0, 0.0, 0.0};
    std::size_t covariate_dim = 4;
    bool intercept = false;
    std::uint64_t seed = 0;

    void validate() const;
};

Pool gen_synthetic(const SyntheticSpec& spec);

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
    std::size_t count = 0;
};

/// Sample mean and (n - 1) standard deviation; sd is 0 for a single value.
MeanSd mean_sd(const std::vector<double>& values);

struct ReplicationSummary {
    std::size_t runs = 0;      ///< successful runs aggregated
    std::size_t failed = 0;
    std::size_t capped = 0;    ///< runs that hit max_steps or exhausted the pool
    EstimatorMode estimator = EstimatorMode::ASE;
    double d = 0.0;
    MeanSd N, wall_time, acc, auc, kappa, angle;
    std::optional<MeanSd> p0_hat;  ///< ASE only
    std::vector<MeanSd> beta;      ///< per coefficient of beta_hat
    std::optional<double> coverage;
    std::vector<RunReport> per_run;
    std::vector<std::string> failures;
};

struct ReplicateOptions {
    std::size_t runs = 1;
    unsigned jobs = 1;
    bool keep_traces = false;
};

/// Independent runs; run i uses seed base + i both for its data and for the
/// learner, so results do not depend on scheduling.
ReplicationSummary replicate(const SyntheticSpec& spec, const LearnerConfig& cfg, const ReplicateOptions& opts);

/// Aggregates finished runs in index order.
ReplicationSummary aggregate(std::vector<std::optional<RunReport>> runs, std::vector<std::string> failures,
                             const LearnerConfig& cfg);

/// beta_true inside R_N for a finished report.
bool covers(const RunReport& report, std::span<const double> beta_true, const StoppingConfig& stopping);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// RFC 4180 reader (quoted fields, doubled quotes, CRLF). Throws ParseError
/// with row/column context on malformed input and Io when unreadable.
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

struct CsvSchema {
    std::string label_column;               ///< empty: features-only pool
    std::vector<std::string> feature_columns;  ///< empty: every non-label column
    std::string positive_value = "1";
    std::optional<std::string> negative_value;  ///< empty: any other single value
};

Pool ingest_csv(const std::string& path, const CsvSchema& schema);
Pool ingest_table(const CsvTable& table, const CsvSchema& schema);

struct Split {
    Pool train;
    Pool test;
    std::optional<std::string> warning;  ///< set when the test set is empty
};

/// Stratified draw of n_pos positives and n_neg negatives for training; the
/// rest become the test set. Throws InsufficientClass.
Split make_split(const Pool& pool, std::size_t n_pos, std::size_t n_neg, std::uint64_t seed);

enum class ReportFormat { Json, Csv, Markdown };
ReportFormat parse_format(const std::string& s);

std::string emit_report(const ReplicationSummary& summary, ReportFormat format, bool include_timing = false);
std::string emit_report(const RunReport& report, ReportFormat format, bool include_timing = false);

}  // namespace seqal
