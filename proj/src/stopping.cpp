#include "seqal/stopping.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <vector>

#include "seqal/error.hpp"
#include "seqal/numerics.hpp"

namespace seqal {

GrowthFunction GrowthFunction::parse(const std::string& id) {
    if (id == "n") return {};
    if (id.rfind("n^", 0) == 0) {
        double e = 0.0;
        const char* first = id.data() + 2;
        const char* last = id.data() + id.size();
        auto [ptr, ec] = std::from_chars(first, last, e);
        if (ec == std::errc{} && ptr == last && e > 0.0) return {e};
    }
    throw Error(ErrorCode::InvalidArgument, "unknown growth function '" + id + "'");
}

std::string GrowthFunction::id() const {
    if (exponent == 1.0) return "n";
    std::ostringstream os;
    os << "n^" << exponent;
    return os.str();
}

double GrowthFunction::operator()(std::size_t n) const {
    const auto x = static_cast<double>(n);
    return exponent == 1.0 ? x : std::pow(x, exponent);
}

void StoppingConfig::validate(std::size_t p) const {
    if (!(d > 0.0)) throw Error(ErrorCode::InvalidArgument, "d must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
    if (n0 != 0 && n0 < p) throw Error(ErrorCode::InvalidArgument, "n0 must be at least the number of coefficients");
}

std::size_t StoppingConfig::effective_n0(std::size_t p) const {
    if (n0 != 0) return n0;
    return std::max<std::size_t>(2 * p, 20);
}

namespace {

std::vector<std::size_t> selected(std::span<const int> ind) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < ind.size(); ++j)
        if (ind[j]) out.push_back(j);
    return out;
}

}  // namespace

SymMatrix shrunk_inverse(const SymMatrix& fisher, std::span<const int> ind) {
    if (ind.size() != fisher.dim()) throw Error(ErrorCode::InvalidArgument, "indicator length mismatch");
    if (selected(ind).empty()) throw Error(ErrorCode::NoSelectedVariables, "no variables are selected");
    SymMatrix inv = Cholesky(fisher).inverse();
    const std::size_t p = inv.dim();
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i; j < p; ++j)
            if (!ind[i] || !ind[j]) inv.set(i, j, 0.0);
    return inv;
}

double nu_n(const SymMatrix& fisher, std::span<const int> ind, std::size_t n, const GrowthFunction& growth) {
    const SymMatrix masked = shrunk_inverse(fisher, ind);
    return growth(n) * sym_eigenvalues(masked).front();
}

StoppingState should_stop(double nu, std::size_t n, int p0_hat, const StoppingConfig& cfg) {
    if (p0_hat < 1) throw Error(ErrorCode::ZeroSupport, "no selected variables; the stopping rule is undefined");
    StoppingState s;
    s.nu_n = nu;
    s.a_n_sq = chi2_quantile(p0_hat, 1.0 - cfg.alpha);
    s.threshold = cfg.growth(n) * cfg.d * cfg.d / s.a_n_sq;
    s.stopped = nu <= s.threshold;
    if (s.stopped) s.kappa = kappa(n, cfg.d, s.a_n_sq, nu);
    return s;
}

SymMatrix selected_precision(const SymMatrix& fisher, std::span<const int> ind) {
    const auto sel = selected(ind);
    const SymMatrix masked = shrunk_inverse(fisher, ind);
    return Cholesky(masked.submatrix(sel)).inverse();
}

double ellipsoid_statistic(std::span<const double> z, std::span<const double> beta_hat,
                           const SymMatrix& sigma11_tilde, std::span<const int> ind) {
    const auto sel = selected(ind);
    if (sel.size() != sigma11_tilde.dim()) throw Error(ErrorCode::InvalidArgument, "precision block size mismatch");
    Vector diff(sel.size());
    for (std::size_t k = 0; k < sel.size(); ++k) diff[k] = z[sel[k]] - beta_hat[sel[k]];
    return dot(diff, sigma11_tilde.multiply(diff));
}

bool ellipsoid_contains(std::span<const double> z, std::span<const double> beta_hat, const SymMatrix& sigma11_tilde,
                        double nu, std::size_t n, double d, std::span<const int> ind, const GrowthFunction& growth) {
    if (z.size() != ind.size() || beta_hat.size() != ind.size())
        throw Error(ErrorCode::InvalidArgument, "ellipsoid dimension mismatch");
    for (std::size_t j = 0; j < ind.size(); ++j)
        if (!ind[j] && z[j] != 0.0) return false;
    const double s = ellipsoid_statistic(z, beta_hat, sigma11_tilde, ind);
    return s / growth(n) <= d * d / nu;
}

double ellipsoid_max_semi_axis(const SymMatrix& sigma11_tilde, double nu, std::size_t n, double d,
                               const GrowthFunction& growth) {
    const double radius_sq = growth(n) * d * d / nu;
    return std::sqrt(radius_sq / sym_eigenvalues(sigma11_tilde).back());
}

double kappa(std::size_t n, double d, double a_sq, double nu) {
    return d * d * static_cast<double>(n) / (a_sq * nu);
}

}  // namespace seqal
