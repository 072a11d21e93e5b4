#pragma once

#include "crisk/cox.hpp"
#include "crisk/dataset.hpp"
#include "crisk/tuning.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace crisk {

struct LassoOptions {
    std::size_t n_lambda = 100;
    double lambda_min_ratio = 0.01;
    double tol = 1e-9;            // inner sweeps stop once no standardized coefficient moves more
    double kkt_tol = 1e-8;        // optimality tolerance that ends the outer iterations
    int max_sweeps = 1000;        // outer iterations per lambda, and inner sweeps per outer iteration
    bool early_exit = true;       // stop once df > min(n/2, events)
    /// Called after every outer iteration with (lambda index, penalized objective).
    std::function<void(std::size_t, double)> on_sweep;
};

/// Solutions along a decreasing lambda grid. Coefficients are on the original covariate scale.
struct RegularizationPath {
    std::vector<double> lambdas;
    std::vector<Vector> betas;
    std::vector<double> logliks;
    std::vector<std::size_t> df;
    Vector scale;                 // population sd per column; 0 marks an excluded constant column
    std::size_t n = 0;
    std::size_t events = 0;
    std::vector<std::string> warnings;

    std::size_t size() const { return lambdas.size(); }

    std::vector<std::size_t> active_set(std::size_t i) const {
        std::vector<std::size_t> a;
        for (Eigen::Index j = 0; j < betas[i].size(); ++j)
            if (betas[i][j] != 0.0) a.push_back(static_cast<std::size_t>(j));
        return a;
    }
};

/// Population standard deviation of each column; exactly constant columns get 0.
inline Vector covariate_scale(const Matrix& z) {
    Vector s(z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double mean = z.col(j).mean();
        const double var = (z.col(j).array() - mean).square().mean();
        s[j] = var > 0.0 ? std::sqrt(var) : 0.0;
    }
    return s;
}

namespace detail {

/// Columns divided by their scale (no centering, so linear predictors are unchanged).
inline CoxProblem scaled_problem(const CoxProblem& P, const Vector& scale) {
    CoxProblem Q = P;
    for (Eigen::Index j = 0; j < Q.z.cols(); ++j) {
        if (scale[j] > 0.0)
            Q.z.col(j) /= scale[j];
        else
            Q.z.col(j).setZero();
    }
    return Q;
}

/// Columns centered and scaled to unit standard deviation; the partial likelihood is unchanged
/// because it is invariant to adding a constant to every linear predictor.
inline CoxProblem standardized_problem(const CoxProblem& P, const Vector& scale) {
    CoxProblem Q = P;
    for (Eigen::Index j = 0; j < Q.z.cols(); ++j) {
        if (scale[j] > 0.0)
            Q.z.col(j) = (Q.z.col(j).array() - Q.z.col(j).mean()) / scale[j];
        else
            Q.z.col(j).setZero();
    }
    return Q;
}

inline double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

}  // namespace detail

/// Smallest lambda at which every standardized coefficient is zero.
inline double lambda_max(const CoxProblem& P) {
    Vector s = covariate_scale(P.z);
    CoxProblem Q = detail::scaled_problem(P, s);
    RiskState S = risk_state(Q, Q.offset);
    Vector U = Q.z.transpose() * eta_gradient(Q, S);
    return U.cwiseAbs().maxCoeff() / static_cast<double>(P.n());
}

/// Log-spaced grid from lambda_max down to lambda_min_ratio * lambda_max.
inline std::vector<double> lambda_grid(const CoxProblem& P, std::size_t n_lambda = 100,
                                       double lambda_min_ratio = 0.01) {
    if (n_lambda < 1) throw Error("lambda grid needs at least one point");
    if (!(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0)) throw Error("lambda_min_ratio must lie in (0, 1)");
    if (P.event_count() == 0) throw Error("no events of the modeled cause");
    if (!(covariate_scale(P.z).array() > 0.0).any()) throw Error("no informative covariates");
    const double top = lambda_max(P);
    std::vector<double> grid(n_lambda);
    for (std::size_t i = 0; i < n_lambda; ++i) {
        double f = n_lambda == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n_lambda - 1);
        grid[i] = top * std::exp(f * std::log(lambda_min_ratio));
    }
    return grid;
}

/// LASSO path minimizing -loglik/n + lambda * sum |b_j| over standardized coefficients b.
///
/// Covariates are centered and scaled internally (the partial likelihood is unchanged by
/// centering). Each outer iteration forms the quadratic approximation of the log partial
/// likelihood over the candidate columns at the current fit and solves the penalized
/// quadratic problem by cyclic coordinate descent; the outer step is halved
/// until the penalized objective does not increase. Candidates come from the sequential
/// strong rule, and every solution is checked against the KKT conditions over all columns.
inline RegularizationPath fit_path(const CoxProblem& P, const std::vector<double>& lambdas,
                                   const LassoOptions& opt = {}) {
    for (std::size_t i = 1; i < lambdas.size(); ++i)
        if (!(lambdas[i] < lambdas[i - 1])) throw Error("lambda grid must be strictly decreasing");
    const std::size_t n = P.n(), p = P.p();
    const double nn = static_cast<double>(n);
    RegularizationPath path;
    path.scale = covariate_scale(P.z);
    path.n = n;
    path.events = P.event_count();
    if (path.events == 0) throw Error("no events of the modeled cause");
    if (!(path.scale.array() > 0.0).any()) throw Error("no informative covariates");
    CoxProblem Q = detail::standardized_problem(P, path.scale);

    Vector b = Vector::Zero(static_cast<Eigen::Index>(p));
    RiskState S = risk_state(Q, Q.offset);
    Vector g = eta_gradient(Q, S);
    Vector U = Q.z.transpose() * g;
    std::vector<char> ever(p, 0), in_set(p, 0);
    const double df_cap = std::min(nn / 2.0, static_cast<double>(path.events));

    for (std::size_t li = 0; li < lambdas.size(); ++li) {
        const double lam = lambdas[li];
        const double lam_prev = li == 0 ? lam : lambdas[li - 1];
        auto penalized = [&](const RiskState& st, const Vector& coef) {
            return -st.loglik / nn + lam * coef.cwiseAbs().sum();
        };
        std::vector<std::size_t> cand;
        std::fill(in_set.begin(), in_set.end(), 0);
        for (std::size_t j = 0; j < p; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            if (path.scale[jj] > 0.0 && (ever[j] || std::abs(U[jj]) / nn >= 2.0 * lam - lam_prev)) {
                cand.push_back(j);
                in_set[j] = 1;
            }
        }

        // Largest violation of the optimality conditions among the candidates.
        auto candidate_violation = [&] {
            double worst = 0.0;
            for (auto j : cand) {
                const auto jj = static_cast<Eigen::Index>(j);
                const double grad = Q.z.col(jj).dot(g) / nn;
                worst = std::max(worst, b[jj] == 0.0 ? std::abs(grad) - lam
                                                     : std::abs(grad - lam * (b[jj] > 0.0 ? 1.0 : -1.0)));
            }
            return worst;
        };

        bool converged = false;
        int outer = 0;
        while (outer < opt.max_sweeps) {
            if (candidate_violation() < opt.kkt_tol) {
                U = Q.z.transpose() * g;
                bool added = false;
                for (std::size_t j = 0; j < p; ++j) {
                    const auto jj = static_cast<Eigen::Index>(j);
                    if (!in_set[j] && path.scale[jj] > 0.0 && std::abs(U[jj]) / nn > lam) {
                        cand.push_back(j);
                        in_set[j] = 1;
                        added = true;
                    }
                }
                if (!added) {
                    converged = true;
                    break;
                }
            }
            // Local quadratic model over the candidates: l(b + d) ~ l(b) + U'd - (1/2) d'I d.
            const auto c = static_cast<Eigen::Index>(cand.size());
            Matrix Xc(static_cast<Eigen::Index>(n), c);
            for (Eigen::Index k = 0; k < c; ++k)
                Xc.col(k) = Q.z.col(static_cast<Eigen::Index>(cand[static_cast<std::size_t>(k)]));
            Vector r = Xc.transpose() * g;     // U - I d, kept current through the sweep
            Matrix M = risk_set_means(Q, S, Xc);
            Vector d(static_cast<Eigen::Index>(Q.event_times.size()));
            for (std::size_t k = 0; k < Q.event_times.size(); ++k)
                d[static_cast<Eigen::Index>(k)] = Q.event_times[k].count;
            Matrix I = Xc.transpose() * S.omega.asDiagonal() * Xc - M.transpose() * d.asDiagonal() * M;
            Vector bn = b;
            for (int inner = 0; inner < opt.max_sweeps; ++inner) {
                double max_change = 0.0;
                for (Eigen::Index k = 0; k < c; ++k) {
                    const auto jj = static_cast<Eigen::Index>(cand[static_cast<std::size_t>(k)]);
                    const double curv = I(k, k) / nn;
                    if (!(curv > 0.0)) continue;
                    const double next = detail::soft_threshold(r[k] / nn + curv * bn[jj], lam) / curv;
                    const double delta = next - bn[jj];
                    if (delta == 0.0) continue;
                    bn[jj] = next;
                    r.noalias() -= delta * I.col(k);
                    max_change = std::max(max_change, std::abs(delta));
                }
                if (max_change < opt.tol) break;
            }
            // Backtrack the outer step until the penalized objective does not increase.
            Vector step = bn - b;
            const double f_old = penalized(S, b);
            bool moved = false;
            for (int h = 0; h < 40 && step.cwiseAbs().maxCoeff() > 0.0; ++h) {
                Vector trial = b + step;
                RiskState T = risk_state(Q, Q.offset + Q.z * trial);
                const double f_new = penalized(T, trial);
                if (std::isfinite(f_new) && f_new <= f_old + 1e-13 * std::abs(f_old)) {
                    b = std::move(trial);
                    S = std::move(T);
                    g = eta_gradient(Q, S);
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            ++outer;
            if (opt.on_sweep) opt.on_sweep(li, penalized(S, b));
            if (!moved) break;
        }
        if (!converged) {
            path.warnings.push_back("coordinate descent did not converge at lambda index " + std::to_string(li) +
                                    "; path truncated");
            break;
        }

        std::size_t df = 0;
        for (Eigen::Index j = 0; j < b.size(); ++j) df += b[j] != 0.0;
        if (opt.early_exit && static_cast<double>(df) > df_cap) {
            path.warnings.push_back("active set exceeds min(n/2, events) at lambda index " + std::to_string(li) +
                                    "; path truncated");
            break;
        }
        Vector beta = Vector::Zero(static_cast<Eigen::Index>(p));
        for (Eigen::Index j = 0; j < b.size(); ++j) {
            if (b[j] != 0.0) {
                beta[j] = b[j] / path.scale[j];
                ever[static_cast<std::size_t>(j)] = 1;
            }
        }
        path.lambdas.push_back(lam);
        path.betas.push_back(std::move(beta));
        path.logliks.push_back(S.loglik);
        path.df.push_back(df);
    }
    return path;
}

inline RegularizationPath fit_path(const CoxProblem& P, const LassoOptions& opt = {}) {
    return fit_path(P, lambda_grid(P, opt.n_lambda, opt.lambda_min_ratio), opt);
}

/// Largest violation of the LASSO optimality conditions, measured in the standardized scale.
inline double kkt_violation(const CoxProblem& P, const Vector& beta, double lambda, const Vector& scale) {
    RiskState S = risk_state(P, P.linear_predictor(beta));
    Vector U = P.z.transpose() * eta_gradient(P, S);
    const double nn = static_cast<double>(P.n());
    double worst = 0.0;
    for (Eigen::Index j = 0; j < U.size(); ++j) {
        if (!(scale[j] > 0.0)) continue;
        const double grad = U[j] / scale[j] / nn;
        double v = beta[j] == 0.0 ? std::max(0.0, std::abs(grad) - lambda)
                                  : std::abs(grad - lambda * (beta[j] > 0 ? 1.0 : -1.0));
        worst = std::max(worst, v);
    }
    return worst;
}

/// Unpenalized fit restricted to `active`; the returned beta has full length.
inline CoxFit refit_active(const CoxProblem& P, const std::vector<std::size_t>& active,
                           const NewtonOptions& opt = {}) {
    CoxFit out;
    out.beta = Vector::Zero(static_cast<Eigen::Index>(P.p()));
    if (active.empty()) {
        out.loglik = log_partial_likelihood(P, out.beta);
        out.converged = true;
        return out;
    }
    CoxProblem sub = with_columns(P, active);
    CoxFit fit = newton_fit(sub, Vector::Zero(static_cast<Eigen::Index>(active.size())), opt);
    for (std::size_t k = 0; k < active.size(); ++k)
        out.beta[static_cast<Eigen::Index>(active[k])] = fit.beta[static_cast<Eigen::Index>(k)];
    out.loglik = fit.loglik;
    out.gradient_norm = fit.gradient_norm;
    out.iterations = fit.iterations;
    out.converged = fit.converged;
    out.monotone = fit.monotone;
    return out;
}

/// Cross-validated partial likelihood along a fixed lambda grid for a cause-specific LASSO.
/// Folds whose path stops early reuse their last solution for the remaining grid points.
inline CriterionSeries cv_lasso(const CompetingRisksDataset& data, int cause, const std::vector<double>& lambdas,
                                int K = 10, std::uint64_t seed = 1, unsigned threads = 1, LassoOptions opt = {}) {
    opt.on_sweep = nullptr;
    CoxProblem full = cause_specific_problem(data, cause);
    auto series = cross_validate(data.status(), cause, lambdas.size(), K, seed, threads,
                                 [&](const std::vector<std::size_t>& train) {
                                     CoxProblem tr = cause_specific_problem(data.subset(train), cause);
                                     RegularizationPath fp = fit_path(tr, lambdas, opt);
                                     std::vector<double> out(lambdas.size());
                                     Vector beta = Vector::Zero(static_cast<Eigen::Index>(full.p()));
                                     for (std::size_t g = 0; g < lambdas.size(); ++g) {
                                         if (g < fp.size()) beta = fp.betas[g];
                                         out[g] = log_partial_likelihood(full, beta) - log_partial_likelihood(tr, beta);
                                     }
                                     return out;
                                 });
    series.index = lambdas;
    return series;
}

/// `lambda,df,loglik,aic,bic,cv_error,cv_se`; CV columns are empty when no CV series is given.
inline void write_path(const RegularizationPath& path, std::ostream& os, const CriterionSeries* cv = nullptr) {
    InformationCriteria ic = information_criteria(path.logliks, path.df, path.events);
    csv::Writer w(os);
    w.row({"lambda", "df", "loglik", "aic", "bic", "cv_error", "cv_se"});
    for (std::size_t i = 0; i < path.size(); ++i) {
        const bool has_cv = cv && i < cv->size();
        w.row({csv::num(path.lambdas[i]), csv::num(path.df[i]), csv::num(path.logliks[i]), csv::num(ic.aic[i]),
               csv::num(ic.bic[i]), has_cv ? csv::num(cv->values[i]) : "", has_cv ? csv::num(cv->se[i]) : ""});
    }
}

/// Long-format nonzero coefficients `lambda,covariate,beta`.
inline void write_path_coefficients(const RegularizationPath& path, const std::vector<std::string>& names,
                                    std::ostream& os) {
    csv::Writer w(os);
    w.row({"lambda", "covariate", "beta"});
    for (std::size_t i = 0; i < path.size(); ++i)
        for (Eigen::Index j = 0; j < path.betas[i].size(); ++j)
            if (path.betas[i][j] != 0.0)
                w.row({csv::num(path.lambdas[i]), names[static_cast<std::size_t>(j)], csv::num(path.betas[i][j])});
}

}  // namespace crisk
