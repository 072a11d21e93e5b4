#pragma once

#include "crisk/dataset.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace crisk {

/// One distinct time at which modeled events occur.
struct EventTime {
    double time = 0.0;
    std::size_t begin = 0;     // first subject (in time order) with X >= time
    double count = 0.0;        // number of modeled events at `time`
    double weight_sum = 0.0;   // case weights of those events (Breslow numerator)
    double tail_scale = 1.0;   // multiplier g(time) applied to tail subjects
};

/// Weighted Cox partial-likelihood problem over time-ordered subjects.
///
/// The risk-set weight of subject l at event time t is
///   c_l                      if X_l >= t,
///   c_l * a_l * g(t)         if X_l <  t,
/// where c is `case_weight`, a is `tail_weight` (zero for subjects that leave
/// the risk set at X_l) and g is the per-event-time `tail_scale`. Weights are
/// evaluated lazily, so memory stays O(n + k). With a = 0 this is the ordinary
/// Cox risk set; Fine-Gray weighting uses a_l = 1/G(X_l-) and g(t) = G(t-) for
/// competing-event subjects.
struct CoxProblem {
    std::vector<double> time;
    std::vector<std::uint8_t> event;
    Matrix z;
    Vector case_weight;
    Vector tail_weight;
    Vector offset;
    std::vector<EventTime> event_times;
    bool has_tail = false;

    std::size_t n() const { return time.size(); }
    std::size_t p() const { return static_cast<std::size_t>(z.cols()); }
    std::size_t event_count() const {
        std::size_t k = 0;
        for (auto e : event) k += e;
        return k;
    }

    /// Linear predictor offset + Z beta.
    Vector linear_predictor(const Vector& beta) const {
        if (static_cast<std::size_t>(beta.size()) != p()) throw Error("beta length differs from covariate count");
        return offset + z * beta;
    }
};

/// Builds a problem from time-sorted subjects. `tail_scale` maps an event time to g(t).
inline CoxProblem make_cox_problem(std::vector<double> time, std::vector<std::uint8_t> event, Matrix z,
                                   Vector case_weight = {}, Vector tail_weight = {},
                                   const std::function<double(double)>& tail_scale = {}, Vector offset = {}) {
    const std::size_t n = time.size();
    if (event.size() != n || static_cast<std::size_t>(z.rows()) != n) throw Error("problem arrays differ in length");
    for (std::size_t i = 1; i < n; ++i)
        if (time[i] < time[i - 1]) throw Error("subjects must be sorted by time");
    CoxProblem P;
    const auto nn = static_cast<Eigen::Index>(n);
    P.case_weight = case_weight.size() ? std::move(case_weight) : Vector::Ones(nn);
    P.tail_weight = tail_weight.size() ? std::move(tail_weight) : Vector::Zero(nn);
    P.offset = offset.size() ? std::move(offset) : Vector::Zero(nn);
    if (P.case_weight.size() != nn || P.tail_weight.size() != nn || P.offset.size() != nn)
        throw Error("weight arrays differ in length");
    if ((P.case_weight.array() < 0).any() || (P.tail_weight.array() < 0).any()) throw Error("negative weight");
    P.has_tail = (P.tail_weight.array() > 0).any();

    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        EventTime et;
        et.time = time[i];
        et.begin = i;
        while (j < n && time[j] == time[i]) {
            if (event[j]) {
                et.count += 1.0;
                et.weight_sum += P.case_weight[static_cast<Eigen::Index>(j)];
            }
            ++j;
        }
        if (et.count > 0) {
            et.tail_scale = tail_scale ? tail_scale(et.time) : 1.0;
            P.event_times.push_back(et);
        }
        i = j;
    }
    P.time = std::move(time);
    P.event = std::move(event);
    P.z = std::move(z);
    return P;
}

/// Cause-specific problem: events of `cause` are failures, everything else censors.
inline CoxProblem cause_specific_problem(const CompetingRisksDataset& data, int cause) {
    if (cause < 1 || cause > data.cause_count()) throw Error("cause out of range");
    std::vector<std::uint8_t> ev(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) ev[i] = data.status()[i] == cause;
    return make_cox_problem(data.time(), std::move(ev), data.covariates());
}

/// Same problem restricted to a subset of covariate columns.
inline CoxProblem with_columns(const CoxProblem& P, const std::vector<std::size_t>& cols) {
    CoxProblem Q = P;
    Q.z.resize(P.z.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k)
        Q.z.col(static_cast<Eigen::Index>(k)) = P.z.col(static_cast<Eigen::Index>(cols[k]));
    return Q;
}

/// Risk-set quantities at a fixed linear predictor. All sums are scaled by exp(-shift).
struct RiskState {
    Vector eta;
    double shift = 0.0;
    Vector u;                   // c_l exp(eta_l - shift)
    std::vector<double> s0;     // per event time
    Vector omega;               // expected event weight per subject; gradient in eta is event - omega
    double loglik = 0.0;
};

namespace detail {

/// out[k] = sum_{l >= begin_k} x_l + g_k * sum_{l < begin_k} a_l x_l.
inline void risk_sums(const CoxProblem& P, const double* x, double* out) {
    const std::size_t K = P.event_times.size();
    double acc = 0.0;
    std::size_t idx = P.n();
    for (std::size_t k = K; k-- > 0;) {
        const std::size_t b = P.event_times[k].begin;
        while (idx > b) acc += x[--idx];
        out[k] = acc;
    }
    if (!P.has_tail) return;
    acc = 0.0;
    idx = 0;
    const double* a = P.tail_weight.data();
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t b = P.event_times[k].begin;
        while (idx < b) {
            acc += a[idx] * x[idx];
            ++idx;
        }
        out[k] += P.event_times[k].tail_scale * acc;
    }
}

}  // namespace detail

/// Evaluates s0, the log partial likelihood and the per-subject expected event weights.
inline RiskState risk_state(const CoxProblem& P, Vector eta) {
    RiskState S;
    const std::size_t n = P.n(), K = P.event_times.size();
    S.shift = n ? eta.maxCoeff() : 0.0;
    S.u = (P.case_weight.array() * (eta.array() - S.shift).exp()).matrix();
    S.s0.resize(K);
    detail::risk_sums(P, S.u.data(), S.s0.data());

    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (P.event[i]) ll += eta[static_cast<Eigen::Index>(i)];
    for (std::size_t k = 0; k < K; ++k) ll -= P.event_times[k].count * (std::log(S.s0[k]) + S.shift);
    S.loglik = ll;

    // omega_l = u_l * (sum_{k: t_k <= X_l} d_k/s0_k + a_l * sum_{k: t_k > X_l} d_k g_k/s0_k)
    S.omega.resize(static_cast<Eigen::Index>(n));
    double A = 0.0;
    std::size_t k = 0;
    for (std::size_t m = 0; m < n; ++m) {
        while (k < K && P.event_times[k].begin <= m) {
            A += P.event_times[k].count / S.s0[k];
            ++k;
        }
        S.omega[static_cast<Eigen::Index>(m)] = A;
    }
    if (P.has_tail) {
        double B = 0.0;
        std::size_t kk = K;
        for (std::size_t m = n; m-- > 0;) {
            while (kk > 0 && P.event_times[kk - 1].begin > m) {
                --kk;
                B += P.event_times[kk].count * P.event_times[kk].tail_scale / S.s0[kk];
            }
            S.omega[static_cast<Eigen::Index>(m)] += P.tail_weight[static_cast<Eigen::Index>(m)] * B;
        }
    }
    S.omega.array() *= S.u.array();
    S.eta = std::move(eta);
    return S;
}

inline double log_partial_likelihood(const CoxProblem& P, const Vector& beta) {
    return risk_state(P, P.linear_predictor(beta)).loglik;
}

/// Negative log of the weighted partial likelihood (Breslow ties).
inline double neg_log_partial_likelihood(const CoxProblem& P, const Vector& beta) {
    return -log_partial_likelihood(P, beta);
}

/// Gradient of the log partial likelihood with respect to the linear predictor.
inline Vector eta_gradient(const CoxProblem& P, const RiskState& S) {
    Vector g = -S.omega;
    for (std::size_t i = 0; i < P.n(); ++i)
        if (P.event[i]) g[static_cast<Eigen::Index>(i)] += 1.0;
    return g;
}

/// Risk-set means S1/S0 at every event time for the given columns (K x cols).
inline Matrix risk_set_means(const CoxProblem& P, const RiskState& S, const Matrix& x) {
    const std::size_t K = P.event_times.size();
    Matrix out(static_cast<Eigen::Index>(K), x.cols());
    Vector ux(x.rows());
    std::vector<double> buf(K);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        ux = S.u.cwiseProduct(x.col(j));
        detail::risk_sums(P, ux.data(), buf.data());
        for (std::size_t k = 0; k < K; ++k) out(static_cast<Eigen::Index>(k), j) = buf[k] / S.s0[k];
    }
    return out;
}

struct ScoreInformation {
    Vector gradient;
    Matrix information;
};

/// Analytic score and observed information (negative Hessian) of the log partial likelihood.
inline ScoreInformation score_information(const CoxProblem& P, const Vector& beta) {
    RiskState S = risk_state(P, P.linear_predictor(beta));
    ScoreInformation out;
    out.gradient = P.z.transpose() * eta_gradient(P, S);
    Matrix M = risk_set_means(P, S, P.z);
    Vector d(static_cast<Eigen::Index>(P.event_times.size()));
    for (std::size_t k = 0; k < P.event_times.size(); ++k) d[static_cast<Eigen::Index>(k)] = P.event_times[k].count;
    out.information = P.z.transpose() * S.omega.asDiagonal() * P.z - M.transpose() * d.asDiagonal() * M;
    out.information = 0.5 * (out.information + out.information.transpose()).eval();
    return out;
}

/// Score and curvature along a single coordinate at the given state.
struct CoordinateStats {
    double score = 0.0;
    double information = 0.0;
};

inline CoordinateStats coordinate_stats(const CoxProblem& P, const RiskState& S, const Vector& eta_grad,
                                        Eigen::Index j, std::vector<double>& buf) {
    const std::size_t K = P.event_times.size();
    buf.resize(K + P.n());
    double* sums = buf.data();
    double* ux = buf.data() + K;
    const double* zj = P.z.col(j).data();
    double second = 0.0, score = 0.0;
    for (std::size_t i = 0; i < P.n(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        ux[i] = S.u[ii] * zj[i];
        second += S.omega[ii] * zj[i] * zj[i];
        score += eta_grad[ii] * zj[i];
    }
    detail::risk_sums(P, ux, sums);
    double mean_sq = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        double m = sums[k] / S.s0[k];
        mean_sq += P.event_times[k].count * m * m;
    }
    return {score, std::max(0.0, second - mean_sq)};
}

struct CoxFit {
    Vector beta;
    double loglik = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    bool monotone = false;   // some |beta_j| exceeded the divergence threshold
};

struct NewtonOptions {
    double tol = 1e-9;
    int max_iter = 100;
    int max_halvings = 20;
    double divergence = 15.0;
};

/// Newton-Raphson with step halving. Accepted steps never decrease the log likelihood
/// (up to rounding); the fit is flagged `monotone` once a coefficient passes the divergence
/// threshold, in which case iteration stops.
inline CoxFit newton_fit(const CoxProblem& P, Vector init, const NewtonOptions& opt = {}) {
    if (static_cast<std::size_t>(init.size()) != P.p()) throw Error("init length differs from covariate count");
    CoxFit fit;
    fit.beta = std::move(init);
    ScoreInformation si = score_information(P, fit.beta);
    fit.loglik = log_partial_likelihood(P, fit.beta);
    for (;;) {
        fit.gradient_norm = si.gradient.size() ? si.gradient.cwiseAbs().maxCoeff() : 0.0;
        if (fit.gradient_norm < opt.tol) {
            fit.converged = true;
            break;
        }
        if (fit.iterations >= opt.max_iter) break;
        Vector step = si.information.completeOrthogonalDecomposition().solve(si.gradient);
        if (!step.allFinite()) break;
        bool accepted = false;
        for (int h = 0; h <= opt.max_halvings; ++h) {
            Vector trial = fit.beta + step;
            double ll = log_partial_likelihood(P, trial);
            if (std::isfinite(ll) && ll >= fit.loglik - 1e-12 * (1.0 + std::abs(fit.loglik))) {
                fit.beta = std::move(trial);
                fit.loglik = ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        ++fit.iterations;
        if (!accepted) break;
        if (fit.beta.size() && fit.beta.cwiseAbs().maxCoeff() > opt.divergence) {
            fit.monotone = true;
            si = score_information(P, fit.beta);
            fit.gradient_norm = si.gradient.cwiseAbs().maxCoeff();
            break;
        }
        si = score_information(P, fit.beta);
    }
    return fit;
}

/// Breslow estimate of the cumulative baseline hazard at the given coefficients.
inline StepFunction breslow_baseline(const CoxProblem& P, const Vector& beta) {
    RiskState S = risk_state(P, P.linear_predictor(beta));
    StepFunction H;
    double cum = 0.0;
    for (std::size_t k = 0; k < P.event_times.size(); ++k) {
        if (!(S.s0[k] > 0.0)) throw Error("empty risk set at an event time");
        cum += std::exp(std::log(P.event_times[k].weight_sum) - std::log(S.s0[k]) - S.shift);
        H.knots.push_back(P.event_times[k].time);
        H.values.push_back(cum);
    }
    return H;
}

}  // namespace crisk
