#include "heatctl/nonlinearity.hpp"
#include "heatctl/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>

namespace heatctl {

const std::pair<Eigen::VectorXd, Eigen::VectorXd>& gauss_legendre(int order) {
    static std::map<int, std::pair<Eigen::VectorXd, Eigen::VectorXd>> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(order);
    if (it != cache.end()) return it->second;

    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        const double b = k / std::sqrt(4.0 * k * k - 1.0);
        jacobi(k, k - 1) = b;
        jacobi(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    Eigen::VectorXd nodes = es.eigenvalues();
    Eigen::VectorXd weights(order);
    for (int i = 0; i < order; ++i) {
        const double v0 = es.eigenvectors()(0, i);
        weights(i) = 2.0 * v0 * v0;
    }
    return cache.emplace(order, std::make_pair(std::move(nodes), std::move(weights))).first->second;
}

namespace {

constexpr double kTailTol = 1e-12;

double integral_log_primitive(double x, double p) {
    // I_p(x) = integral_0^x log^p(1 + v) dv, x >= 0.
    if (x <= 0.0) return 0.0;
    return integrate_gl([&](double v) { return std::pow(std::log1p(v), p); }, 0.0, x, 64);
}

// I_p(e^u) * e^{-u} without forming e^u; valid for large u.
double integral_log_scaled_large(double u, double p) {
    const double W = u + std::log1p(std::exp(-u));
    const double rmax = std::min(W, 45.0);
    const double H = integrate_gl(
        [&](double r) { return std::pow(W - r, p) * std::exp(-r); }, 0.0, rmax, 48);
    return (1.0 + std::exp(-u)) * H;
}

} // namespace

double NonlinearitySpec::f(double s) const {
    const double a = std::abs(s);
    switch (family) {
        case NonlinearityFamily::OddLog:
            return sigma * s * std::pow(std::log(shift + a), exponent);
        case NonlinearityFamily::AbsLog:
            return sigma * a * std::pow(std::log(shift + a), exponent);
        case NonlinearityFamily::IntegralLog:
            return sigma * integral_log_primitive(a, exponent);
        case NonlinearityFamily::Poly: {
            const double mag = std::pow(a, exponent);
            return sigma * (s < 0.0 ? -mag : (s > 0.0 ? mag : 0.0));
        }
    }
    return 0.0;
}

double NonlinearitySpec::g(double s) const {
    if (s != 0.0) return f(s) / s;
    switch (family) {
        case NonlinearityFamily::OddLog:
            return std::pow(std::log(shift), exponent);
        case NonlinearityFamily::AbsLog:
            // right limit; f is not differentiable at 0
            return sigma * std::pow(std::log(shift), exponent);
        case NonlinearityFamily::IntegralLog:
            return 0.0;
        case NonlinearityFamily::Poly:
            return exponent == 1.0 ? static_cast<double>(sigma) : 0.0;
    }
    return 0.0;
}

bool NonlinearitySpec::sign_pos() const { return sigma == +1; }

bool NonlinearitySpec::sign_neg() const {
    switch (family) {
        case NonlinearityFamily::OddLog:
        case NonlinearityFamily::Poly:
            return sigma == +1; // odd families: dissipative on both sides
        case NonlinearityFamily::AbsLog:
        case NonlinearityFamily::IntegralLog:
            return sigma == -1; // even families: f <= 0 everywhere
    }
    return false;
}

bool NonlinearitySpec::integrable_tail() const {
    return sigma == +1 && exponent > 1.0;
}

bool NonlinearitySpec::kink_at_zero() const {
    return family == NonlinearityFamily::AbsLog;
}

NonlinearitySpec NonlinearitySpec::reflected() const {
    NonlinearitySpec r = *this;
    if (family == NonlinearityFamily::AbsLog || family == NonlinearityFamily::IntegralLog)
        r.sigma = -sigma; // even families flip sign; odd ones are invariant
    return r;
}

NonlinearitySpec NonlinearitySpec::negated() const {
    NonlinearitySpec r = *this;
    r.sigma = -sigma;
    return r;
}

std::string NonlinearitySpec::family_tag() const {
    switch (family) {
        case NonlinearityFamily::OddLog: return "odd_log";
        case NonlinearityFamily::AbsLog: return "abs_log";
        case NonlinearityFamily::IntegralLog: return "integral_log";
        case NonlinearityFamily::Poly: return "poly";
    }
    return "unknown";
}

NonlinearitySpec make_nonlinearity(NonlinearityFamily family, int sigma,
                                   double exponent, double shift) {
    if (sigma != +1 && sigma != -1)
        throw std::invalid_argument("make_nonlinearity: sigma must be +1 or -1");
    if (!(exponent > 0.0))
        throw std::invalid_argument("make_nonlinearity: exponent must be > 0");
    if (family != NonlinearityFamily::Poly && !(shift >= 1.0))
        throw std::invalid_argument("make_nonlinearity: shift must be >= 1");
    NonlinearitySpec spec;
    spec.family = family;
    spec.sigma = sigma;
    spec.exponent = exponent;
    spec.shift = shift;
    return spec;
}

NonlinearitySpec nonlinearity_from_tag(const std::string& tag, int sigma,
                                       double exponent, double shift) {
    if (tag == "odd_log") return make_nonlinearity(NonlinearityFamily::OddLog, sigma, exponent, shift);
    if (tag == "abs_log") return make_nonlinearity(NonlinearityFamily::AbsLog, sigma, exponent, shift);
    if (tag == "integral_log")
        return make_nonlinearity(NonlinearityFamily::IntegralLog, sigma, exponent, shift);
    if (tag == "poly") return make_nonlinearity(NonlinearityFamily::Poly, sigma, exponent, shift);
    throw std::invalid_argument("nonlinearity_from_tag: unknown family '" + tag + "'");
}

namespace {

// Tail integrand of F after the substitution sigma = e^u:
// G(u) = e^u / f(e^u), written so it stays finite for arbitrarily large u.
double tail_integrand(const NonlinearitySpec& spec, double u) {
    switch (spec.family) {
        case NonlinearityFamily::OddLog:
        case NonlinearityFamily::AbsLog: {
            const double logterm =
                u > 30.0 ? u + std::log1p(spec.shift * std::exp(-u))
                         : std::log(spec.shift + std::exp(u));
            return std::pow(logterm, -spec.exponent);
        }
        case NonlinearityFamily::IntegralLog: {
            if (u > 30.0) return 1.0 / integral_log_scaled_large(u, spec.exponent);
            const double x = std::exp(u);
            return x / integral_log_primitive(x, spec.exponent);
        }
        case NonlinearityFamily::Poly:
            return std::exp((1.0 - spec.exponent) * u);
    }
    return 0.0;
}

} // namespace

double big_f(const NonlinearitySpec& spec, double s) {
    if (!(s > 0.0))
        throw std::domain_error("big_f: s must be > 0");
    if (!spec.sign_pos())
        throw std::domain_error("big_f: requires f > 0 on (0, inf)");
    if (!spec.integrable_tail())
        throw std::domain_error("big_f: tail of 1/f is not integrable");

    const double beta = spec.exponent; // G(u) ~ u^{-beta} for the log families
    double u = std::log(s);
    double total = 0.0;
    double width = 0.5;

    if (spec.family == NonlinearityFamily::Poly) {
        // Exponential decay in u: integrate a fixed stretch, rest in closed form.
        const double rate = spec.exponent - 1.0;
        const double u_stop = u + 45.0 / rate;
        while (u < u_stop) {
            const double next = std::min(u + 4.0, u_stop);
            total += integrate_gl([&](double v) { return tail_integrand(spec, v); }, u, next, 32);
            u = next;
        }
        total += tail_integrand(spec, u) / rate;
        return total;
    }

    for (int panel = 0; panel < 4000; ++panel) {
        const double next = u + width;
        total += integrate_gl([&](double v) { return tail_integrand(spec, v); }, u, next, 32);
        u = next;
        width = std::min(width * 1.5, 0.35 * std::max(u, 1.0));
        if (u > 5.0) {
            // Power-law remainder: int_u^inf v^{-beta} dv scaled by G(u) u^beta.
            const double remainder = tail_integrand(spec, u) * u / (beta - 1.0);
            if (remainder * 10.0 * (beta + 2.0) / u <= kTailTol) {
                total += remainder;
                return total;
            }
        }
    }
    throw std::runtime_error("big_f: tail did not converge (exponent too close to 1?)");
}

double big_f_inverse(const NonlinearitySpec& spec, double u) {
    if (!(u > 0.0))
        throw std::domain_error("big_f_inverse: argument must be > 0");

    // Bracket: F is strictly decreasing from +inf (s -> 0) to 0 (s -> inf).
    double lo = 1.0, hi = 1.0;
    double f_lo = big_f(spec, lo);
    if (f_lo >= u) {
        hi = lo;
        double f_hi = f_lo;
        while (f_hi > u) {
            hi *= 4.0;
            f_hi = big_f(spec, hi);
            if (hi > 1e300) throw std::runtime_error("big_f_inverse: bracket overflow");
        }
        lo = hi / 4.0;
    } else {
        while (f_lo < u) {
            lo *= 0.25;
            f_lo = big_f(spec, lo);
            if (lo < 1e-300) throw std::runtime_error("big_f_inverse: bracket underflow");
        }
        hi = lo * 4.0;
    }

    // Safeguarded Newton on F(s) = u with F'(s) = -1/f(s).
    double x = std::sqrt(lo * hi);
    for (int it = 0; it < 200; ++it) {
        const double fx = big_f(spec, x);
        if (fx > u)
            lo = x;
        else
            hi = x;
        double step = (fx - u) * spec.f(x);
        double next = x + step;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-10 * std::abs(next)) return next;
        x = next;
        if (hi - lo <= 1e-10 * hi) break;
    }
    return x;
}

double decay_time_for_target(const NonlinearitySpec& spec, double delta) {
    if (!(delta > 0.0))
        throw std::domain_error("decay_time_for_target: delta must be > 0");
    return big_f(spec, delta);
}

double blowup_time(const NonlinearitySpec& spec, double v0) {
    if (!(v0 > 0.0))
        throw std::domain_error("blowup_time: v0 must be > 0");
    if (!spec.sign_pos())
        throw std::domain_error("blowup_time: requires f > 0 on [v0, inf)");
    if (!spec.integrable_tail())
        return std::numeric_limits<double>::infinity();
    return big_f(spec, v0);
}

double decay_step(const NonlinearitySpec& spec, double v, double dt) {
    if (!(v > 0.0) || !(dt > 0.0))
        throw std::domain_error("decay_step: need v > 0 and dt > 0");

    // Work in u = log sigma, where the integrand G(u) = e^u/f(e^u) is slowly
    // varying: elapsed(lx) = integral_{lx}^{log v} G(u) du, solved for
    // elapsed = dt by safeguarded Newton (d elapsed/d lx = -G(lx)).
    const double Lv = std::log(v);
    auto elapsed_from = [&](double lx) {
        double total = 0.0;
        double u = lx;
        while (u < Lv) {
            const double next = std::min(u + 2.0, Lv);
            total += integrate_gl([&](double w) { return tail_integrand(spec, w); }, u, next, 16);
            u = next;
        }
        return total;
    };

    double lo = Lv - std::max(0.5, 2.0 * dt * std::abs(spec.g(v)));
    for (int guard = 0; guard < 40 && elapsed_from(lo) < dt; ++guard) {
        lo -= 25.0;
        if (lo < -690.0) return std::exp(-690.0); // below double range: effectively zero
    }
    double hi = Lv;
    double x = std::max(lo, Lv - dt * std::abs(spec.g(v)));
    for (int it = 0; it < 100; ++it) {
        const double e = elapsed_from(x);
        if (e >= dt)
            lo = x;
        else
            hi = x;
        const double G = tail_integrand(spec, x);
        double next = G > 0.0 ? x + (e - dt) / G : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-13 * std::max(1.0, std::abs(next))) return std::exp(next);
        x = next;
    }
    return std::exp(x);
}

double DecayCertificate::F_interp(double s) const {
    const double ls = std::log(s);
    if (table_log_s.empty() || ls < table_log_s.front() || ls > table_log_s.back())
        return big_f(spec, s);
    const auto it = std::upper_bound(table_log_s.begin(), table_log_s.end(), ls);
    const int j = std::max<int>(1, static_cast<int>(it - table_log_s.begin())) - 1;
    const double hseg = table_log_s[j + 1] - table_log_s[j];
    const double t = (ls - table_log_s[j]) / hseg;
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
    const double h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t);
    const double h11 = t * t * (t - 1);
    return h00 * table_F[j] + h10 * hseg * table_slope[j] + h01 * table_F[j + 1] +
           h11 * hseg * table_slope[j + 1];
}

double DecayCertificate::envelope(double t) const {
    if (t < T1)
        throw std::domain_error("DecayCertificate::envelope: t must be >= T1");
    return big_f_inverse(spec, t - T1 + F_at_vT1);
}

DecayCertificate make_decay_certificate(const NonlinearitySpec& spec, double v_T1,
                                        double T1, double delta, int table_size) {
    if (!(v_T1 > 0.0) || !(delta > 0.0))
        throw std::invalid_argument("make_decay_certificate: need v_T1 > 0 and delta > 0");

    DecayCertificate cert;
    cert.spec = spec;
    cert.v_T1 = v_T1;
    cert.T1 = T1;
    cert.delta = delta;
    cert.F_at_vT1 = big_f(spec, v_T1);
    cert.T2 = T1 + decay_time_for_target(spec, delta);

    const double s_min = std::min(delta * 0.1, 1e-4);
    const double s_max = std::max(v_T1 * 10.0, 1e4);
    const int n = std::max(table_size, 16);
    cert.table_log_s.resize(n);
    cert.table_F.resize(n);
    const double l0 = std::log(s_min), l1 = std::log(s_max);
    for (int i = 0; i < n; ++i) {
        cert.table_log_s[i] = l0 + (l1 - l0) * i / (n - 1);
        cert.table_F[i] = big_f(spec, std::exp(cert.table_log_s[i]));
    }

    // PCHIP slopes (Fritsch-Carlson): keeps the interpolant monotone.
    std::vector<double> d(n - 1), hseg(n - 1);
    for (int i = 0; i < n - 1; ++i) {
        hseg[i] = cert.table_log_s[i + 1] - cert.table_log_s[i];
        d[i] = (cert.table_F[i + 1] - cert.table_F[i]) / hseg[i];
    }
    cert.table_slope.assign(n, 0.0);
    for (int i = 1; i < n - 1; ++i) {
        if (d[i - 1] * d[i] > 0.0) {
            const double w1 = 2.0 * hseg[i] + hseg[i - 1];
            const double w2 = hseg[i] + 2.0 * hseg[i - 1];
            cert.table_slope[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    cert.table_slope[0] = d[0];
    cert.table_slope[n - 1] = d[n - 2];

    // Midpoint probes against the exact integral give the stored bound.
    double bound = 0.0;
    for (int i = 0; i < n - 1; i += 8) {
        const double sm = std::exp(0.5 * (cert.table_log_s[i] + cert.table_log_s[i + 1]));
        bound = std::max(bound, std::abs(cert.F_interp(sm) - big_f(spec, sm)));
    }
    cert.interp_error_bound = bound;
    return cert;
}

} // namespace heatctl
