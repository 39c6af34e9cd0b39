#pragma once

#include <string>
#include <vector>

namespace heatctl {

enum class NonlinearityFamily {
    OddLog,      // f(s) = sigma * s * log^alpha(c + |s|)
    AbsLog,      // f(s) = sigma * |s| * log^alpha(c + |s|)
    IntegralLog, // f(s) = sigma * integral_0^|s| log^p(1 + u) du
    Poly,        // f(s) = sigma * sign(s) * |s|^k, closed-form test fixture
};

/// A member of the logarithmic nonlinearity family (plus the polynomial
/// test fixture). Immutable after construction.
struct NonlinearitySpec {
    NonlinearityFamily family = NonlinearityFamily::OddLog;
    int sigma = +1;          // +1 or -1
    double exponent = 1.8;   // alpha, p, or k
    double shift = 2.0;      // c in log(c + |s|); >= 1

    double f(double s) const;
    double g(double s) const; // f(s)/s, continuously extended at 0

    /// f(s) >= 0 for all s >= 0.
    bool sign_pos() const;
    /// f(s) <= 0 for all s <= 0.
    bool sign_neg() const;
    /// 1/f integrable on [1, inf): sigma = +1 and exponent > 1.
    bool integrable_tail() const;
    /// f is not C^1 at 0 (AbsLog with a nonvanishing one-sided slope);
    /// g(0) is then the right limit and reports flag this.
    bool kink_at_zero() const;

    /// Spec of the reflected dynamics w = -y (so that nonpositive steering
    /// of y is nonnegative steering of w).
    NonlinearitySpec reflected() const;

    /// Spec representing -f (the literal negation).
    NonlinearitySpec negated() const;

    std::string family_tag() const;
};

NonlinearitySpec make_nonlinearity(NonlinearityFamily family, int sigma,
                                   double exponent, double shift = 2.0);
NonlinearitySpec nonlinearity_from_tag(const std::string& tag, int sigma,
                                       double exponent, double shift = 2.0);

/// F(s) = integral_s^inf dsigma / f(sigma), the decay integral. Requires
/// sign_pos, integrable_tail and s > 0. Absolute error <= 1e-10.
double big_f(const NonlinearitySpec& spec, double s);

/// Inverse of F, by bracketing plus safeguarded Newton (relative
/// tolerance 1e-9).
double big_f_inverse(const NonlinearitySpec& spec, double u);

/// Elapsed time F(delta) after which the decay envelope is <= delta no
/// matter where it started.
double decay_time_for_target(const NonlinearitySpec& spec, double delta);

/// Escape time of v' = f(v), v(0) = v0 > 0, as the tail integral
/// integral_{v0}^inf dsigma/f(sigma). Returns +inf when the tail is not
/// integrable (no finite-time blow-up).
double blowup_time(const NonlinearitySpec& spec, double v0);

/// One exact step of v' = -f(v) over dt > 0, for v > 0 and f > 0 on (0, v].
/// Solves the quadrature relation integral_{v_next}^{v} dsigma/f = dt.
double decay_step(const NonlinearitySpec& spec, double v, double dt);

/// Tabulated decay integral with monotone (PCHIP) interpolation, plus the
/// envelope data for one certification run.
struct DecayCertificate {
    NonlinearitySpec spec;
    double v_T1 = 0.0;  // envelope start value, ||y(T1)||_inf + 1
    double T1 = 0.0;
    double T2 = 0.0;
    double delta = 0.0;
    double F_at_vT1 = 0.0;

    std::vector<double> table_log_s; // increasing
    std::vector<double> table_F;     // strictly decreasing
    std::vector<double> table_slope; // pchip slopes dF/dlog s
    double interp_error_bound = 0.0;

    /// F by table interpolation (exact recompute outside the table).
    double F_interp(double s) const;
    /// Envelope v(t) = F^{-1}(t - T1 + F(v_T1)), t >= T1; exact, warm-started.
    double envelope(double t) const;
};

DecayCertificate make_decay_certificate(const NonlinearitySpec& spec, double v_T1,
                                        double T1, double delta, int table_size = 800);

} // namespace heatctl
