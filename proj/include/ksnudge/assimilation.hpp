#pragma once

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ksnudge/kse.hpp"
#include "ksnudge/spectral.hpp"

namespace ksnudge {

/// Low-mode projection: keeps Fourier modes 1..mode_cutoff, drops the rest.
struct Observer {
    int mode_cutoff = 0;
};

inline Observer make_observer(int mode_cutoff, const SpectralGrid& g) {
    if (mode_cutoff < 1) {
        throw std::invalid_argument("observer cutoff must be >= 1");
    }
    if (mode_cutoff > g.dealias_cutoff()) {
        throw std::invalid_argument("observer cutoff " + std::to_string(mode_cutoff) +
                                    " exceeds dealias band " +
                                    std::to_string(g.dealias_cutoff()));
    }
    return Observer{mode_cutoff};
}

/// Project onto the observed band: mode 0 and modes above the cutoff are zeroed.
inline SpectralField observe(const SpectralField& s, const Observer& o) {
    if (o.mode_cutoff >= s.size()) {
        throw std::invalid_argument("observer cutoff exceeds field size");
    }
    SpectralField out = make_spectral_like(s);
    for (int m = 1; m <= o.mode_cutoff; ++m) {
        out.coeff[m] = s.coeff[m];
    }
    return out;
}

enum class LawKind { linear, power, hybrid, concave_convex };

inline std::string law_kind_name(LawKind k) {
    switch (k) {
        case LawKind::linear: return "linear";
        case LawKind::power: return "power";
        case LawKind::hybrid: return "hybrid";
        case LawKind::concave_convex: return "cc";
    }
    throw std::logic_error("unknown law kind");
}

inline LawKind law_kind_from_name(const std::string& name) {
    if (name == "linear") return LawKind::linear;
    if (name == "power") return LawKind::power;
    if (name == "hybrid") return LawKind::hybrid;
    if (name == "cc") return LawKind::concave_convex;
    throw std::invalid_argument("unknown feedback law '" + name +
                                "' (expected linear, power, hybrid, or cc)");
}

/// Pointwise feedback nonlinearity with gain mu. gamma sharpens the response
/// to small errors; the linear kind ignores it.
struct FeedbackLaw {
    LawKind kind = LawKind::linear;
    double gamma = 0.0;
    double mu = 1.0;
};

inline FeedbackLaw make_feedback_law(LawKind kind, double gamma, double mu) {
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw std::invalid_argument("gamma must lie in [0, 1), got " + std::to_string(gamma));
    }
    if (!(mu > 0.0)) {
        throw std::invalid_argument("mu must be positive");
    }
    return FeedbackLaw{kind, gamma, mu};
}

/// Evaluate the law pointwise (gain excluded). All kinds are odd, vanish at 0,
/// and fix +-1; the power branches meet the identity exactly at |x| = 1.
inline double apply_law(const FeedbackLaw& law, double x) {
    switch (law.kind) {
        case LawKind::linear:
            return x;
        case LawKind::power:
            return std::copysign(std::pow(std::abs(x), 1.0 - law.gamma), x);
        case LawKind::hybrid: {
            const double a = std::abs(x);
            if (a >= 1.0) {
                return x;
            }
            return std::copysign(std::pow(a, 1.0 - law.gamma), x);
        }
        case LawKind::concave_convex: {
            const double a = std::abs(x);
            const double p = (a >= 1.0) ? 1.0 + law.gamma : 1.0 - law.gamma;
            return std::copysign(std::pow(a, p), x);
        }
    }
    throw std::logic_error("unknown law kind");
}

namespace detail {

/// Copy the observed band (modes 1..cutoff) of a state into a flat buffer.
inline void extract_observed(const SpectralField& s, int mode_cutoff,
                             std::complex<double>* out) {
    for (int m = 1; m <= mode_cutoff; ++m) {
        out[m - 1] = s.coeff[m];
    }
}

/// Feedback forcing given pre-extracted observations of the reference. The
/// observed-band error goes to physical space, through the law pointwise, and
/// back; the result is scaled by mu, dealiased, and projected mean-free.
/// feedback_term routes through here so both entry points share one
/// arithmetic path.
inline SpectralField feedback_from_observed(const std::complex<double>* observed_u,
                                            const SpectralField& v, const Observer& o,
                                            const FeedbackLaw& law, const SpectralGrid& g) {
    const int n = g.n_points;
    const int half = g.half_size();
    thread_local std::vector<std::complex<double>> diff;
    thread_local std::vector<double> phys;
    diff.assign(half, {0.0, 0.0});
    phys.resize(n);
    for (int m = 1; m <= o.mode_cutoff; ++m) {
        diff[m] = observed_u[m - 1] - v.coeff[m];
    }
    inverse_transform(diff.data(), phys.data(), n);
    for (int j = 0; j < n; ++j) {
        phys[j] = apply_law(law, phys[j]);
    }
    SpectralField out = make_spectral(g);
    forward_transform(phys.data(), out.coeff.data(), n);
    const int cutoff = g.dealias_cutoff();
    for (int m = 0; m < half; ++m) {
        out.coeff[m] = (m >= 1 && m <= cutoff) ? law.mu * out.coeff[m]
                                               : std::complex<double>{0.0, 0.0};
    }
    return out;
}

}  // namespace detail

/// Assimilation forcing mu * N(I_h(u) - I_h(v)) from full reference and
/// assimilated states.
inline SpectralField feedback_term(const SpectralField& u, const SpectralField& v,
                                   const Observer& o, const FeedbackLaw& law,
                                   const SpectralGrid& g) {
    if (u.size() != g.half_size() || v.size() != g.half_size()) {
        throw std::invalid_argument("state size does not match grid");
    }
    thread_local std::vector<std::complex<double>> observed;
    observed.resize(o.mode_cutoff);
    detail::extract_observed(u, o.mode_cutoff, observed.data());
    return detail::feedback_from_observed(observed.data(), v, o, law, g);
}

/// Advance the reference and the assimilated trajectory together by one step.
/// Observations are taken from the reference state before either advances.
inline std::pair<SpectralField, SpectralField> coupled_step(const SpectralField& u,
                                                            const SpectralField& v,
                                                            const EtdCoefficients& c,
                                                            const Observer& o,
                                                            const FeedbackLaw& law,
                                                            const SpectralGrid& g) {
    const SpectralField f = feedback_term(u, v, o, law, g);
    SpectralField v_next = [&] {
        try {
            return etd1_step(v, c, &f, g);
        } catch (BlowupError& e) {
            e.trajectory = "assimilated";
            throw;
        }
    }();
    SpectralField u_next = [&] {
        try {
            return etd1_step(u, c, nullptr, g);
        } catch (BlowupError& e) {
            e.trajectory = "reference";
            throw;
        }
    }();
    return {std::move(u_next), std::move(v_next)};
}

/// Explicit-feedback stability bound dt < 2/mu for the linear law.
struct StabilityCheck {
    bool ok = false;
    double bound = 0.0;
    std::string message;
};

inline StabilityCheck stability_check(double mu, double dt) {
    if (!(mu > 0.0) || !(dt > 0.0)) {
        throw std::invalid_argument("stability check requires positive mu and dt");
    }
    StabilityCheck r;
    r.bound = 2.0 / mu;
    r.ok = dt < r.bound;
    if (!r.ok) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "dt = %.17g violates the feedback stability bound 2/mu = %.17g",
                      dt, r.bound);
        r.message = buf;
    }
    return r;
}

}  // namespace ksnudge
