#pragma once

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ksnudge/spectral.hpp"

namespace ksnudge {

/// Model and stepping parameters for u_t + u u_x + lambda u_xx + u_xxxx = 0.
struct KseParams {
    double lambda = 2.0;
    double dt = 0.0001220703125;  // 2^-13
};

/// Thrown when a trajectory leaves the representable range (NaN/Inf
/// coefficients). The harness annotates time and trajectory before reporting.
class BlowupError : public std::runtime_error {
public:
    explicit BlowupError(const std::string& what) : std::runtime_error(what) {}

    double time = -1.0;
    std::string trajectory;
};

/// Per-mode symbol of the linear operator: lambda k^2 - k^4.
inline std::vector<double> linear_symbol(const SpectralGrid& g, double lambda) {
    if (!(lambda > 0.0)) {
        throw std::invalid_argument("lambda must be positive");
    }
    std::vector<double> sym(g.half_size());
    for (int m = 0; m < g.half_size(); ++m) {
        const double k2 = g.wavenumber(m) * g.wavenumber(m);
        sym[m] = lambda * k2 - k2 * k2;
    }
    return sym;
}

/// phi_1(z) = (e^z - 1)/z, with a Taylor branch near zero so the removable
/// singularity never hits catastrophic cancellation. phi_1(0) = 1 exactly.
inline double phi1(double z) {
    if (std::abs(z) < 1e-5) {
        return 1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0)));
    }
    return std::expm1(z) / z;
}

/// Frozen per-mode step factors: propagator e^{L dt} and explicit-term weight
/// dt * phi_1(L dt). Mode 0 gets exactly (1, dt).
struct EtdCoefficients {
    std::vector<double> propagator;
    std::vector<double> phi_weight;
    double dt = 0.0;
};

inline EtdCoefficients precompute_etd(const SpectralGrid& g, const KseParams& p) {
    if (!(p.dt > 0.0)) {
        throw std::invalid_argument("dt must be positive");
    }
    const std::vector<double> sym = linear_symbol(g, p.lambda);
    EtdCoefficients c;
    c.dt = p.dt;
    c.propagator.resize(sym.size());
    c.phi_weight.resize(sym.size());
    for (size_t m = 0; m < sym.size(); ++m) {
        const double z = sym[m] * p.dt;
        c.propagator[m] = std::exp(z);
        c.phi_weight[m] = p.dt * phi1(z);
    }
    return c;
}

/// Spectral coefficients of -u u_x, dealiased and mean-free.
inline SpectralField nonlinear_term(const SpectralField& s, const SpectralGrid& g) {
    if (s.size() != g.half_size()) {
        throw std::invalid_argument("spectral field size does not match grid");
    }
    const int n = g.n_points;
    const int half = g.half_size();
    thread_local std::vector<double> u_phys;
    thread_local std::vector<double> ux_phys;
    thread_local std::vector<std::complex<double>> scratch;
    u_phys.resize(n);
    ux_phys.resize(n);
    scratch.resize(half);

    detail::inverse_transform(s.coeff.data(), u_phys.data(), n);
    for (int m = 0; m < half; ++m) {
        const double k = g.wavenumber(m);
        scratch[m] = {-k * s.coeff[m].imag(), k * s.coeff[m].real()};
    }
    detail::inverse_transform(scratch.data(), ux_phys.data(), n);
    for (int j = 0; j < n; ++j) {
        u_phys[j] *= ux_phys[j];
    }

    SpectralField out = make_spectral(g);
    detail::forward_transform(u_phys.data(), out.coeff.data(), n);
    const int cutoff = g.dealias_cutoff();
    for (int m = 0; m < half; ++m) {
        out.coeff[m] = (m >= 1 && m <= cutoff) ? -out.coeff[m] : std::complex<double>{0.0, 0.0};
    }
    return out;
}

/// One exponential-Euler update: out_m = E_m s_m + W_m rhs_m. The explicit
/// part (nonlinearity plus any forcing) is supplied already summed; pass
/// nullptr to propagate the linear flow alone. Throws BlowupError on
/// non-finite output.
inline SpectralField etd1_apply(const SpectralField& state, const EtdCoefficients& c,
                                const SpectralField* explicit_rhs) {
    const int half = state.size();
    if (static_cast<int>(c.propagator.size()) != half) {
        throw std::invalid_argument("ETD coefficients do not match field size");
    }
    if (explicit_rhs != nullptr && explicit_rhs->size() != half) {
        throw std::invalid_argument("explicit term size does not match state");
    }
    SpectralField out = make_spectral_like(state);
    double probe = 0.0;
    if (explicit_rhs != nullptr) {
        for (int m = 0; m < half; ++m) {
            out.coeff[m] = c.propagator[m] * state.coeff[m] + c.phi_weight[m] * explicit_rhs->coeff[m];
            probe += out.coeff[m].real() + out.coeff[m].imag();
        }
    } else {
        for (int m = 0; m < half; ++m) {
            out.coeff[m] = c.propagator[m] * state.coeff[m];
            probe += out.coeff[m].real() + out.coeff[m].imag();
        }
    }
    out.coeff[0] = {0.0, 0.0};
    if (!std::isfinite(probe)) {
        throw BlowupError("state left the representable range");
    }
    return out;
}

/// Full KSE step: nonlinear term plus optional forcing under the phi weight.
inline SpectralField etd1_step(const SpectralField& state, const EtdCoefficients& c,
                               const SpectralField* forcing, const SpectralGrid& g) {
    SpectralField rhs = nonlinear_term(state, g);
    if (forcing != nullptr) {
        if (forcing->size() != rhs.size()) {
            throw std::invalid_argument("forcing size does not match state");
        }
        for (int m = 0; m < rhs.size(); ++m) {
            rhs.coeff[m] += forcing->coeff[m];
        }
    }
    return etd1_apply(state, c, &rhs);
}

/// Reference initial state u0(x) = cos(x/16)(1 + sin(x/16)), projected
/// mean-free and dealiased. Tuned to the 32*pi domain; other lengths are
/// accepted with a warning since the profile no longer closes periodically.
inline SpectralField initial_condition(const SpectralGrid& g) {
    const double nominal = 32.0 * kPi;
    if (std::abs(g.length - nominal) > 1e-12 * nominal) {
        std::cerr << "warning: initial profile assumes domain length 32*pi, got "
                  << g.length << "\n";
    }
    PhysicalField f;
    f.samples.resize(g.n_points);
    for (int j = 0; j < g.n_points; ++j) {
        const double x = g.x(j);
        f.samples[j] = std::cos(x / 16.0) * (1.0 + std::sin(x / 16.0));
    }
    return dealias(project_mean_free(to_spectral(f, g)), g);
}

/// Scales produced by nondimensionalizing v_t + v v_x + a v_xx + b v_xxxx = 0
/// on a domain of size length.
struct ScalingResult {
    double lambda = 0.0;
    double time_scale = 0.0;
    double velocity_scale = 0.0;
    double intrinsic_length = 0.0;
};

inline ScalingResult nondimensionalize(double a, double b, double length) {
    if (!(a > 0.0) || !(b > 0.0) || !(length > 0.0)) {
        throw std::invalid_argument("nondimensionalize requires positive a, b, length");
    }
    ScalingResult r;
    r.lambda = a * length * length / b;
    r.time_scale = (length * length) * (length * length) / b;
    r.velocity_scale = b / (length * length * length);
    r.intrinsic_length = std::sqrt(b / a);
    return r;
}

}  // namespace ksnudge
