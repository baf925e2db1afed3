#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <fftw3.h>

namespace ksnudge {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Uniform periodic grid on [-length/2, length/2) with n_points samples.
struct SpectralGrid {
    int n_points = 0;
    double length = 0.0;
    double dx = 0.0;

    /// Angular wavenumber of mode m: 2*pi*m/length.
    double wavenumber(int m) const { return kTwoPi * m / length; }

    /// Number of retained coefficients of the half-spectrum (n/2 + 1).
    int half_size() const { return n_points / 2 + 1; }

    /// Highest mode index kept by the 2/3 rule: modes m > floor(n/3) are zeroed.
    int dealias_cutoff() const { return n_points / 3; }

    /// Sample location of index j.
    double x(int j) const { return -0.5 * length + j * dx; }
};

/// Real field sampled on a SpectralGrid.
struct PhysicalField {
    std::vector<double> samples;
};

/// Fourier-series coefficients of a real field, modes 0..n/2.
/// Convention: a field cos(k_m x) has coefficient 1/2 at mode m.
struct SpectralField {
    std::vector<std::complex<double>> coeff;

    int size() const { return static_cast<int>(coeff.size()); }
};

inline SpectralGrid make_grid(int n_points, double length) {
    if (n_points < 8 || n_points % 2 != 0) {
        throw std::invalid_argument("grid size must be even and >= 8, got " +
                                    std::to_string(n_points));
    }
    if (!(length > 0.0)) {
        throw std::invalid_argument("domain length must be positive");
    }
    SpectralGrid g;
    g.n_points = n_points;
    g.length = length;
    g.dx = length / n_points;
    return g;
}

inline SpectralField make_spectral(const SpectralGrid& g) {
    SpectralField s;
    s.coeff.assign(g.half_size(), {0.0, 0.0});
    return s;
}

inline SpectralField make_spectral_like(const SpectralField& other) {
    SpectralField s;
    s.coeff.assign(other.coeff.size(), {0.0, 0.0});
    return s;
}

namespace detail {

// FFTW plan bookkeeping. Plans are created once per grid size (the planner is
// not thread-safe); execution uses the new-array interface on per-thread
// buffers, which is safe to call concurrently.
struct FftPlans {
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;
};

struct FftBuffers {
    double* real = nullptr;
    fftw_complex* cplx = nullptr;

    FftBuffers() = default;
    explicit FftBuffers(int n)
        : real(fftw_alloc_real(static_cast<size_t>(n))),
          cplx(fftw_alloc_complex(static_cast<size_t>(n / 2 + 1))) {
        if (real == nullptr || cplx == nullptr) {
            throw std::bad_alloc();
        }
    }
    FftBuffers(const FftBuffers&) = delete;
    FftBuffers& operator=(const FftBuffers&) = delete;
    ~FftBuffers() {
        fftw_free(real);
        fftw_free(cplx);
    }
};

inline FftBuffers& thread_buffers(int n) {
    thread_local std::unordered_map<int, FftBuffers> buffers;
    auto it = buffers.find(n);
    if (it == buffers.end()) {
        it = buffers.try_emplace(n, n).first;
    }
    return it->second;
}

// FFTW_ESTIMATE keeps the plan choice deterministic from run to run, which the
// bit-identical artifact requirement depends on.
inline FftPlans fft_plans(int n, FftBuffers& buf) {
    static std::mutex mutex;
    static std::unordered_map<int, FftPlans> plans;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = plans.find(n);
    if (it == plans.end()) {
        FftPlans p;
        p.r2c = fftw_plan_dft_r2c_1d(n, buf.real, buf.cplx, FFTW_ESTIMATE);
        p.c2r = fftw_plan_dft_c2r_1d(n, buf.cplx, buf.real, FFTW_ESTIMATE);
        if (p.r2c == nullptr || p.c2r == nullptr) {
            throw std::runtime_error("FFTW plan creation failed for n=" + std::to_string(n));
        }
        it = plans.emplace(n, p).first;
    }
    return it->second;
}

// Samples live on [-L/2, L/2) while the DFT indexes from the first sample, so
// true-phase coefficients pick up a factor (-1)^m relative to the raw DFT.
inline void forward_transform(const double* samples, std::complex<double>* coeff, int n) {
    FftBuffers& buf = thread_buffers(n);
    FftPlans plans = fft_plans(n, buf);
    for (int j = 0; j < n; ++j) {
        buf.real[j] = samples[j];
    }
    fftw_execute_dft_r2c(plans.r2c, buf.real, buf.cplx);
    const double inv_n = 1.0 / n;
    const int half = n / 2 + 1;
    for (int m = 0; m < half; ++m) {
        const double s = (m % 2 == 0) ? inv_n : -inv_n;
        coeff[m] = {buf.cplx[m][0] * s, buf.cplx[m][1] * s};
    }
    coeff[0] = {coeff[0].real(), 0.0};
    coeff[half - 1] = {coeff[half - 1].real(), 0.0};
}

inline void inverse_transform(const std::complex<double>* coeff, double* samples, int n) {
    FftBuffers& buf = thread_buffers(n);
    FftPlans plans = fft_plans(n, buf);
    const int half = n / 2 + 1;
    for (int m = 0; m < half; ++m) {
        const double s = (m % 2 == 0) ? 1.0 : -1.0;
        buf.cplx[m][0] = coeff[m].real() * s;
        buf.cplx[m][1] = coeff[m].imag() * s;
    }
    fftw_execute_dft_c2r(plans.c2r, buf.cplx, buf.real);
    for (int j = 0; j < n; ++j) {
        samples[j] = buf.real[j];
    }
}

}  // namespace detail

/// Forward transform to Fourier-series coefficients (1/N normalization).
inline SpectralField to_spectral(const PhysicalField& f, const SpectralGrid& g) {
    if (static_cast<int>(f.samples.size()) != g.n_points) {
        throw std::invalid_argument("physical field has " + std::to_string(f.samples.size()) +
                                    " samples, grid expects " + std::to_string(g.n_points));
    }
    SpectralField s = make_spectral(g);
    detail::forward_transform(f.samples.data(), s.coeff.data(), g.n_points);
    return s;
}

/// Inverse transform back to grid samples.
inline PhysicalField to_physical(const SpectralField& s, const SpectralGrid& g) {
    if (s.size() != g.half_size()) {
        throw std::invalid_argument("spectral field has " + std::to_string(s.size()) +
                                    " coefficients, grid expects " +
                                    std::to_string(g.half_size()));
    }
    PhysicalField f;
    f.samples.resize(g.n_points);
    detail::inverse_transform(s.coeff.data(), f.samples.data(), g.n_points);
    return f;
}

/// Differentiate in spectral space: coefficient m is multiplied by (i k_m)^order.
/// Order 4 is applied as two order-2 passes so that it composes exactly.
inline SpectralField spectral_derivative(const SpectralField& s, const SpectralGrid& g,
                                         int order) {
    if (s.size() != g.half_size()) {
        throw std::invalid_argument("spectral field size does not match grid");
    }
    if (order != 1 && order != 2 && order != 4) {
        throw std::invalid_argument("derivative order must be 1, 2, or 4");
    }
    SpectralField out = s;
    const int half = g.half_size();
    if (order == 1) {
        for (int m = 0; m < half; ++m) {
            const double k = g.wavenumber(m);
            const std::complex<double> c = out.coeff[m];
            out.coeff[m] = {-k * c.imag(), k * c.real()};
        }
        return out;
    }
    const int passes = order / 2;
    for (int p = 0; p < passes; ++p) {
        for (int m = 0; m < half; ++m) {
            const double k = g.wavenumber(m);
            out.coeff[m] *= -(k * k);
        }
    }
    return out;
}

/// 2/3-rule truncation: zero every mode with index m > floor(n/3).
inline SpectralField dealias(const SpectralField& s, const SpectralGrid& g) {
    if (s.size() != g.half_size()) {
        throw std::invalid_argument("spectral field size does not match grid");
    }
    SpectralField out = s;
    const int half = g.half_size();
    for (int m = g.dealias_cutoff() + 1; m < half; ++m) {
        out.coeff[m] = {0.0, 0.0};
    }
    return out;
}

/// L2 norm via Parseval: ||u||^2 = (1/L) \int |u|^2 dx expressed in coefficients.
/// Interior modes carry weight 2 (conjugate pair), DC and Nyquist weight 1.
inline double l2_norm(const SpectralField& s) {
    const int half = s.size();
    if (half == 0) {
        return 0.0;
    }
    double sum = std::norm(s.coeff[0]);
    for (int m = 1; m + 1 < half; ++m) {
        sum += 2.0 * std::norm(s.coeff[m]);
    }
    if (half > 1) {
        sum += std::norm(s.coeff[half - 1]);
    }
    return std::sqrt(sum);
}

/// H1 seminorm: L2 norm of the first derivative.
inline double h1_norm(const SpectralField& s, const SpectralGrid& g) {
    return l2_norm(spectral_derivative(s, g, 1));
}

/// Zero the mean mode.
inline SpectralField project_mean_free(SpectralField s) {
    if (!s.coeff.empty()) {
        s.coeff[0] = {0.0, 0.0};
    }
    return s;
}

inline SpectralField subtract(const SpectralField& a, const SpectralField& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("spectral field size mismatch");
    }
    SpectralField out = a;
    for (int m = 0; m < out.size(); ++m) {
        out.coeff[m] -= b.coeff[m];
    }
    return out;
}

}  // namespace ksnudge
