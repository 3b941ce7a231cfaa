#include "ppde/generators.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace ppde {

double HjbForm::evaluate(double y, double z, double gamma) const {
    double best = is_sup ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
    for (double b : discounts) {
        for (double a : drifts) {
            for (double v : vol_sqs) {
                const double val = running_reward - b * y + a * z + 0.5 * v * gamma;
                best = is_sup ? std::max(best, val) : std::min(best, val);
            }
        }
    }
    return best;
}

namespace {

// Eigenvalues of a symmetric matrix; trivial fast path in one dimension.
VecD sym_eigenvalues(const MatD& gamma) {
    if (gamma.rows() == 1) return scalar_vec(gamma(0, 0));
    Eigen::SelfAdjointEigenSolver<MatD> es(gamma, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

}  // namespace

double vol_band_sup(const MatD& gamma, double L) {
    // The band commutes with gamma's eigenbasis, so the sup decomposes over
    // eigenvalues with coefficient 2L on the nonnegative ones and 2/L on
    // the negative ones.
    const VecD ev = sym_eigenvalues(gamma);
    double s = 0.0;
    for (int i = 0; i < ev.size(); ++i) s += 0.5 * (ev[i] >= 0.0 ? 2.0 * L : 2.0 / L) * ev[i];
    return s;
}

double vol_band_inf(const MatD& gamma, double L) {
    const VecD ev = sym_eigenvalues(gamma);
    double s = 0.0;
    for (int i = 0; i < ev.size(); ++i) s += 0.5 * (ev[i] >= 0.0 ? 2.0 / L : 2.0 * L) * ev[i];
    return s;
}

double g_upper(double y, const VecD& z, const MatD& gamma, double L0, double C0) {
    return C0 + L0 * z.norm() + L0 * std::max(-y, 0.0) + vol_band_sup(gamma, L0);
}

double g_lower(double y, const VecD& z, const MatD& gamma, double L0, double C0) {
    return -C0 - L0 * z.norm() - L0 * std::max(y, 0.0) + vol_band_inf(gamma, L0);
}

namespace {

std::function<double(double)> zero_fn() {
    return [](double) { return 0.0; };
}

std::function<double(double)> linear_fn(double slope) {
    return [slope](double t) { return slope * t; };
}

// Inverse of lambda(t) = slope*t; infinite when slope is 0 (the bound
// lambda^{-1}(C0) then degenerates, which callers must tolerate).
std::function<double(double)> linear_inv(double slope) {
    return [slope](double t) {
        if (slope <= 0.0) return t == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        return t / slope;
    };
}

}  // namespace

GeneratorSpec make_g_upper(int dim, double L0, double C0) {
    if (!(L0 > 0.0) || C0 < 0.0) throw ConfigError("make_g_upper: need L0 > 0, C0 >= 0");
    GeneratorSpec g;
    g.dim = dim;
    g.lip_const = std::max(L0, 1.0 / L0);
    g.bound_const = C0;
    g.evaluate = [L0, C0](const PiecewisePath&, double y, const VecD& z, const MatD& gamma) {
        return g_upper(y, z, gamma, L0, C0);
    };
    g.lambda = zero_fn();  // only weakly decreasing in y
    g.lambda_inv = linear_inv(0.0);
    g.rho = zero_fn();
    if (dim == 1) {
        HjbForm f;
        f.is_sup = true;
        f.running_reward = C0;
        f.drifts = {-L0, 0.0, L0};
        f.vol_sqs = {2.0 / L0, 2.0 * L0};
        f.discounts = {0.0, L0};
        g.hjb = f;
    }
    return g;
}

GeneratorSpec make_g_lower(int dim, double L0, double C0) {
    if (!(L0 > 0.0) || C0 < 0.0) throw ConfigError("make_g_lower: need L0 > 0, C0 >= 0");
    GeneratorSpec g;
    g.dim = dim;
    g.lip_const = std::max(L0, 1.0 / L0);
    g.bound_const = C0;
    g.evaluate = [L0, C0](const PiecewisePath&, double y, const VecD& z, const MatD& gamma) {
        return g_lower(y, z, gamma, L0, C0);
    };
    g.lambda = zero_fn();
    g.lambda_inv = linear_inv(0.0);
    g.rho = zero_fn();
    if (dim == 1) {
        HjbForm f;
        f.is_sup = false;
        f.running_reward = -C0;
        f.drifts = {-L0, 0.0, L0};
        f.vol_sqs = {2.0 / L0, 2.0 * L0};
        f.discounts = {0.0, L0};
        g.hjb = f;
    }
    return g;
}

GeneratorSpec uvm_generator(double r, double drift_bound, double sigma_lo, double sigma_hi) {
    if (!(sigma_lo > 0.0)) throw ConfigError("uvm_generator: sigma_lo must be positive");
    if (!(sigma_lo <= sigma_hi)) throw ConfigError("uvm_generator: need sigma_lo <= sigma_hi");
    if (!(r > 0.0)) throw ConfigError("uvm_generator: discount rate must be positive");
    if (drift_bound < 0.0) throw ConfigError("uvm_generator: drift bound must be nonnegative");

    const double lo2 = sigma_lo * sigma_lo;
    const double hi2 = sigma_hi * sigma_hi;
    GeneratorSpec g;
    g.dim = 1;
    g.lip_const = std::max({2.0 / lo2, hi2 / 2.0, drift_bound, r});
    g.bound_const = 0.0;
    g.evaluate = [r, drift_bound, lo2, hi2](const PiecewisePath&, double y, const VecD& z, const MatD& gamma) {
        const double gam = gamma(0, 0);
        const double band = 0.5 * (gam >= 0.0 ? hi2 : lo2) * gam;
        return -r * y + drift_bound * z.norm() + band;
    };
    g.lambda = linear_fn(r);
    g.lambda_inv = linear_inv(r);
    g.rho = zero_fn();

    HjbForm f;
    f.is_sup = true;
    f.running_reward = 0.0;
    f.drifts = drift_bound > 0.0 ? std::vector<double>{-drift_bound, 0.0, drift_bound}
                                 : std::vector<double>{0.0};
    f.vol_sqs = lo2 == hi2 ? std::vector<double>{lo2} : std::vector<double>{lo2, hi2};
    f.discounts = {r};
    g.hjb = f;
    return g;
}

GeneratorSpec linear_generator(int dim, double decay, double drift, double vol_sq) {
    if (decay < 0.0 || !(vol_sq > 0.0)) throw ConfigError("linear_generator: need decay >= 0, vol_sq > 0");
    GeneratorSpec g;
    g.dim = dim;
    g.lip_const = std::max({decay, std::abs(drift), vol_sq / 2.0, 2.0 / vol_sq, 1.0});
    g.bound_const = 0.0;
    g.evaluate = [decay, drift, vol_sq](const PiecewisePath&, double y, const VecD& z, const MatD& gamma) {
        double zsum = 0.0;
        for (int k = 0; k < z.size(); ++k) zsum += z[k];
        return -decay * y + drift * zsum + 0.5 * vol_sq * gamma.trace();
    };
    g.lambda = linear_fn(decay);
    g.lambda_inv = linear_inv(decay);
    g.rho = zero_fn();
    if (dim == 1) {
        HjbForm f;
        f.is_sup = true;
        f.running_reward = 0.0;
        f.drifts = {drift};
        f.vol_sqs = {vol_sq};
        f.discounts = {decay};
        g.hjb = f;
    }
    return g;
}

namespace {

MatD random_symmetric(int dim, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> gauss(0.0, scale);
    MatD m(dim, dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = i; j < dim; ++j) {
            const double v = gauss(rng);
            m(i, j) = v;
            m(j, i) = v;
        }
    }
    return m;
}

MatD random_psd(int dim, std::mt19937_64& rng, double scale) {
    const MatD a = random_symmetric(dim, rng, scale);
    return a * a.transpose();
}

PiecewisePath random_flat_tail_path(int dim, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> nseg(0, 3);
    std::normal_distribution<double> gauss(0.0, 0.5);
    std::vector<std::pair<double, VecD>> pts;
    const int n = nseg(rng);
    for (int i = 1; i <= n; ++i) {
        VecD x(dim);
        for (int k = 0; k < dim; ++k) x[k] = gauss(rng);
        pts.emplace_back(static_cast<double>(i), x);
    }
    return lin_interp(dim, pts);
}

}  // namespace

AssumptionReport check_assumptions(const GeneratorSpec& G, int sample_count, std::uint64_t seed) {
    AssumptionReport report;
    report.samples = sample_count;
    report.seed = seed;
    auto rng = make_rng(seed, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int d = G.dim;
    const double L0 = G.lip_const;
    const double C0 = G.bound_const;
    const double tol = 1e-9;

    auto flag = [&](const std::string& check, const std::string& detail, double margin) {
        report.violations.push_back({check, detail, margin});
    };

    for (int it = 0; it < sample_count; ++it) {
        const PiecewisePath omega = random_flat_tail_path(d, rng);
        const double y = gauss(rng);
        VecD z(d);
        for (int k = 0; k < d; ++k) z[k] = gauss(rng);
        const MatD gamma = random_symmetric(d, rng, 1.0);

        // (i) bound at the origin of (y, z, gamma)
        const double g0 = G(omega, 0.0, VecD::Zero(d), MatD::Zero(d, d));
        if (std::abs(g0) > C0 + tol) {
            flag("bound", "|G(.,0,0,0)| exceeds C0", std::abs(g0) - C0);
        }

        // (ii) uniform ellipticity on an ordered pair gamma + psd >= gamma
        const MatD bump = random_psd(d, rng, 0.7);
        const double lhs = G(omega, y, z, gamma + bump) - G(omega, y, z, gamma);
        const double rhs = bump.trace() / L0;
        if (lhs < rhs - tol) {
            flag("ellipticity", "G(gamma+psd) - G(gamma) below tr(psd)/L0", rhs - lhs);
        }

        // (iii) Lipschitz in (y, z, gamma)
        const double dy = 0.5 * gauss(rng);
        VecD dz(d);
        for (int k = 0; k < d; ++k) dz[k] = 0.5 * gauss(rng);
        const MatD dgam = random_symmetric(d, rng, 0.5);
        const double diff = std::abs(G(omega, y + dy, z + dz, gamma + dgam) - G(omega, y, z, gamma));
        // Nuclear norm on the matrix slot: the band terms are 1-Lipschitz
        // against the sum of absolute eigenvalues, not the spectral norm.
        const double lip_bound = L0 * (std::abs(dy) + dz.norm() + sym_eigenvalues(dgam).cwiseAbs().sum());
        if (diff > lip_bound + tol) {
            flag("lipschitz", "|G(t1)-G(t2)| exceeds L0 * |t1-t2|", diff - lip_bound);
        }

        // (iv) uniformly decreasing in y via lambda
        const double step = unif(rng) + 1e-3;
        const double drop = G(omega, y, z, gamma) - G(omega, y + step, z, gamma);
        const double need = G.lambda ? G.lambda(step) : 0.0;
        if (drop < need - tol) {
            flag("monotonicity", "decrease in y below lambda", need - drop);
        }

        // (v) dominance by the canonical bounds
        const double gv = G(omega, y, z, gamma);
        const double hi = g_upper(y, z, gamma, L0, C0);
        const double lo = g_lower(y, z, gamma, L0, C0);
        if (gv > hi + tol) flag("dominance", "G exceeds g_upper", gv - hi);
        if (gv < lo - tol) flag("dominance", "G below g_lower", lo - gv);
    }
    return report;
}

}  // namespace ppde
