#include "donorsim/spam_calibration.hpp"

#include <cmath>
#include <numbers>

#include "donorsim/fitting.hpp"
#include "donorsim/parallel.hpp"

namespace donorsim {

namespace {
constexpr double pi = std::numbers::pi;
}

void SpamParams::validate() const { require(p_up >= 0 && p_up <= 0.5, "SpamParams: p_up must lie in [0, 0.5]"); }

cmat spam_initial_density(double p_up) {
    SpamParams{p_up}.validate();
    cmat one = cmat::Zero(2, 2);
    one(0, 0) = p_up;
    one(1, 1) = 1 - p_up;
    return tensor(tensor(one, one), tensor(one, one));
}

std::vector<double> neutral_rabi_forward(double p, const std::vector<double>& durations, double rabi,
                                         double detuning_when_up, const SystemParams& sys) {
    require(rabi > 0, "neutral_rabi_forward: rabi must be positive");
    require(p >= 0 && p <= 1, "neutral_rabi_forward: p_up out of range");
    const double a = detuning_when_up > 0 ? detuning_when_up : sys.a2;
    const double gen = std::hypot(rabi, a);
    std::vector<double> out;
    out.reserve(durations.size());
    for (double t : durations) {
        const double s1 = std::sin(pi * rabi * t), s2 = std::sin(pi * gen * t);
        const double s = (1 - p) * s1 * s1 + p * (rabi * rabi) / (gen * gen) * s2 * s2;
        // wrong-start nucleus reads ⇑ at t = 0 and is driven the other way
        out.push_back(p + (1 - 2 * p) * s);
    }
    return out;
}

RabiFit fit_p_up(const std::vector<double>& t, const std::vector<double>& y, const RabiFitOptions& opt,
                 const SystemParams& sys) {
    require(t.size() == y.size(), "fit_p_up: durations and trace differ in length");
    require(t.size() >= 8, "fit_p_up: needs at least 8 points");
    require(opt.rabi_guess > 0, "fit_p_up: rabi guess must be positive");
    require(opt.weights.empty() || opt.weights.size() == t.size(), "fit_p_up: weights length mismatch");
    const int n = int(t.size());
    auto weight = [&](int i) { return opt.weights.empty() ? 1.0 : opt.weights[std::size_t(i)]; };

    auto sse = [&](double p, double rabi) {
        const auto m = neutral_rabi_forward(p, t, rabi, opt.detuning_when_up, sys);
        double s = 0;
        for (int i = 0; i < n; ++i) s += std::pow(weight(i) * (m[std::size_t(i)] - y[std::size_t(i)]), 2);
        return s;
    };
    // coarse scan keeps LM out of the wrong basin
    double p0 = 0, best = INFINITY;
    for (int k = 0; k <= 100; ++k) {
        const double p = 0.005 * k;
        const double s = sse(p, opt.rabi_guess);
        if (s < best) best = s, p0 = p;
    }

    Eigen::VectorXd x0(opt.fit_rabi ? 2 : 1);
    x0(0) = p0;
    if (opt.fit_rabi) x0(1) = opt.rabi_guess;
    auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
        const double rabi = opt.fit_rabi ? std::abs(x(1)) : opt.rabi_guess;
        const double p = std::clamp(x(0), 0.0, 1.0);
        const auto m = neutral_rabi_forward(p, t, rabi > 0 ? rabi : 1e-12, opt.detuning_when_up, sys);
        for (int i = 0; i < n; ++i) r(i) = weight(i) * (m[std::size_t(i)] - y[std::size_t(i)]);
    };
    const LsqResult res = levenberg_marquardt(residual, x0, n);
    if (!res.converged) throw FitError("fit_p_up: Levenberg-Marquardt did not converge", res.residual_rms);
    RabiFit f;
    f.p_up = std::clamp(res.x(0), 0.0, 1.0);
    f.rabi = opt.fit_rabi ? std::abs(res.x(1)) : opt.rabi_guess;
    f.residual_rms = res.residual_rms;
    f.evaluations = res.iterations;
    return f;
}

SineFit sine_fit(const std::vector<double>& phi, const std::vector<double>& y, int k,
                 const std::vector<double>& weights) {
    require(phi.size() == y.size(), "sine_fit: length mismatch");
    require(phi.size() >= 12, "sine_fit: needs at least 12 points");
    require(k >= 1, "sine_fit: fixed_periods must be positive");
    require(weights.empty() || weights.size() == y.size(), "sine_fit: weights length mismatch");
    const Eigen::Index n = Eigen::Index(phi.size());
    Eigen::MatrixXd a(n, 3);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double w = weights.empty() ? 1.0 : weights[std::size_t(i)];
        a(i, 0) = w;
        a(i, 1) = w * std::cos(k * phi[std::size_t(i)]);
        a(i, 2) = w * std::sin(k * phi[std::size_t(i)]);
        b(i) = w * y[std::size_t(i)];
    }
    const Eigen::VectorXd c = linear_least_squares(a, b);
    SineFit f;
    f.fixed_periods = k;
    f.offset = c(0);
    f.amplitude = std::hypot(c(1), c(2));
    f.phase = f.amplitude > 0 ? wrap_phase(std::atan2(-c(2), -c(1))) : 0.0;
    f.degenerate_phase = f.amplitude < 0.01;
    double ss = 0;
    for (std::size_t i = 0; i < phi.size(); ++i) ss += std::pow(sine_model(f, phi[i]) - y[i], 2);
    f.residual_rms = std::sqrt(ss / double(phi.size()));
    return f;
}

double sine_model(const SineFit& f, double phi) {
    return f.offset - f.amplitude * std::cos(f.fixed_periods * phi - f.phase);
}

FitComparison compare_fits(const SineFit& sim, const SineFit& data) {
    if (sim.amplitude < 1e-6) throw ContractViolation("compare_fits: simulated amplitude is zero");
    return {wrap_phase(data.phase - sim.phase), data.amplitude / sim.amplitude};
}

std::vector<double> phase_reversal_curve(const Device& dev, double p_up, const std::vector<double>& phi_grid,
                                         Mode mode, int workers) {
    const cmat d0 = spam_initial_density(p_up);
    const TransitionLabel r1{Spin::N1, {-1, -1, 1, -1}};
    const TransitionLabel r2{Spin::N2, {-1, -1, -1, 1}};
    const TransitionLabel cz{Spin::E2, {1, 0, 1, -1}};
    const double base = -pi / 2;
    auto u_of = [&](const PulseSpec& p) { return PulseEvolver(dev, p, mode).unitary(0.0, p.duration); };
    const cmat u_cz = u_of(dev.labeled_pulse(Channel::ESR, cz, 2 * pi, 0.0));
    auto crot = [&](double phase) {
        const cmat h = u_of(dev.labeled_pulse(Channel::NMR, r2, pi / 2, phase));
        return cmat(h * u_cz * h);
    };
    const cmat prep = crot(base) * u_of(dev.labeled_pulse(Channel::NMR, r1, pi / 2, base));
    const cmat rho_p = prep * d0 * prep.adjoint();
    const cmat up = projector(Spin::N1, 0);

    std::vector<double> out(phi_grid.size());
    parallel_for(phi_grid.size(), workers, [&](std::size_t i) {
        const double phi = phi_grid[i];
        const cmat u = u_of(dev.labeled_pulse(Channel::NMR, r1, pi / 2, base + phi)) * crot(base + 3 * phi);
        out[i] = std::clamp((up * u * rho_p * u.adjoint()).trace().real(), 0.0, 1.0);
    });
    return out;
}

}  // namespace donorsim
