#include "donorsim/tomography.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "donorsim/parallel.hpp"
#include "donorsim/rng.hpp"

namespace donorsim {

namespace {
constexpr char pauli_names[4] = {'I', 'X', 'Y', 'Z'};

int pauli_of(Axis a) { return a == Axis::X ? 1 : a == Axis::Y ? 2 : 3; }
Axis axis_of(int k) { return k == 1 ? Axis::X : k == 2 ? Axis::Y : Axis::Z; }

cmat pauli2(int a, int b) { return tensor(pauli(pauli_names[a]), pauli(pauli_names[b])); }
}  // namespace

AxisPair axis_pair(int index) {
    require(index >= 0 && index < n_axis_pairs, "axis_pair: index out of range");
    return {axis_of(index / 3 + 1), axis_of(index % 3 + 1)};
}

int axis_pair_index(AxisPair p) { return 3 * (pauli_of(p.first) - 1) + pauli_of(p.second) - 1; }

std::optional<PulseSpec> projection_pulse(const Device& dev, Spin nucleus, Axis axis) {
    require(!is_electron(nucleus), "projection_pulse: acts on a nucleus");
    if (axis == Axis::Z) return std::nullopt;
    TransitionLabel l{nucleus, {-1, -1, -1, -1}};
    l.condition[position(bound_electron(nucleus))] = 1;
    const double phi = axis == Axis::X ? -std::numbers::pi / 2 : 0.0;
    return dev.labeled_pulse(Channel::NMR, l, std::numbers::pi / 2, phi);
}

void ProbabilityTable::set(AxisPair a, const std::array<double, 4>& q) {
    p[axis_pair_index(a)] = q;
    present[axis_pair_index(a)] = true;
}

const std::array<double, 4>& ProbabilityTable::get(AxisPair a) const {
    const int i = axis_pair_index(a);
    if (!present[i]) throw ContractViolation("probability table is missing an axis pair");
    return p[i];
}

void ProbabilityTable::validate(double tol) const {
    for (int i = 0; i < n_axis_pairs; ++i) {
        if (!present[i]) throw ContractViolation("probability table is missing an axis pair");
        double sum = 0;
        for (double v : p[i]) {
            require(v >= -tol && v <= 1 + tol, "probability table entry outside [0, 1]");
            sum += v;
        }
        require(std::abs(sum - 1) <= tol, "probability table row does not sum to 1");
    }
}

StokesVector stokes_from_probabilities(const ProbabilityTable& t) {
    StokesVector s;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            // identity slots read the Z setting and ignore that qubit's sign
            const auto& q = t.get({axis_of(a ? a : 3), axis_of(b ? b : 3)});
            double v = 0;
            for (int o = 0; o < 4; ++o) {
                const int s1 = a && (o >> 1) ? -1 : 1, s2 = b && (o & 1) ? -1 : 1;
                v += s1 * s2 * q[o];
            }
            s(a, b) = v;
        }
    return s;
}

StokesVector stokes_from_density(const cmat& rho) {
    require(rho.rows() == 4 && rho.cols() == 4, "stokes_from_density: expects a 4x4 matrix");
    StokesVector s;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) s(a, b) = (pauli2(a, b) * rho).trace().real();
    return s;
}

ProbabilityTable probabilities_from_density(const cmat& rho) {
    require(rho.rows() == 4 && rho.cols() == 4, "probabilities_from_density: expects a 4x4 matrix");
    ProbabilityTable t;
    const std::array<cmat, 3> rot = {rotation(std::numbers::pi / 2, -std::numbers::pi / 2),
                                     rotation(std::numbers::pi / 2, 0.0), pauli('I')};
    for (int i = 0; i < n_axis_pairs; ++i) {
        const AxisPair ap = axis_pair(i);
        const cmat u = tensor(rot[pauli_of(ap.first) - 1], rot[pauli_of(ap.second) - 1]);
        const cmat r = u * rho * u.adjoint();
        std::array<double, 4> q;
        for (int o = 0; o < 4; ++o) q[o] = r(o, o).real();
        t.set(ap, q);
    }
    return t;
}

cmat density_from_stokes(const StokesVector& s) {
    require(std::abs(s(0, 0)) > 0, "density_from_stokes: S_ii must be non-zero");
    cmat rho = cmat::Zero(4, 4);
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) rho += s(a, b) * pauli2(a, b);
    return rho / (4.0 * s(0, 0));
}

double fidelity(const cmat& rho, const cvec& psi) {
    if (rho.rows() != psi.size() || rho.cols() != psi.size()) throw DimensionError("fidelity: dimension mismatch");
    return psi.dot(rho * psi).real();
}

cmat spin_flip(const cmat& rho) {
    require(rho.rows() == 4 && rho.cols() == 4, "spin_flip: expects a 4x4 matrix");
    const cmat yy = pauli2(2, 2);
    return yy * rho.conjugate() * yy;
}

double concurrence(const cmat& rho) {
    require(rho.rows() == 4 && rho.cols() == 4, "concurrence: expects a 4x4 matrix");
    // printed / rounded matrices sit a few 1e-5 below PSD; clip those, reject real violations
    const auto es = hermitian_eig(hermitize(rho));
    if (es.values.minCoeff() < -concurrence_psd_slack)
        throw NotPsdError("concurrence: input is not positive semidefinite");
    const rvec r = es.values.cwiseMax(0.0).cwiseSqrt();
    const cmat sq = es.vectors * r.cast<cplx>().asDiagonal() * es.vectors.adjoint();
    const cmat m = hermitize(sq * spin_flip(rho) * sq);
    rvec ev = hermitian_eig(m).values;
    // R² eigenvalues below 1e-10 are round-off (a pure state leaves ~1e-16 there)
    for (int i = 0; i < 4; ++i) ev(i) = ev(i) < psd_tol ? 0.0 : std::sqrt(ev(i));
    std::sort(ev.data(), ev.data() + 4, std::greater<double>());
    return std::clamp(ev(0) - ev(1) - ev(2) - ev(3), 0.0, 1.0);
}

cvec bell_psi_plus() {
    cvec v = cvec::Zero(4);
    v(1) = v(2) = 1.0 / std::sqrt(2.0);
    return v;
}

ProbabilityTable mean_table(const std::vector<ProbabilityTable>& groups) {
    require(!groups.empty(), "mean_table: no groups");
    ProbabilityTable m;
    for (int i = 0; i < n_axis_pairs; ++i) {
        std::array<double, 4> q{};
        for (const auto& g : groups) {
            if (!g.present[i]) throw ContractViolation("probability table is missing an axis pair");
            for (int o = 0; o < 4; ++o) q[o] += g.p[i][o];
        }
        for (double& v : q) v /= double(groups.size());
        m.set(axis_pair(i), q);
    }
    return m;
}

double percentile(const std::vector<double>& sorted, double q) {
    require(!sorted.empty(), "percentile: empty sample");
    require(q >= 0 && q <= 1, "percentile: q must lie in [0, 1]");
    const double pos = q * double(sorted.size() - 1);
    const std::size_t i = std::size_t(std::floor(pos));
    if (i + 1 >= sorted.size()) return sorted.back();
    return sorted[i] + (pos - double(i)) * (sorted[i + 1] - sorted[i]);
}

BootstrapResult bootstrap_ci(const std::vector<ProbabilityTable>& groups, int n_resamples,
                             const TableStatistic& statistic, std::uint64_t seed, int workers) {
    require(groups.size() >= 2, "bootstrap_ci: needs at least two groups");
    require(n_resamples >= 1, "bootstrap_ci: needs at least one resample");
    BootstrapResult out;
    if (n_resamples < 100) out.warnings.push_back("bootstrap: fewer than 100 resamples");
    out.samples.resize(std::size_t(n_resamples));
    const std::size_t g = groups.size();
    parallel_for(std::size_t(n_resamples), workers, [&](std::size_t r) {
        auto rng = make_stream(seed, r, 0xb007);
        std::vector<ProbabilityTable> pick;
        pick.reserve(g);
        for (std::size_t k = 0; k < g; ++k) pick.push_back(groups[std::size_t(uniform01(rng) * double(g))]);
        out.samples[r] = statistic(mean_table(pick));
    });
    std::sort(out.samples.begin(), out.samples.end());
    out.lo = percentile(out.samples, 0.025);
    out.hi = percentile(out.samples, 0.975);
    return out;
}

double table_fidelity(const ProbabilityTable& t, const cvec& target) {
    const cmat rho = nearest_physical_density(density_from_stokes(stokes_from_probabilities(t)));
    return std::clamp(fidelity(rho, target), 0.0, 1.0);
}

double table_concurrence(const ProbabilityTable& t) {
    return concurrence(nearest_physical_density(density_from_stokes(stokes_from_probabilities(t))));
}

DensityEstimate tomography_pipeline(const TableSource& source, const TomographyOptions& opt) {
    require(opt.n_groups >= 1, "tomography_pipeline: needs at least one group");
    const cvec target = opt.target.size() ? opt.target : bell_psi_plus();
    require(target.size() == 4, "tomography_pipeline: target must be a two-qubit state");
    std::vector<ProbabilityTable> groups;
    for (int k = 0; k < opt.n_groups; ++k) {
        groups.push_back(source(k));
        groups.back().validate(1e-9);
    }
    DensityEstimate est;
    est.table = mean_table(groups);
    est.stokes = stokes_from_probabilities(est.table);
    est.raw = density_from_stokes(est.stokes);
    est.physical = nearest_physical_density(est.raw);
    est.fidelity = std::clamp(fidelity(est.physical, target), 0.0, 1.0);
    est.concurrence = concurrence(est.physical);
    if (groups.size() >= 2) {
        est.ci_fidelity = bootstrap_ci(groups, opt.n_resamples,
                                       [&](const ProbabilityTable& t) { return table_fidelity(t, target); },
                                       opt.seed, opt.workers);
        est.ci_concurrence = bootstrap_ci(groups, opt.n_resamples, table_concurrence, opt.seed ^ 0x5eedu,
                                          opt.workers);
        est.warnings = est.ci_fidelity.warnings;
    } else {
        est.ci_fidelity.lo = est.ci_fidelity.hi = est.fidelity;
        est.ci_concurrence.lo = est.ci_concurrence.hi = est.concurrence;
        est.warnings.push_back("bootstrap skipped: a single group");
    }
    return est;
}

ProbabilityTable bell_probability_table(const Device& dev, const BellSourceOptions& opt, int group) {
    ProbabilityTable t;
    const Sequence prep = bell_prep(dev, opt.mode);
    for (int i = 0; i < n_axis_pairs; ++i) {
        const AxisPair ap = axis_pair(i);
        Sequence seq = prep;
        seq.push_back(SequenceStep::make_project(Spin::N1, ap.first, !opt.conditional_projection));
        seq.push_back(SequenceStep::make_project(Spin::N2, ap.second, !opt.conditional_projection));
        seq.push_back(SequenceStep::make_measure(Spin::N1));
        seq.push_back(SequenceStep::make_measure(Spin::N2));
        RunOptions ro;
        ro.n_shots = opt.n_shots;
        ro.workers = opt.workers;
        const std::uint64_t seed = stream_id(opt.seed, std::uint64_t(group) * n_axis_pairs + i, 0x7040);
        const RunResult r = run_sequence(dev, seq, opt.noise, opt.pirs, opt.mode, seed, ro);
        std::array<double, 4> q{};
        if (opt.n_shots == 0) {
            const cmat nuc = nuclear_state(r.final_state);
            double sum = 0;
            for (int o = 0; o < 4; ++o) sum += q[o] = std::max(0.0, nuc(o, o).real());
            for (double& v : q) v /= sum;
        } else {
            for (const auto& s : r.shots) q[2 * s.outcomes[0] + s.outcomes[1]] += 1.0;
            for (double& v : q) v /= double(opt.n_shots);
        }
        t.set(ap, q);
    }
    return t;
}

}  // namespace donorsim
