#pragma once

// Two donors, four spins: n1 ⊗ n2 ⊗ e1 ⊗ e2.
// Basis index = 8·n1 + 4·n2 + 2·e1 + e2, with bit 0 = up (⇑/↑) and bit 1 = down.

#include <array>
#include <string>
#include <vector>

#include "donorsim/numerics.hpp"

namespace donorsim {

enum class Spin : int { N1 = 0, N2 = 1, E1 = 2, E2 = 3 };
enum class Axis { X, Y, Z };

inline constexpr int n_spins = 4;
inline constexpr int hilbert_dim = 16;

constexpr int position(Spin s) { return static_cast<int>(s); }
constexpr bool is_electron(Spin s) { return s == Spin::E1 || s == Spin::E2; }
constexpr Spin bound_electron(Spin n) { return n == Spin::N1 ? Spin::E1 : Spin::E2; }
const char* spin_name(Spin s);
Spin spin_from_name(const std::string& name);

constexpr int bit_of(int index, Spin s) { return (index >> (n_spins - 1 - position(s))) & 1; }
constexpr int basis_index(int n1, int n2, int e1, int e2) { return 8 * n1 + 4 * n2 + 2 * e1 + e2; }

struct SystemParams {
    double b0 = 1.0;                        // T
    double g1 = 1.9985, g2 = 1.9985;
    double mu_b_over_h = 27970.0 / 1.9985;  // MHz/T, so that g·µB/h = 27.97 GHz/T
    double gamma_n = 17.23;                 // MHz/T
    double a1 = 111.0, a2 = 113.0;          // MHz
    double j = 12.0;                        // MHz

    void validate() const;  // throws ContractViolation on invariant breakage
    double electron_zeeman() const { return mu_b_over_h * b0 * 0.5 * (g1 + g2); }
    double nuclear_zeeman() const { return gamma_n * b0; }
};

// S = σ/2 on one spin, embedded in the 16-dim space
cmat spin_operator(Spin s, char axis);
// ΣS over the electrons or over the nuclei
cmat species_operator(bool electrons, char axis);

cmat build_static_hamiltonian(const SystemParams& p);
// Same with hyperfine and exchange removed (ionized donors).
cmat build_ionized_hamiltonian(const SystemParams& p);

// Quantum numbers conserved by the dynamics Hamiltonian: 2·ΣSz(e), 2·ΣIz.
std::array<int, 2> sector_of(int index);

// Exact block diagonalization of h over the (ΣSz_e, ΣIz) sectors. Off-sector
// couplings (hyperfine flip-flops, GHz-detuned) are folded into the blocks so
// the spectrum of h is preserved.
cmat block_diagonalize(const cmat& h);

double hybridization_angle(double j, double delta);

// Eigenstructure with each eigenvector's dominant product-basis component.
struct EigenStructure {
    EigenSystem<double> eig;
    std::vector<int> dominant;         // basis index of largest |component|²
    std::vector<double> dominant_weight;
};
EigenStructure eigen_structure(const cmat& h);

enum class LineChannel { Electron1, Electron2, Nucleus1, Nucleus2 };
const char* channel_name(LineChannel c);

struct TransitionLine {
    double frequency = 0;   // MHz, |E_b − E_a|
    double signed_frequency = 0;  // E(target up) − E(target down)
    LineChannel channel{};
    int from_index = 0;     // dominant basis state, target spin down
    int to_index = 0;       // dominant basis state, target spin up
    std::string condition;  // spectator configuration, e.g. "n1=⇓ n2=⇑ e2=↓"
    double amplitude = 0;   // min(1, 2·|⟨b|ΣSx|a⟩|)
    bool merged = false;    // near-degenerate lines (< 1 kHz) were merged into this one
};

struct SpectrumOptions {
    double min_amplitude = 0.25;
    double merge_tolerance = 1e-3;  // MHz
};

// Lines driven by ΣSx of the electrons (or nuclei) among eigenstates of h.
std::vector<TransitionLine> transition_lines(const cmat& h, bool electrons, const SpectrumOptions& opt = {});
std::vector<TransitionLine> esr_spectrum(const SystemParams& p, const SpectrumOptions& opt = {});
std::vector<TransitionLine> nmr_spectrum(const SystemParams& p, bool neutral,
                                         const SpectrumOptions& opt = {});

struct AxisExpectation {
    double up_proportion = 0;  // (1 + ⟨σ⟩)/2
    double bloch_norm = 0;     // |⟨σ⟩| over X, Y, Z
};
AxisExpectation expectation_axis(const cmat& rho, Spin s, Axis axis);
std::array<double, 3> bloch_vector(const cmat& rho, Spin s);

cmat product_state_density(std::array<int, 4> bits);

}  // namespace donorsim
