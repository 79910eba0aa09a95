#include <cmath>
#include <fstream>
#include <sstream>

#include "donorsim/experiments.hpp"
#include "donorsim/fitting.hpp"

namespace donorsim {

DonorDistanceFit donor_distance_fit(const std::vector<double>& d, const std::vector<double>& j, double target_j,
                                    const std::vector<double>& w) {
    require(d.size() == j.size(), "donor_distance_fit: length mismatch");
    require(d.size() >= 3, "donor_distance_fit: needs at least 3 points");
    require(target_j > 0, "donor_distance_fit: target exchange must be positive");
    require(w.empty() || w.size() == d.size(), "donor_distance_fit: weights length mismatch");
    const Eigen::Index n = Eigen::Index(d.size());
    Eigen::MatrixXd a(n, 2);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = std::size_t(i);
        if (!(j[k] > 0)) throw ContractViolation("donor_distance_fit: exchange values must be positive");
        const double wi = w.empty() ? 1.0 : w[k];
        a(i, 0) = wi;
        a(i, 1) = wi * d[k];
        y(i) = wi * std::log(j[k]);
    }
    const Eigen::VectorXd c = linear_least_squares(a, y);
    DonorDistanceFit f;
    f.intercept = c(0);
    f.slope = c(1);
    if (f.slope == 0) throw FitError("donor_distance_fit: flat fit cannot be inverted", NAN);
    f.residual_rms = std::sqrt((a * c - y).squaredNorm() / double(n));
    f.distance_nm = (std::log(target_j) - f.intercept) / f.slope;
    return f;
}

std::pair<std::vector<double>, std::vector<double>> load_distance_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read dataset '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    const CsvTable t = parse_csv(ss.str());
    int cd = -1, cj = -1;
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (t.header[i] == "distance_nm") cd = int(i);
        if (t.header[i] == "j_mhz") cj = int(i);
    }
    if (cd < 0 || cj < 0) throw ContractViolation("dataset needs distance_nm and j_mhz columns");
    std::pair<std::vector<double>, std::vector<double>> out;
    for (const auto& r : t.rows) {
        out.first.push_back(r[std::size_t(cd)]);
        out.second.push_back(r[std::size_t(cj)]);
    }
    return out;
}

}  // namespace donorsim
