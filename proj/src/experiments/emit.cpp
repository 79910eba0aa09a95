#include <charconv>
#include <fstream>
#include <sstream>

#include "donorsim/experiments.hpp"

namespace donorsim {

namespace {
std::string shortest(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}
}  // namespace

std::string format_csv(const CsvTable& t) {
    std::string out;
    for (std::size_t i = 0; i < t.header.size(); ++i) out += (i ? "," : "") + t.header[i];
    out += '\n';
    for (const auto& row : t.rows) {
        require(row.size() == t.header.size(), "format_csv: row width differs from header");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += shortest(row[i]);
        }
        out += '\n';
    }
    return out;
}

CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (first) {
            t.header = cells;
            first = false;
            continue;
        }
        std::vector<double> row;
        for (const auto& c : cells) {
            double v = 0;
            const char* b = c.data();
            while (b < c.data() + c.size() && *b == ' ') ++b;
            auto r = std::from_chars(b, c.data() + c.size(), v);
            if (r.ec != std::errc()) throw ContractViolation("parse_csv: non-numeric cell '" + c + "'");
            row.push_back(v);
        }
        if (row.size() != t.header.size()) throw ContractViolation("parse_csv: row width differs from header");
        t.rows.push_back(std::move(row));
    }
    if (first) throw ContractViolation("parse_csv: missing header");
    return t;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

json density_json(const cmat& rho) {
    json re = json::array(), im = json::array();
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
        json r = json::array(), m = json::array();
        for (Eigen::Index k = 0; k < rho.cols(); ++k) {
            r.push_back(rho(i, k).real());
            m.push_back(rho(i, k).imag());
        }
        re.push_back(r);
        im.push_back(m);
    }
    return {{"re", re}, {"im", im}};
}

json RunManifest::to_json() const {
    json outs = json::array();
    for (const auto& o : outputs) outs.push_back({{"file", o.name}, {"sha256", o.sha256}});
    return {{"config_hash", config_hash}, {"seed", seed},          {"version", version},
            {"outputs", outs},            {"wall_time_s", wall_time_s}, {"warnings", warnings}};
}

}  // namespace donorsim
