#pragma once

// Persistence: model JSON documents, trace and dataset CSV files, and
// floating-point formatting that round-trips exactly.

#include "sosmc/core.hpp"
#include "sosmc/mlp.hpp"
#include "sosmc/models.hpp"
#include "sosmc/tuning.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace sosmc {

using json = nlohmann::json;

/// %.17g: enough significant digits to round-trip any double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

inline json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Vector vector_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
    return rows;
}

inline Matrix matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw IoError("expected a non-empty array of rows");
    const Eigen::Index r = static_cast<Eigen::Index>(j.size());
    const Eigen::Index c = static_cast<Eigen::Index>(j[0].size());
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        const Vector row = vector_from_json(j[static_cast<std::size_t>(i)]);
        if (row.size() != c) throw IoError("ragged matrix in JSON");
        m.row(i) = row.transpose();
    }
    return m;
}

// --- models --------------------------------------------------------------------

using AnyModel = std::variant<GaussianLocation, MixturePotential, MlpEnergy>;

inline json model_to_json(const GaussianLocation& m) {
    return {{"family", "gaussian_location"}, {"dim", m.dim()}, {"covariance", to_json(m.covariance())},
            {"params", to_json(m.params())}};
}

inline json model_to_json(const MixturePotential& m) {
    return {{"family", "mixture_potential"}, {"dim", m.dim()},     {"means", to_json(m.means())},
            {"sigma_sq", m.sigma_sq()},      {"params", to_json(m.params())}};
}

inline json model_to_json(const MlpEnergy& m) {
    const auto& a = m.architecture();
    return {{"family", "mlp_energy"},
            {"architecture",
             {{"input_dim", a.input_dim},
              {"hidden_width", a.hidden_width},
              {"hidden_layers", a.hidden_layers},
              {"activation", "silu"},
              {"head", "linear"},
              {"layout", "per layer: W (out x in, column-major) then b"}}},
            {"params", to_json(m.params())}};
}

inline json model_to_json(const AnyModel& m) {
    return std::visit([](const auto& x) { return model_to_json(x); }, m);
}

inline AnyModel model_from_json(const json& j) {
    try {
        const std::string fam = j.at("family").get<std::string>();
        const Vector p = vector_from_json(j.at("params"));
        if (fam == "gaussian_location") return GaussianLocation(p, matrix_from_json(j.at("covariance")));
        if (fam == "mixture_potential")
            return MixturePotential(p, matrix_from_json(j.at("means")), j.at("sigma_sq").get<double>());
        if (fam == "mlp_energy") {
            const auto& a = j.at("architecture");
            MlpEnergy m(MlpArchitecture{a.at("input_dim").get<Eigen::Index>(), a.at("hidden_width").get<Eigen::Index>(),
                                        a.at("hidden_layers").get<Eigen::Index>()});
            m.set_params(p);
            return m;
        }
        throw IoError("unknown model family: " + fam);
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed model document: ") + e.what());
    }
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

inline void save_model(const std::filesystem::path& path, const AnyModel& m) {
    write_text(path, model_to_json(m).dump(2) + "\n");
}

inline AnyModel load_model(const std::filesystem::path& path) {
    try {
        return model_from_json(json::parse(read_text(path)));
    } catch (const json::parse_error& e) {
        throw IoError("cannot parse " + path.string() + ": " + e.what());
    }
}

// --- CSV -------------------------------------------------------------------------

inline const char* trace_header() {
    return "k,particle_reward,ess,gamma,grad_norm,resampled,wall_clock_s,fresh_reward,kl_quadrature";
}

inline std::string trace_to_csv(const TuningTrace& t) {
    std::string out = trace_header();
    out += '\n';
    for (const auto& r : t.rows) {
        out += std::to_string(r.k) + ',' + format_double(r.particle_reward) + ',' + format_double(r.ess) + ',' +
               format_double(r.gamma) + ',' + format_double(r.grad_norm) + ',' + (r.resampled ? "1" : "0") + ',' +
               format_optional(r.wall_clock_s) + ',' + format_optional(r.fresh_reward) + ',' +
               format_optional(r.kl_quadrature) + '\n';
    }
    return out;
}

inline std::string positions_to_csv(const Positions& x) {
    std::string out;
    for (Eigen::Index j = 0; j < x.cols(); ++j) out += (j ? ",x" : "x") + std::to_string(j + 1);
    out += '\n';
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (j) out += ',';
            out += format_double(x(i, j));
        }
        out += '\n';
    }
    return out;
}

/// Reads a numeric CSV with one header line.
inline Positions positions_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV");
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError("bad number in CSV: '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows[0].size()) throw IoError("ragged CSV");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError("CSV has no data rows");
    Positions x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return x;
}

/// FNV-1a over a byte string, as 16 hex chars.
inline std::string content_hash(const std::string& bytes) {
    std::uint64_t h = detail::fnv1a(bytes);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    return out;
}

}  // namespace sosmc
