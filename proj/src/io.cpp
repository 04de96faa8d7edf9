#include "lcinf/io.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace lcinf {

using json = nlohmann::json;

namespace {

std::string trim(std::string s) {
    const auto notspace = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
    s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') quoted = !quoted;
        if (c == ',' && !quoted) {
            out.push_back(trim(cell));
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    out.push_back(trim(cell));
    return out;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::invalid_input, "cannot open '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

bool is_missing(const std::string& cell) {
    static const std::set<std::string> tokens{"", "NA", "na", "N/A", "nan", "NaN", "NAN", "."};
    return tokens.count(cell) > 0;
}

std::optional<double> parse_double(const std::string& cell) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::optional<long long> parse_integer(const std::string& cell) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(cell, &used);
        if (used != cell.size()) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
    return out;
}

std::string list_lines(const std::vector<int>& lines) {
    std::vector<std::string> parts;
    for (std::size_t i = 0; i < lines.size() && i < 20; ++i) parts.push_back(std::to_string(lines[i]));
    if (lines.size() > 20) parts.push_back("... (" + std::to_string(lines.size()) + " rows)");
    return join(parts, ", ");
}

// Orders unit ids numerically when all are integers, lexically otherwise.
struct UnitOrder {
    bool numeric = true;
    bool operator()(const std::string& a, const std::string& b) const {
        if (numeric) return *parse_integer(a) < *parse_integer(b);
        return a < b;
    }
};

}  // namespace

PanelDataset load_dataset(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw Error(ErrorKind::invalid_input, "dataset '" + path + "' is empty");
    const auto header = split_csv(lines.front());

    std::map<std::string, std::size_t> column;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (!column.emplace(header[c], c).second)
            throw Error(ErrorKind::invalid_input, "dataset '" + path + "': duplicate column '" + header[c] + "'");
    std::vector<std::string> missing;
    for (const char* req : {"unit_id", "period", "y", "x"})
        if (!column.count(req)) missing.push_back(req);
    if (!missing.empty())
        throw Error(ErrorKind::invalid_input, "dataset '" + path + "': schema mismatch, missing column(s) " + join(missing, ", ") +
                                                  "; expected header unit_id,period,y,x,w1..wp[,z], got " + lines.front());

    std::vector<std::size_t> controls;
    std::vector<std::string> control_names;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto& name = header[c];
        if (name == "unit_id" || name == "period" || name == "y" || name == "x" || name == "z") continue;
        controls.push_back(c);
        control_names.push_back(name);
    }
    const bool iv = column.count("z") > 0;

    struct Row {
        std::string unit;
        int period;
        double y, x, z;
        std::vector<double> w;
        int line;
    };
    std::vector<Row> rows;
    std::vector<int> missing_lines;
    std::vector<std::string> bad;
    for (std::size_t l = 1; l < lines.size(); ++l) {
        if (trim(lines[l]).empty()) continue;
        const int line_no = static_cast<int>(l) + 1;
        const auto cells = split_csv(lines[l]);
        if (cells.size() != header.size()) {
            bad.push_back("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " fields, got " +
                          std::to_string(cells.size()));
            continue;
        }
        bool row_missing = false;
        for (std::size_t c = 0; c < cells.size(); ++c) row_missing = row_missing || is_missing(cells[c]);
        if (row_missing) {
            missing_lines.push_back(line_no);
            continue;
        }
        Row r;
        r.line = line_no;
        r.unit = cells[column["unit_id"]];
        const auto period = parse_integer(cells[column["period"]]);
        if (!period || *period < 1) {
            bad.push_back("line " + std::to_string(line_no) + ": period must be an integer >= 1");
            continue;
        }
        r.period = static_cast<int>(*period);
        auto num = [&](std::size_t c) {
            const auto v = parse_double(cells[c]);
            if (!v || !std::isfinite(*v)) {
                bad.push_back("line " + std::to_string(line_no) + ": column '" + header[c] + "' is not a finite number");
                return 0.0;
            }
            return *v;
        };
        r.y = num(column["y"]);
        r.x = num(column["x"]);
        r.z = iv ? num(column["z"]) : 0.0;
        for (std::size_t c : controls) r.w.push_back(num(c));
        rows.push_back(std::move(r));
    }
    if (!missing_lines.empty())
        throw Error(ErrorKind::invalid_input, "dataset '" + path + "': missing values on line(s) " + list_lines(missing_lines));
    if (!bad.empty()) {
        std::vector<std::string> head(bad.begin(), bad.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(bad.size(), 20)));
        throw Error(ErrorKind::invalid_input, "dataset '" + path + "': " + join(head, "; "));
    }

    UnitOrder order;
    for (const auto& r : rows) order.numeric = order.numeric && parse_integer(r.unit).has_value();
    std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
        if (a.unit != b.unit) return order(a.unit, b.unit);
        return a.period < b.period;
    });
    std::vector<std::string> dups;
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].unit == rows[i - 1].unit && rows[i].period == rows[i - 1].period)
            dups.push_back("(unit=" + rows[i].unit + ", period=" + std::to_string(rows[i].period) + ") at lines " +
                           std::to_string(std::min(rows[i - 1].line, rows[i].line)) + " and " +
                           std::to_string(std::max(rows[i - 1].line, rows[i].line)));
    if (!dups.empty()) throw Error(ErrorKind::invalid_input, "dataset '" + path + "': duplicate rows " + join(dups, "; "));

    PanelDataset data;
    const auto n = static_cast<Index>(rows.size());
    data.y.resize(n);
    data.x.resize(n);
    data.w.resize(n, static_cast<Index>(controls.size()));
    if (iv) data.z = Vector(n);
    data.control_names = control_names;
    for (Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        data.unit_id.push_back(r.unit);
        Location loc;
        loc.period = r.period;
        data.loc.push_back(loc);
        data.y(i) = r.y;
        data.x(i) = r.x;
        if (iv) (*data.z)(i) = r.z;
        for (std::size_t c = 0; c < r.w.size(); ++c) data.w(i, static_cast<Index>(c)) = r.w[c];
    }
    check_dataset(data);
    return data;
}

void attach_locations(PanelDataset& data, const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw Error(ErrorKind::invalid_input, "locations '" + path + "' is empty");
    const auto header = split_csv(lines.front());
    const bool per_obs = header == std::vector<std::string>{"unit_id", "period", "lat", "lon"};
    if (!per_obs && header != std::vector<std::string>{"unit_id", "lat", "lon"})
        throw Error(ErrorKind::invalid_input, "locations '" + path + "': header must be unit_id,lat,lon or unit_id,period,lat,lon, got " +
                                                  lines.front());
    std::map<std::pair<std::string, int>, std::pair<double, double>> coords;
    for (std::size_t l = 1; l < lines.size(); ++l) {
        if (trim(lines[l]).empty()) continue;
        const auto cells = split_csv(lines[l]);
        const std::string where = "locations '" + path + "' line " + std::to_string(l + 1);
        if (cells.size() != header.size()) throw Error(ErrorKind::invalid_input, where + ": wrong number of fields");
        const auto lat = parse_double(cells[per_obs ? 2 : 1]);
        const auto lon = parse_double(cells[per_obs ? 3 : 2]);
        if (!lat || !lon || !std::isfinite(*lat) || !std::isfinite(*lon))
            throw Error(ErrorKind::invalid_input, where + ": missing or non-finite coordinate");
        int period = 0;
        if (per_obs) {
            const auto p = parse_integer(cells[1]);
            if (!p) throw Error(ErrorKind::invalid_input, where + ": bad period");
            period = static_cast<int>(*p);
        }
        if (!coords.emplace(std::make_pair(cells[0], period), std::make_pair(*lat, *lon)).second)
            throw Error(ErrorKind::invalid_input, where + ": duplicate location for unit " + cells[0]);
    }
    if (data.loc.size() != static_cast<std::size_t>(data.n())) data.loc.assign(static_cast<std::size_t>(data.n()), Location{});
    for (Index i = 0; i < data.n(); ++i) {
        auto& loc = data.loc[static_cast<std::size_t>(i)];
        const auto& unit = data.unit_id[static_cast<std::size_t>(i)];
        const auto it = coords.find({unit, per_obs ? loc.period : 0});
        if (it == coords.end()) throw Error(ErrorKind::invalid_input, "locations '" + path + "': no coordinates for unit " + unit);
        loc.lat = it->second.first;
        loc.lon = it->second.second;
    }
}

DissimilarityMatrix load_dissimilarity(const std::string& path, Index expected_n) {
    const auto lines = read_lines(path);
    std::vector<std::vector<double>> rows;
    for (std::size_t l = 0; l < lines.size(); ++l) {
        if (trim(lines[l]).empty()) continue;
        std::vector<double> row;
        for (const auto& cell : split_csv(lines[l])) {
            const auto v = parse_double(cell);
            if (!v) throw Error(ErrorKind::invalid_input, "dissimilarity '" + path + "' line " + std::to_string(l + 1) + ": bad number '" + cell + "'");
            row.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    const auto n = static_cast<Index>(rows.size());
    if (n != expected_n)
        throw Error(ErrorKind::invalid_input, "dissimilarity '" + path + "' has " + std::to_string(n) + " rows, dataset has " +
                                                  std::to_string(expected_n));
    Matrix d(n, n);
    for (Index i = 0; i < n; ++i) {
        if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != n)
            throw Error(ErrorKind::invalid_input, "dissimilarity '" + path + "' is not square");
        for (Index j = 0; j < n; ++j) d(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    DissimilarityMatrix dm(std::move(d));
    const auto report = validate(dm, false);
    if (!report.ok()) throw Error(ErrorKind::invalid_input, "dissimilarity '" + path + "' is not symmetric, nonnegative with zero diagonal");
    return dm;
}

namespace {

CovarianceParams params_from(const json& j, const std::string& where) {
    CovarianceParams p;
    try {
        p.tau1 = j.at("tau1").get<double>();
        p.tau2 = j.at("tau2").get<double>();
        p.tau3 = j.at("tau3").get<double>();
        if (j.contains("rho") && !j.at("rho").is_null()) p.rho = j.at("rho").get<double>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_input, where + ": " + e.what());
    }
    check_params(p);
    return p;
}

json params_json(const CovarianceParams& p) {
    json j{{"tau1", p.tau1}, {"tau2", p.tau2}, {"tau3", p.tau3}};
    if (p.rho) j["rho"] = *p.rho;
    return j;
}

// Value rounded to its printed form so JSON and CSV agree.
json json_number(double v) {
    if (std::isfinite(v)) return std::stod(format_number(v));
    return format_number(v);
}

json json_number(const std::optional<double>& v) { return v ? json_number(*v) : json(nullptr); }

double number_from_json(const json& j) {
    if (j.is_string()) return std::stod(j.get<std::string>());
    return j.get<double>();
}

}  // namespace

ModelParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::invalid_input, "cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_input, "params '" + path + "': " + e.what());
    }
    ModelParams out;
    if (j.contains("u")) {
        out.u = params_from(j.at("u"), "params '" + path + "' (u)");
        if (j.contains("v")) out.v = params_from(j.at("v"), "params '" + path + "' (v)");
        if (j.contains("rho")) out.rho = j.at("rho").get<double>();
    } else {
        out.u = params_from(j, "params '" + path + "'");
        if (out.u.rho) out.rho = *out.u.rho;
    }
    if (!(std::abs(out.rho) < 1.0)) throw Error(ErrorKind::invalid_input, "params '" + path + "': |rho| must be below 1");
    return out;
}

std::string params_to_json(const ModelParams& params) {
    json j;
    if (params.v) {
        j["u"] = params_json(params.u);
        j["v"] = params_json(*params.v);
        j["rho"] = params.rho;
    } else {
        j = params_json(params.u);
    }
    return j.dump(2) + "\n";
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::string s = fmt::format("{:.6g}", v);
    if (s == "-0") s = "0";
    return s;
}

std::string format_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::string report_to_csv(const Report& report) {
    std::string out = join(report_columns(), ",") + "\n";
    for (const auto& r : report.rows) {
        out += r.method + "," + format_number(r.theta_hat) + "," + format_number(r.se) + "," + format_number(r.t_stat) + "," +
               format_number(r.ci_lo) + "," + format_number(r.ci_hi) + "," + format_number(r.ci_usual_lo) + "," +
               format_number(r.ci_usual_hi) + "," + std::to_string(r.k_hat) + "," + format_number(r.alpha_hat) + "," + r.decision + "\n";
    }
    return out;
}

std::string report_to_json(const Report& report) {
    json rows = json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"method", r.method},
                        {"theta_hat", json_number(r.theta_hat)},
                        {"se", json_number(r.se)},
                        {"t_stat", json_number(r.t_stat)},
                        {"ci_lo", json_number(r.ci_lo)},
                        {"ci_hi", json_number(r.ci_hi)},
                        {"ci_usual_lo", json_number(r.ci_usual_lo)},
                        {"ci_usual_hi", json_number(r.ci_usual_hi)},
                        {"k_hat", r.k_hat},
                        {"alpha_hat", json_number(r.alpha_hat)},
                        {"decision", r.decision}});
    json moran = json::array();
    for (const auto& m : report.moran)
        moran.push_back({{"weights", m.weights}, {"statistic", json_number(m.statistic)}, {"p_value", json_number(m.p_value)}});
    return json{{"rows", rows}, {"moran", moran}}.dump(2) + "\n";
}

Report report_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split_csv(line) != report_columns())
        throw Error(ErrorKind::invalid_input, "report CSV: unexpected header");
    Report report;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto c = split_csv(line);
        if (c.size() != report_columns().size()) throw Error(ErrorKind::invalid_input, "report CSV: wrong number of fields");
        const auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<double>(std::stod(s)); };
        ReportRow r;
        r.method = c[0];
        r.theta_hat = std::stod(c[1]);
        r.se = opt(c[2]);
        r.t_stat = opt(c[3]);
        r.ci_lo = std::stod(c[4]);
        r.ci_hi = std::stod(c[5]);
        r.ci_usual_lo = std::stod(c[6]);
        r.ci_usual_hi = std::stod(c[7]);
        r.k_hat = std::stoi(c[8]);
        r.alpha_hat = std::stod(c[9]);
        r.decision = c[10];
        report.rows.push_back(std::move(r));
    }
    return report;
}

Report report_from_json(const std::string& text) {
    Report report;
    try {
        const json j = json::parse(text);
        for (const auto& r : j.at("rows")) {
            ReportRow row;
            row.method = r.at("method").get<std::string>();
            row.theta_hat = number_from_json(r.at("theta_hat"));
            if (!r.at("se").is_null()) row.se = number_from_json(r.at("se"));
            if (!r.at("t_stat").is_null()) row.t_stat = number_from_json(r.at("t_stat"));
            row.ci_lo = number_from_json(r.at("ci_lo"));
            row.ci_hi = number_from_json(r.at("ci_hi"));
            row.ci_usual_lo = number_from_json(r.at("ci_usual_lo"));
            row.ci_usual_hi = number_from_json(r.at("ci_usual_hi"));
            row.k_hat = r.at("k_hat").get<int>();
            row.alpha_hat = number_from_json(r.at("alpha_hat"));
            row.decision = r.at("decision").get<std::string>();
            report.rows.push_back(std::move(row));
        }
        if (j.contains("moran"))
            for (const auto& m : j.at("moran"))
                report.moran.push_back({m.at("weights").get<std::string>(), number_from_json(m.at("statistic")), number_from_json(m.at("p_value"))});
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_input, std::string("report JSON: ") + e.what());
    }
    return report;
}

std::string moran_to_csv(const std::vector<MoranRow>& rows) {
    std::string out = "weights,moran_i,p_value\n";
    for (const auto& m : rows) out += m.weights + "," + format_number(m.statistic) + "," + format_number(m.p_value) + "\n";
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::invalid_input, "cannot write '" + path + "'");
    out << text;
    if (!out) throw Error(ErrorKind::invalid_input, "failed writing '" + path + "'");
}

std::string emit_report(const Report& report, ReportFormat format, const std::string& dir, const std::string& stem) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::invalid_input, "cannot create output directory '" + dir + "': " + ec.message());
    const std::string path = (std::filesystem::path(dir) / (stem + (format == ReportFormat::csv ? ".csv" : ".json"))).string();
    write_text(path, format == ReportFormat::csv ? report_to_csv(report) : report_to_json(report));
    return path;
}

std::string error_grid_csv(const std::vector<CalibrationResult>& results) {
    std::string out = "method,k,a,type1\n";
    for (const auto& r : results)
        for (const auto& col : r.grid.columns)
            for (std::size_t j = 0; j < col.a.size(); ++j)
                out += to_string(r.method) + "," + std::to_string(col.k) + "," + format_number(col.a[j]) + "," + format_number(col.type1[j]) + "\n";
    return out;
}

std::string calibration_json(const std::vector<CalibrationResult>& results) {
    json arr = json::array();
    for (const auto& r : results) {
        json cols = json::array();
        for (const auto& col : r.grid.columns) {
            json c{{"k", col.k}, {"feasible", col.feasible}};
            if (!col.feasible) c["reason"] = col.infeasible_reason;
            else {
                c["alpha_k"] = json_number(col.alpha_k);
                c["avg_power"] = json_number(col.avg_power);
                c["type2_avg"] = json_number(col.type2_avg());
                json power = json::array();
                for (double p : col.power) power.push_back(json_number(p));
                c["power"] = power;
            }
            cols.push_back(c);
        }
        json alt = json::array();
        for (double t : r.grid.alt_grid) alt.push_back(json_number(t));
        arr.push_back({{"method", to_string(r.method)},
                       {"k_hat", r.k_hat},
                       {"alpha_hat", json_number(r.alpha_hat)},
                       {"seed", r.seed},
                       {"B", r.grid.B},
                       {"alt_grid", alt},
                       {"columns", cols}});
    }
    return arr.dump(2) + "\n";
}

std::string summary_csv(const StudyReport& report) {
    const bool iv = report.spec.model == StudyModel::iv;
    std::string out = iv ? "method,median_bias,mad,size\n" : "method,bias,rmse,size\n";
    for (const auto& r : report.rows)
        out += r.label + "," + format_number(r.bias) + "," + format_number(r.spread) + "," + format_number(r.size) + "\n";
    return out;
}

std::string khat_csv(const StudyReport& report) {
    std::string out = "method";
    for (int k = 2; k <= report.k_max; ++k) out += "," + std::to_string(k);
    out += "\n";
    for (const auto& r : report.rows) {
        if (!r.calibrated || r.label == "UNIT") continue;
        out += r.label;
        for (int k = 2; k <= report.k_max; ++k) {
            const auto it = r.khat_freq.find(k);
            out += "," + format_number(it == r.khat_freq.end() ? 0.0 : it->second);
        }
        out += "\n";
    }
    return out;
}

std::string alphahat_csv(const StudyReport& report) {
    std::string out = "method";
    for (double q : alpha_quantile_levels) out += ",q" + format_number(q);
    out += "\n";
    for (const auto& r : report.rows) {
        if (!r.calibrated) continue;
        out += r.label;
        for (double v : r.alpha_quantiles) out += "," + format_number(v);
        out += "\n";
    }
    return out;
}

std::string power_csv(const StudyReport& report) {
    std::string out = "theta";
    for (const auto& r : report.rows) out += "," + r.label;
    out += "\n";
    for (std::size_t t = 0; t < report.theta_grid.size(); ++t) {
        out += format_number(report.theta_grid[t]);
        for (const auto& r : report.rows) out += "," + format_number(r.power[t]);
        out += "\n";
    }
    return out;
}

std::string text_digest(const std::string& text) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
    return hex;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::invalid_input, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return text_digest(ss.str());
}

}  // namespace lcinf
