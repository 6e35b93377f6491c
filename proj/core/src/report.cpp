#include <cstdio>
#include <fstream>
#include <sstream>

#include "icl/error.hpp"
#include "icl/metrics.hpp"

namespace icl {

namespace {

std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

} // namespace

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) rows.push_back(to_json(row));
    return {{"fingerprint", r.fingerprint}, {"partial", r.partial}, {"aggregates", to_json(r.aggregates)},
            {"rows", rows}};
}

EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.fingerprint = j.value("fingerprint", "");
    r.partial = j.value("partial", false);
    r.aggregates = aggregates_from_json(j.at("aggregates"));
    for (const auto& row : j.at("rows")) r.rows.push_back(query_result_from_json(row));
    return r;
}

EvalReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report " + path.string());
    try {
        return report_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

ReportFormat report_format_from_string(std::string_view s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    if (s == "plotdata") return ReportFormat::plotdata;
    throw ValidationError("unknown report format '" + std::string(s) + "' (json, csv, plotdata)");
}

std::string_view to_string(ReportFormat f) {
    switch (f) {
    case ReportFormat::json: return "json";
    case ReportFormat::csv: return "csv";
    case ReportFormat::plotdata: return "plotdata";
    }
    return "?";
}

std::string render_csv(const Aggregates& a, std::string_view metric) {
    const bool copy = metric == "copy_rate";
    if (!copy && metric != "accuracy") throw ValidationError("unknown metric '" + std::string(metric) + "'");
    const std::vector<int> shots = a.shots.empty() ? std::vector<int>{4, 8, 16} : a.shots;
    std::ostringstream out;
    out << "strategy";
    for (int s : shots) out << ',' << s << "-shot";
    out << ",average\n";
    for (const auto& arm : a.arms) {
        out << csv_field(arm.arm);
        for (int s : shots) {
            out << ',';
            auto it = arm.cells.find(s);
            if (it != arm.cells.end() && it->second.count > 0)
                out << fixed2(copy ? it->second.copy_rate : it->second.accuracy);
        }
        out << ',';
        const auto& avg = copy ? arm.average_copy_rate : arm.average_accuracy;
        if (avg) out << fixed2(*avg);
        out << '\n';
    }
    return out.str();
}

std::string render_plotdata(const Aggregates& a) {
    std::ostringstream out;
    out << "strategy,shots,metric,value\n";
    for (const auto& arm : a.arms) {
        for (const auto& [s, cell] : arm.cells) {
            if (cell.count == 0) continue;
            out << csv_field(arm.arm) << ',' << s << ",accuracy," << fixed2(cell.accuracy) << '\n';
            out << csv_field(arm.arm) << ',' << s << ",copy_rate," << fixed2(cell.copy_rate) << '\n';
        }
        if (arm.average_accuracy)
            out << csv_field(arm.arm) << ",average,accuracy," << fixed2(*arm.average_accuracy) << '\n';
        if (arm.average_copy_rate)
            out << csv_field(arm.arm) << ",average,copy_rate," << fixed2(*arm.average_copy_rate) << '\n';
    }
    return out.str();
}

std::string render_json(const EvalReport& r) { return to_json(r).dump(2) + "\n"; }

void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path) {
    std::string body;
    switch (format) {
    case ReportFormat::json: body = render_json(report); break;
    case ReportFormat::csv: body = render_csv(report.aggregates); break;
    case ReportFormat::plotdata: body = render_plotdata(report.aggregates); break;
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp);
        out << body;
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::map<std::pair<std::string, std::string>, double> parse_csv_grid(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty csv");
    const auto header = split_csv_line(line);
    if (header.empty() || header[0] != "strategy") throw ParseError("csv header must start with 'strategy'");
    std::map<std::pair<std::string, std::string>, double> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) throw ParseError("csv row width differs from header: " + line);
        for (std::size_t i = 1; i < fields.size(); ++i)
            if (!fields[i].empty()) out[{fields[0], header[i]}] = std::stod(fields[i]);
    }
    return out;
}

} // namespace icl
