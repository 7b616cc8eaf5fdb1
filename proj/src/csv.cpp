#include "abmcal/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace abmcal {

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

int CsvTable::column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == name) return static_cast<int>(j);
    }
    return -1;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(field);
            field.clear();
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    out.push_back(field);
    return out;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    CsvTable table;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (table.header.empty()) {
            table.header = std::move(fields);
            continue;
        }
        require(fields.size() == table.header.size(), ErrorKind::io,
                path.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(table.header.size()) + " fields, got " +
                    std::to_string(fields.size()));
        table.rows.push_back(std::move(fields));
    }
    require(!table.header.empty(), ErrorKind::io, path.string() + ": empty CSV");
    return table;
}

double parse_number(const std::string& field, const std::string& where) {
    double v = 0.0;
    const char* first = field.data();
    const char* last = first + field.size();
    const auto res = std::from_chars(first, last, v);
    require(res.ec == std::errc() && res.ptr == last, ErrorKind::io,
            where + ": not a number: '" + field + "'");
    return v;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorKind::io, "cannot write " + tmp.string());
        out << contents;
        require(static_cast<bool>(out), ErrorKind::io, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string summary_trace_csv(const SummaryTrace& trace) {
    std::ostringstream os;
    os << "stat";
    for (int t = 1; t <= trace.horizon(); ++t) os << ",t" << t;
    os << '\n';
    for (int s = 0; s < trace.num_stats(); ++s) {
        os << trace.names[static_cast<std::size_t>(s)];
        for (int t = 0; t < trace.horizon(); ++t) os << ',' << format_number(trace.stats(s, t));
        os << '\n';
    }
    return os.str();
}

SummaryTrace read_summary_trace(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    require(table.header.size() >= 2 && table.header[0] == "stat", ErrorKind::io,
            path.string() + ": header must be stat,t1,...,tT");
    const auto T = static_cast<Eigen::Index>(table.header.size() - 1);
    SummaryTrace trace;
    trace.stats.resize(static_cast<Eigen::Index>(table.rows.size()), T);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        trace.names.push_back(table.rows[r][0]);
        for (Eigen::Index t = 0; t < T; ++t) {
            trace.stats(static_cast<Eigen::Index>(r), t) =
                parse_number(table.rows[r][static_cast<std::size_t>(t + 1)],
                             path.string() + ":" + std::to_string(r + 2));
        }
    }
    return trace;
}

std::string agent_trace_csv(const AgentTrace& trace) {
    std::ostringstream os;
    const int T = trace.horizon();
    os << "agent_id,attr";
    for (int t = 1; t <= T; ++t) os << ",t" << t;
    os << '\n';
    for (int a = 0; a < trace.num_agents(); ++a) {
        for (int k = 0; k < trace.attributes; ++k) {
            os << a << ',' << k;
            for (int t = 0; t < T; ++t) os << ',' << format_number(trace.values(a, k * T + t));
            os << '\n';
        }
    }
    return os.str();
}

AgentTrace read_agent_trace(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    require(table.header.size() >= 3 && table.header[0] == "agent_id" && table.header[1] == "attr",
            ErrorKind::io, path.string() + ": header must be agent_id,attr,t1,...,tT");
    const auto T = static_cast<int>(table.header.size() - 2);
    int max_agent = -1;
    int max_attr = -1;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = path.string() + ":" + std::to_string(r + 2);
        max_agent = std::max(max_agent, static_cast<int>(parse_number(table.rows[r][0], where)));
        max_attr = std::max(max_attr, static_cast<int>(parse_number(table.rows[r][1], where)));
    }
    AgentTrace trace;
    trace.attributes = max_attr + 1;
    trace.values = Matrix::Zero(max_agent + 1, trace.attributes * T);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = path.string() + ":" + std::to_string(r + 2);
        const int a = static_cast<int>(parse_number(table.rows[r][0], where));
        const int k = static_cast<int>(parse_number(table.rows[r][1], where));
        for (int t = 0; t < T; ++t) {
            trace.values(a, k * T + t) = parse_number(table.rows[r][static_cast<std::size_t>(t + 2)], where);
        }
    }
    return trace;
}

std::string codes_csv(const Matrix& codes) {
    std::ostringstream os;
    os << "agent_id";
    for (Eigen::Index h = 1; h <= codes.cols(); ++h) os << ",h" << h;
    os << '\n';
    for (Eigen::Index a = 0; a < codes.rows(); ++a) {
        os << a;
        for (Eigen::Index h = 0; h < codes.cols(); ++h) os << ',' << format_number(codes(a, h));
        os << '\n';
    }
    return os.str();
}

Matrix read_codes(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    require(table.header.size() >= 2 && table.header[0] == "agent_id", ErrorKind::io,
            path.string() + ": header must be agent_id,h1..hH");
    Matrix codes(static_cast<Eigen::Index>(table.rows.size()),
                 static_cast<Eigen::Index>(table.header.size() - 1));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = path.string() + ":" + std::to_string(r + 2);
        for (Eigen::Index h = 0; h < codes.cols(); ++h) {
            codes(static_cast<Eigen::Index>(r), h) =
                parse_number(table.rows[r][static_cast<std::size_t>(h + 1)], where);
        }
    }
    return codes;
}

std::string assignment_csv(const std::vector<int>& clusters) {
    std::ostringstream os;
    os << "agent_id,cluster\n";
    for (std::size_t a = 0; a < clusters.size(); ++a) os << a << ',' << clusters[a] << '\n';
    return os.str();
}

std::vector<int> read_assignment(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    const int col = table.column("cluster");
    require(col >= 0, ErrorKind::io, path.string() + ": missing cluster column");
    std::vector<int> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        out.push_back(static_cast<int>(parse_number(table.rows[r][static_cast<std::size_t>(col)],
                                                    path.string() + ":" + std::to_string(r + 2))));
    }
    return out;
}

}  // namespace abmcal
