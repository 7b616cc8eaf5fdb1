#pragma once

// Minimal CSV reading/writing. Numbers are written in shortest round-trip form so
// files re-read bit-exactly and repeated runs are byte-identical.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "abmcal/common.hpp"
#include "abmcal/wealth_model.hpp"

namespace abmcal {

std::string format_number(double v);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(std::string_view name) const;  // -1 when absent
};

std::vector<std::string> split_csv_line(const std::string& line);
CsvTable read_csv(const std::filesystem::path& path);
double parse_number(const std::string& field, const std::string& where);

/// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// Summary traces and validation data: header `stat,t1,...,tT`, one row per statistic.
std::string summary_trace_csv(const SummaryTrace& trace);
SummaryTrace read_summary_trace(const std::filesystem::path& path);

// Agent traces: header `agent_id,attr,t1,...,tT`, one row per (agent, attribute).
std::string agent_trace_csv(const AgentTrace& trace);
AgentTrace read_agent_trace(const std::filesystem::path& path);

// Latent codes `agent_id,h1..hH` and assignments `agent_id,cluster`.
std::string codes_csv(const Matrix& codes);
Matrix read_codes(const std::filesystem::path& path);
std::string assignment_csv(const std::vector<int>& clusters);
std::vector<int> read_assignment(const std::filesystem::path& path);

}  // namespace abmcal
