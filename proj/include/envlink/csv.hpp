#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace envlink {

// Deterministic number formatting for CSV output (same bits, same bytes).
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}
inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(std::uint64_t v) { return std::to_string(v); }
inline std::string fmt(const std::string& v) { return v; }
inline std::string fmt(const char* v) { return v; }

// Minimal CSV writer. Every file starts with '#'-prefixed echo lines (the run
// configuration) followed by the header row.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& echo_lines,
              const std::string& header)
        : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open output file: " + path);
        for (const auto& line : echo_lines) out_ << "# " << line << "\n";
        out_ << header << "\n";
    }

    template <typename... Ts>
    void row(const Ts&... cells) {
        bool first = true;
        ((out_ << (first ? "" : ",") << fmt(cells), first = false), ...);
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

}  // namespace envlink
