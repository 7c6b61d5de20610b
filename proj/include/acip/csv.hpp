#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

namespace acip {

// Round-trip float formatting for CSV output.
inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(std::ostream& os, const std::vector<std::string>& header) : os_(os) { row(header); }

    template <class... Ts>
    void write(const Ts&... cells) {
        bool first = true;
        ((emit(cells, first)), ...);
        os_ << '\n';
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
        os_ << '\n';
    }

private:
    void emit(double v, bool& first) { sep(first); os_ << fmt_double(v); }
    void emit(const std::string& s, bool& first) { sep(first); os_ << s; }
    void emit(const char* s, bool& first) { sep(first); os_ << s; }
    template <class I>
    void emit(I v, bool& first) requires std::is_integral_v<I> { sep(first); os_ << v; }
    void sep(bool& first) {
        if (!first) os_ << ',';
        first = false;
    }

    std::ostream& os_;
};

}  // namespace acip
