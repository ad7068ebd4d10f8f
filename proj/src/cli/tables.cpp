#include <cmath>
#include <cstdio>
#include <sstream>

#include "mobilab/cli.hpp"
#include "mobilab/csv.hpp"

namespace mobilab::cli {

std::string cell_text(const Cell& c, bool rounded) {
    if (std::holds_alternative<std::monostate>(c)) return "";
    if (const auto* s = std::get_if<std::string>(&c)) return *s;
    if (const auto* n = std::get_if<long long>(&c)) return std::to_string(*n);
    double v = std::get<double>(c);
    if (std::isnan(v)) return "";
    if (!rounded) return csv::format_double(v);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    std::string s = buf;
    if (s == "-0.000") s = "0.000";
    return s;
}

std::string to_csv(const Table& t) {
    std::ostringstream out;
    csv::write_row(out, t.columns);
    for (const auto& r : t.rows) {
        std::vector<std::string> f;
        f.reserve(r.size());
        for (const auto& c : r) f.push_back(cell_text(c, false));
        csv::write_row(out, f);
    }
    return out.str();
}

namespace {

std::string md_escape(std::string s) {
    std::string out;
    for (char ch : s) {
        if (ch == '|') out += "\\|";
        else if (ch == '\n') out += ' ';
        else out += ch;
    }
    return out;
}

}  // namespace

std::string to_markdown(const Table& t) {
    if (t.markdown) return *t.markdown;
    std::ostringstream out;
    if (!t.title.empty()) out << "### " << t.title << "\n\n";
    out << "|";
    for (const auto& c : t.columns) out << ' ' << md_escape(c) << " |";
    out << "\n|";
    for (std::size_t k = 0; k < t.columns.size(); ++k) out << " --- |";
    out << "\n";
    for (const auto& r : t.rows) {
        out << "|";
        for (const auto& c : r) out << ' ' << md_escape(cell_text(c, true)) << " |";
        out << "\n";
    }
    if (!t.notes.empty()) {
        out << "\n";
        for (const auto& n : t.notes) out << "- " << n << "\n";
    }
    return out.str();
}

}  // namespace mobilab::cli
