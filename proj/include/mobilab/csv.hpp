#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace mobilab::csv {

// One parsed record plus the physical line it started on (1-based).
struct Record {
    std::vector<std::string> fields;
    std::size_t line = 0;
};

// RFC 4180 reader: quoted fields, doubled quotes, embedded newlines and
// CRLF endings. Returns false at end of input.
class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}
    bool next(Record& out);

private:
    std::istream& in_;
    std::size_t line_ = 0;
};

std::string quote(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest representation that parses back to the same double.
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

}  // namespace mobilab::csv
