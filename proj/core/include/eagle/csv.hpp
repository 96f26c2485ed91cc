#pragma once

#include <istream>
#include <string>
#include <vector>

namespace eagle::csv {

// Minimal RFC-4180-ish reader: comma separated, double-quoted fields with
// embedded commas/newlines/escaped quotes. Bytes that are not valid UTF-8
// are passed through untouched (lossy handling happens at field use sites).
class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    // Reads one logical record. Returns false on clean EOF.
    bool next(std::vector<std::string>& fields);

private:
    std::istream& in_;
};

std::string escape_field(const std::string& field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace eagle::csv
