#include "eagle/csv.hpp"

#include <ostream>

namespace eagle::csv {

bool Reader::next(std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    int c;
    while ((c = in_.get()) != EOF) {
        any = true;
        char ch = static_cast<char>(c);
        if (in_quotes) {
            if (ch == '"') {
                if (in_.peek() == '"') {
                    in_.get();
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch == '\r') {
            if (in_.peek() == '\n') in_.get();
            fields.push_back(std::move(field));
            return true;
        } else if (ch == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(ch);
        }
    }
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

std::string escape_field(const std::string& field) {
    bool needs = field.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs) return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out += "\"\"";
        else out.push_back(ch);
    }
    out += "\"";
    return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << escape_field(fields[i]);
    }
    out << '\n';
}

}  // namespace eagle::csv
