#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sf {

class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 when absent
};

// Plain comma-separated UTF-8 with a header row; no quoting. Malformed rows
// raise CsvError naming the 1-based line number.
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin);

}  // namespace sf
