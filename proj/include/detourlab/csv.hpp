// CSV emission with a versioned schema line. Every table starts with
// `schema=<name>,v=<version>`; readers reject files whose schema or version
// they do not know.
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "detourlab/common.hpp"

namespace detourlab {

class CsvWriter {
  public:
    CsvWriter(std::ostream& os, const std::string& schema, int version,
              const std::vector<std::string>& columns)
        : os_(os), columns_(columns.size()) {
        os_ << "schema=" << schema << ",v=" << version << '\n';
        for (std::size_t i = 0; i < columns.size(); ++i)
            os_ << columns[i] << (i + 1 < columns.size() ? "," : "\n");
    }

    template <typename... Ts>
    void row(const Ts&... vals) {
        if (sizeof...(vals) != columns_) throw ContractViolation("csv: wrong column count");
        std::size_t i = 0;
        ((os_ << vals << (++i < sizeof...(vals) ? "," : "\n")), ...);
    }

  private:
    std::ostream& os_;
    std::size_t columns_;
};

// Validates the version line and returns the parsed rows (no quoting; the
// writers here never emit commas inside fields).
struct CsvTable {
    std::string schema;
    int version = 0;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(std::istream& is, const std::string& expect_schema, int expect_version) {
    CsvTable t;
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("csv: empty file");
    if (line.rfind("schema=", 0) != 0) throw ConfigError("csv: missing schema line");
    const auto comma = line.find(",v=");
    if (comma == std::string::npos) throw ConfigError("csv: missing version tag");
    t.schema = line.substr(7, comma - 7);
    t.version = std::stoi(line.substr(comma + 3));
    if (t.schema != expect_schema)
        throw ConfigError("csv: expected schema " + expect_schema + ", found " + t.schema);
    if (t.version != expect_version)
        throw ConfigError("csv: unsupported version " + std::to_string(t.version) + " of " + t.schema);

    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        return out;
    };
    if (std::getline(is, line)) t.columns = split(line);
    while (std::getline(is, line))
        if (!line.empty()) t.rows.push_back(split(line));
    return t;
}

inline CsvTable read_csv_file(const std::string& path, const std::string& schema, int version) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open csv: " + path);
    return read_csv(is, schema, version);
}

}  // namespace detourlab
