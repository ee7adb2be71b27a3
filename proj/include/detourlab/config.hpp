// Declarative text config: `[section]` headers with `key = value` lines,
// `#` or `;` comments. Typed getters fall back to the built-in defaults, so a
// config file only needs the keys it wants to change.
#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "detourlab/common.hpp"

namespace detourlab {

class ConfigFile {
  public:
    ConfigFile() = default;

    static ConfigFile parse_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file: " + path);
        return parse(is, path);
    }

    static ConfigFile parse(std::istream& is, const std::string& origin = "<stream>") {
        ConfigFile cfg;
        std::string line, section;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find_first_of("#;");
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError(origin + ":" + std::to_string(lineno) + ": bad section header");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            cfg.values_[section + "." + key] = value;
        }
        return cfg;
    }

    bool has(const std::string& section, const std::string& key) const {
        return values_.count(section + "." + key) > 0;
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
        const auto it = values_.find(section + "." + key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + section + "." + key + " is not a number: " + it->second);
        }
    }

    long long get_int(const std::string& section, const std::string& key, long long fallback) const {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + section + "." + key + " is not an integer: " + it->second);
        }
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
        if (it->second == "false" || it->second == "0" || it->second == "no") return false;
        throw ConfigError("config key " + section + "." + key + " is not a boolean: " + it->second);
    }

  private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

}  // namespace detourlab
