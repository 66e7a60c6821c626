#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "behrt/errors.hpp"

namespace behrt {

// Flat `key = value` text; `#` starts a comment. Every key must be consumed,
// so a typo is reported instead of silently ignored.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::istream& in, const std::string& source = "config") {
        KeyValueConfig cfg;
        cfg.source_ = source;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto eq = line.find('=');
            const std::string key = trim(line.substr(0, eq));
            if (eq == std::string::npos) {
                if (key.empty()) continue;
                throw FormatError(source + ": expected key = value", line_no);
            }
            if (key.empty()) throw FormatError(source + ": empty key", line_no);
            if (!cfg.values_.emplace(key, trim(line.substr(eq + 1))).second) {
                throw FormatError(source + ": duplicate key '" + key + "'", line_no);
            }
        }
        return cfg;
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        return parse(in, path);
    }

    static KeyValueConfig from_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get(const std::string& key, const std::string& fallback) const {
        used_.insert(key);
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    template <typename Number>
    Number get_number(const std::string& key, Number fallback) const {
        used_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const std::string& s = it->second;
        if constexpr (std::is_floating_point_v<Number>) {
            try {
                std::size_t pos = 0;
                const double v = std::stod(s, &pos);
                if (pos != s.size()) throw std::invalid_argument(s);
                return static_cast<Number>(v);
            } catch (const std::exception&) {
                throw ConfigError(source_ + ": '" + key + "' is not a number: " + s);
            }
        } else {
            Number v{};
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || p != s.data() + s.size()) {
                throw ConfigError(source_ + ": '" + key + "' is not an integer: " + s);
            }
            return v;
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const std::string v = get(key, fallback ? "true" : "false");
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError(source_ + ": '" + key + "' must be true or false");
    }

    void reject_unused() const {
        for (const auto& [k, v] : values_) {
            if (!used_.count(k)) throw ConfigError(source_ + ": unknown key '" + k + "'");
        }
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::string source_ = "config";
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

}  // namespace behrt
