#pragma once

// Flat text configuration: `key = value` lines with optional [section]
// headers; section names prefix the keys ("train.lr"). Resolution order is
// defaults < config file < command-line overrides, and every command dumps
// the resolved map next to its outputs so any run can be re-created.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace recongen {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingPrerequisite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class RunConfig {
public:
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require_str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing required config key: " + key);
        return it->second;
    }

    int get_int(const std::string& key, int fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoi(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " is not an integer: " + it->second);
        }
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " is not a number: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
        if (it->second == "false" || it->second == "0" || it->second == "no") return false;
        throw ConfigError("config key " + key + " is not a boolean: " + it->second);
    }

    uint64_t get_seed(const std::string& key, uint64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoull(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " is not a seed: " + it->second);
        }
    }

    // "key=value" (section-qualified key), as passed on the command line.
    void apply_override(const std::string& assignment) {
        size_t eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("override must look like key=value: " + assignment);
        }
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    void load_file(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file: " + path.string());
        std::string line, section;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            if (t.front() == '[' && t.back() == ']') {
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            size_t eq = t.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                                  ": expected key = value");
            }
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            set(section.empty() ? key : section + "." + key, value);
        }
    }

    void dump(std::ostream& os) const {
        for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    }

    void write_snapshot(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        std::ofstream os(dir / "config_used.txt");
        if (!os) throw std::runtime_error("cannot write config snapshot in " + dir.string());
        dump(os);
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? "" : s.substr(a, b - a + 1);
    }

    std::map<std::string, std::string> values_;
};

}  // namespace recongen
