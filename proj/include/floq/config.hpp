#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "floq/errors.hpp"
#include "floq/model.hpp"
#include "floq/util.hpp"
#include "floq/version.hpp"

namespace floq {

/// Plain-text run configuration: "[section]" headers with key = value lines,
/// '#' comments. Keys are stored as "section.key". Serialization is
/// canonical (sorted keys, normalized number text), so the digest is stable.
class RunConfig {
public:
    RunConfig() = default;

    static RunConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("config: cannot open '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return from_text(ss.str());
    }

    static RunConfig from_text(const std::string& text) {
        RunConfig cfg;
        std::string section;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ValidationError("config line " + std::to_string(lineno) + ": unterminated section");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
            cfg.set(section.empty() ? key : section + "." + key, value);
        }
        return cfg;
    }

    void set(const std::string& dotted_key, const std::string& value) { kv_[dotted_key] = value; }

    /// "--set section.key=value" override.
    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos)
            throw ValidationError("--set expects key=value, got '" + assignment + "'");
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ValidationError("config: key '" + key + "' expects a number, got '" + it->second + "'");
        }
    }

    long long get_int(const std::string& key, long long fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ValidationError("config: key '" + key + "' expects an integer, got '" + it->second + "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ValidationError("config: key '" + key + "' expects true/false, got '" + it->second + "'");
    }

    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        std::vector<int> out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            try {
                out.push_back(std::stoi(item));
            } catch (const std::exception&) {
                throw ValidationError("config: key '" + key + "' expects integers, got '" + item + "'");
            }
        }
        return out;
    }

    /// Model parameters from the [model] section.
    ModelParams model() const {
        const double t = get_double("model.t", std::sqrt(0.5));
        const double alpha = get_double("model.alpha", 0.0);
        const double theta = get_double("model.theta", 0.0);
        const double lambda = get_double("model.lambda", 0.0);
        BetaValue beta = BetaValue::parse(get_str("model.beta", "dyadic:1"));
        return make_params(t, alpha, theta, lambda, std::move(beta));
    }

    /// Rejects keys outside the allowed set, naming the valid ones. Keys in
    /// other known sections are tolerated (one config file can serve several
    /// subcommands); keys inside the owned sections or in unknown sections
    /// must match exactly.
    void validate_keys(const std::set<std::string>& allowed,
                       const std::set<std::string>& other_known_sections = {}) const {
        for (const auto& [k, v] : kv_) {
            if (allowed.count(k)) continue;
            const auto dot = k.find('.');
            const std::string section = dot == std::string::npos ? "" : k.substr(0, dot);
            if (other_known_sections.count(section)) continue;
            std::string msg = "config: unknown key '" + k + "'. Valid keys:";
            for (const auto& a : allowed) msg += " " + a;
            throw ValidationError(msg);
        }
    }

    /// Copy with one key removed (used for resume-compatibility digests).
    RunConfig without(const std::string& key) const {
        RunConfig c = *this;
        c.kv_.erase(key);
        return c;
    }

    /// Copy holding only the keys of the given sections; digests are taken
    /// over this view so edits to unrelated sections do not disturb them.
    RunConfig restricted(const std::set<std::string>& sections) const {
        RunConfig c;
        for (const auto& [k, v] : kv_) {
            const auto dot = k.find('.');
            const std::string section = dot == std::string::npos ? "" : k.substr(0, dot);
            if (sections.count(section)) c.kv_[k] = v;
        }
        return c;
    }

    /// Canonical serialization: sorted dotted keys, one per line.
    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : kv_) out += k + "=" + v + "\n";
        return out;
    }

    /// Digest covers the canonical config, the tool version and a salt
    /// string (the subcommand), so different experiments never collide.
    std::string digest(const std::string& salt = "") const {
        return hex64(fnv1a64(std::string(kVersion) + "\n" + salt + "\n" + canonical()));
    }

    const std::map<std::string, std::string>& raw() const { return kv_; }

private:
    static std::string trim(const std::string& s) {
        std::size_t b = 0, e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        return s.substr(b, e - b);
    }

    std::map<std::string, std::string> kv_;
};

} // namespace floq
