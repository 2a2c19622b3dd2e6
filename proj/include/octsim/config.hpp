#pragma once

#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace octsim {

// Minimal INI-style config reader: [section] headers, key = value pairs,
// comments with '#' or ';'. Values are kept as strings; typed accessors parse
// on demand. Unknown keys are the caller's job to reject.
class IniFile {
public:
    static IniFile parse(std::istream& in) {
        IniFile ini;
        std::string line;
        std::string section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find_first_of("#;");
            if (hash != std::string::npos) line.erase(hash);
            const std::string t = trim(line);
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw std::runtime_error("config line " + std::to_string(lineno) + ": unterminated section");
                section = trim(t.substr(1, t.size() - 2));
                ini.sections_[section];
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(t.substr(0, eq));
            if (key.empty())
                throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
            ini.sections_[section][key] = trim(t.substr(eq + 1));
        }
        return ini;
    }

    static IniFile parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    const std::map<std::string, std::map<std::string, std::string>>& sections() const { return sections_; }

    bool has(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key) > 0;
    }

    const std::string& get(const std::string& section, const std::string& key) const {
        return sections_.at(section).at(key);
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    static double to_double(const std::string& v, const std::string& where) {
        try {
            std::size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw std::runtime_error("config: bad number '" + v + "' for " + where);
        }
    }

    static long long to_int(const std::string& v, const std::string& where) {
        try {
            std::size_t pos = 0;
            const long long d = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw std::runtime_error("config: bad integer '" + v + "' for " + where);
        }
    }

    static bool to_bool(const std::string& v, const std::string& where) {
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw std::runtime_error("config: bad boolean '" + v + "' for " + where);
    }

    static std::vector<std::string> split_list(const std::string& v) {
        std::vector<std::string> out;
        std::string cur;
        for (const char c : v) {
            if (c == ',') {
                out.push_back(trim(cur));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        out.push_back(trim(cur));
        return out;
    }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace octsim
