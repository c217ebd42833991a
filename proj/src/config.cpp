#include "demorl/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace demorl {

namespace {

std::string strip(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

ConfigFile ConfigFile::parse_string(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error("config: bad section header at line " +
                                         std::to_string(line_no));
            section = strip(line.substr(1, line.size() - 2));
            cfg.sections_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: expected key = value at line " +
                                     std::to_string(line_no));
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("config: empty key at line " + std::to_string(line_no));
        if (cfg.sections_[section].count(key))
            throw std::runtime_error("config: duplicate key '" + key + "' in [" +
                                     section + "]");
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
}

std::string ConfigFile::text(const std::string& section, const std::string& key) const {
    if (!has(section, key))
        throw std::runtime_error("config: missing key '" + key + "' in [" + section + "]");
    consumed_.insert(section + "." + key);
    return sections_.at(section).at(key);
}

std::string ConfigFile::text_or(const std::string& section, const std::string& key,
                                const std::string& fallback) const {
    return has(section, key) ? text(section, key) : fallback;
}

double ConfigFile::number(const std::string& section, const std::string& key) const {
    const std::string raw = text(section, key);
    try {
        std::size_t used = 0;
        const double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' in [" + section +
                                 "] is not a number: '" + raw + "'");
    }
}

double ConfigFile::number_or(const std::string& section, const std::string& key,
                             double fallback) const {
    return has(section, key) ? number(section, key) : fallback;
}

bool ConfigFile::flag_or(const std::string& section, const std::string& key,
                         bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string raw = text(section, key);
    if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
    if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
    throw std::runtime_error("config: key '" + key + "' in [" + section +
                             "] is not a boolean: '" + raw + "'");
}

std::vector<double> ConfigFile::number_list_or(const std::string& section,
                                               const std::string& key,
                                               const std::vector<double>& fallback) const {
    if (!has(section, key)) return fallback;
    const std::string raw = text(section, key);
    std::vector<double> out;
    std::string item;
    std::istringstream in(raw);
    while (std::getline(in, item, ',')) {
        item = strip(item);
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw std::runtime_error("config: bad list entry '" + item + "' for key '" +
                                     key + "'");
        }
    }
    if (out.empty())
        throw std::runtime_error("config: empty list for key '" + key + "'");
    return out;
}

void ConfigFile::require_all_consumed() const {
    for (const auto& [section, kv] : sections_)
        for (const auto& [key, value] : kv)
            if (!consumed_.count(section + "." + key))
                throw std::runtime_error("config: unknown key '" + key + "' in [" +
                                         section + "]");
}

}  // namespace demorl
