#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace demorl {

// Flat sectioned key = value text. '#' starts a comment, section headers
// are [name], keys before any header live in the "" section. Unknown keys
// are hard errors at the consumer level via require_all_consumed().
class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    std::string text(const std::string& section, const std::string& key) const;
    std::string text_or(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
    double number(const std::string& section, const std::string& key) const;
    double number_or(const std::string& section, const std::string& key,
                     double fallback) const;
    bool flag_or(const std::string& section, const std::string& key,
                 bool fallback) const;
    std::vector<double> number_list_or(const std::string& section,
                                       const std::string& key,
                                       const std::vector<double>& fallback) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

    // Throws if any parsed key was never read (typo guard).
    void require_all_consumed() const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
    mutable std::set<std::string> consumed_;  // "section.key"
};

}  // namespace demorl
