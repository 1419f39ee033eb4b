#pragma once

// Flat `key = value` config files with '#' comments. Unknown keys are errors.

#include <optional>
#include <string>
#include <vector>

#include "litevae/trainer.hpp"

namespace litevae {

struct ConfigMap {
    std::vector<std::pair<std::string, std::string>> entries;

    static ConfigMap parse_file(const std::string& path);
    static ConfigMap parse_string(const std::string& text, const std::string& origin = "<string>");

    const std::string* find(const std::string& key) const {
        for (const auto& [k, v] : entries)
            if (k == key) return &v;
        return nullptr;
    }
};

// Validates every key against the known schema; throws ConfigError on unknown
// keys or unparsable values.
TrainConfig parse_train_config(const ConfigMap& cfg);

// Canonical dump: every key in schema order. parse(dump(c)) == c.
std::string dump_train_config(const TrainConfig& cfg);

// Key listing with defaults and descriptions for --help-config.
std::string config_help();

}  // namespace litevae
