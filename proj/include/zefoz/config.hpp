#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zefoz/hamiltonian.hpp"
#include "zefoz/sensitivity.hpp"
#include "zefoz/zefoz_search.hpp"

namespace zefoz {

// Parsed configuration document. Parsing is strict: unknown keys, duplicate
// keys, missing units and non-finite numbers are all rejected with the JSON
// path of the offender.
struct Config {
    Constants constants;
    std::map<std::string, SpinSystem> systems;
    std::optional<double> optical_offset_mhz;
    NoiseVector noise;           // defaults: 3 uT, isotropic-average
    GridSpec map_window;         // defaults: theta [-10,10] x phi [-90,0], 0.5 deg
    std::uint64_t seed_inhomogeneity = 20180730;
    std::uint64_t seed_synthesis = 655528;
    std::uint64_t source_hash = 0;  // FNV-1a of the file bytes
    std::vector<std::string> warnings;

    const SpinSystem& system(const std::string& name) const;
    bool has_system(const std::string& name) const { return systems.count(name) > 0; }
};

Config parse_config(const std::string& path);
Config parse_config_text(const std::string& text, const std::string& origin = "<memory>");

} // namespace zefoz
