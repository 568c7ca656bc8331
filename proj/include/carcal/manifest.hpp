#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "carcal/io.hpp"

namespace carcal {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kManifestSchemaVersion = 1;

/// One per output directory: what ran, with which inputs and seed.
/// wall_time is the only field that varies between identical reruns.
struct RunManifest {
    std::string subcommand;
    nlohmann::json config;
    std::map<std::string, std::string> input_digests;  // path -> fnv1a64
    std::uint64_t seed = 0;
    double wall_time = 0.0;

    void add_input(const std::filesystem::path& path) {
        input_digests[path.string()] = fnv1a_hex(read_file(path));
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema_version"] = kManifestSchemaVersion;
        j["tool_version"] = kToolVersion;
        j["subcommand"] = subcommand;
        j["config"] = config;
        j["input_digests"] = input_digests;
        j["seed"] = seed;
        j["wall_time"] = wall_time;
        return j;
    }
};

inline void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
    std::filesystem::create_directories(dir);
    write_file(dir / "manifest.json", m.to_json().dump(2) + "\n");
}

}  // namespace carcal
