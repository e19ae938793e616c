#pragma once

// JSON mappings for configuration types. Readers reject unknown keys and
// fill missing keys from defaults.

#include <json.hpp>
#include <string>

#include "sinddm/denoiser.hpp"
#include "sinddm/train_config.hpp"

namespace sinddm {

using Json = nlohmann::json;

Json to_json(const DenoiserSpec& spec);
DenoiserSpec denoiser_spec_from_json(const Json& j);

Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j);

/// Throws InvalidArgument naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where);

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace sinddm
