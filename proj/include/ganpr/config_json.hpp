#pragma once

#include <json.hpp>

#include "ganpr/nets.hpp"

namespace ganpr {

inline nlohmann::json to_json(const GeneratorConfig& c) {
    return {{"input_size", c.input_size},
            {"input_channels", c.input_channels},
            {"encoder_channels", c.encoder_channels},
            {"kernel", c.kernel},
            {"stride", c.stride},
            {"leaky_slope", c.leaky_slope},
            {"skip_connections", c.skip_connections}};
}

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    c.input_size = j.at("input_size").get<int>();
    c.input_channels = j.at("input_channels").get<int>();
    c.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
    c.kernel = j.at("kernel").get<int>();
    c.stride = j.at("stride").get<int>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.skip_connections = j.at("skip_connections").get<bool>();
    return c;
}

inline nlohmann::json to_json(const DiscriminatorConfig& c) {
    return {{"input_size", c.input_size},
            {"input_channels", c.input_channels},
            {"encoder_channels", c.encoder_channels},
            {"kernel", c.kernel},
            {"stride", c.stride},
            {"leaky_slope", c.leaky_slope},
            {"feature_dim", c.feature_dim}};
}

inline DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
    DiscriminatorConfig c;
    c.input_size = j.at("input_size").get<int>();
    c.input_channels = j.at("input_channels").get<int>();
    c.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
    c.kernel = j.at("kernel").get<int>();
    c.stride = j.at("stride").get<int>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.feature_dim = j.at("feature_dim").get<int>();
    return c;
}

}  // namespace ganpr
