#pragma once

// JSON conversions for configuration and spec types. Readers accept partial
// objects (missing keys keep their defaults) and reject unknown keys.

#include <json.hpp>

#include "ndnn/datagen.hpp"
#include "ndnn/mlp.hpp"
#include "ndnn/netgraph.hpp"
#include "ndnn/trainer.hpp"

namespace ndnn {

void to_json(nlohmann::json& j, const CorpusConfig& c);
void from_json(const nlohmann::json& j, CorpusConfig& c);

void to_json(nlohmann::json& j, const ContaminationConfig& c);
void from_json(const nlohmann::json& j, ContaminationConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const HeadSpec& h);
void from_json(const nlohmann::json& j, HeadSpec& h);

void to_json(nlohmann::json& j, const MlpSpec& s);
void from_json(const nlohmann::json& j, MlpSpec& s);

void to_json(nlohmann::json& j, const GraphSpec& s);
void from_json(const nlohmann::json& j, GraphSpec& s);

}  // namespace ndnn
