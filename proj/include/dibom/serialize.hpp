#pragma once

// File formats: model and dataset documents (JSON, full-precision numbers,
// bit-exact round trip), TrainTrace CSV, and atomic file writes.

#include "dibom/datagen.hpp"
#include "dibom/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace dibom {

using json = nlohmann::ordered_json;

json layer_to_json(const Layer& layer);
Layer layer_from_json(const json& j);

json circuit_to_json(const Circuit& c);
Circuit circuit_from_json(const json& j);

json model_to_json(const TrainableModel& model);
TrainableModel model_from_json(const json& j);

json conditional_to_json(const ConditionalModel& model);
ConditionalModel conditional_from_json(const json& j);

json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const json& j);

std::string intrinsic_kind_name(IntrinsicKind kind);
IntrinsicKind intrinsic_kind_from_name(const std::string& name);
std::string model_tag_name(ModelKind::Tag tag);
ModelKind::Tag model_tag_from_name(const std::string& name);

/// Header `iter,train_loss,test_loss,wall_ms`; losses at full precision.
std::string trace_to_csv(const TrainTrace& trace);

/// Writes via a temp file + rename so partially written outputs never
/// appear under the final name.
void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

void save_json(const json& j, const std::filesystem::path& path);
json load_json(const std::filesystem::path& path);

/// FNV-1a over the serialized bytes; used to record which dataset a run saw.
std::uint64_t content_hash(const std::string& bytes);

} // namespace dibom
