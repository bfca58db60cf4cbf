#pragma once

// Artifact persistence. Binary parameter records use the "APD1" format:
// magic bytes "APD1", a 32-bit little-endian length, then the payload as
// little-endian 32-bit floats. Training math stays in 64-bit; files carry
// 32-bit payloads and are widened on ingestion. Metadata rides in JSON
// sidecars; tables are plain CSV with a header row.

#include <json.hpp>
#include <string>
#include <vector>

#include "apd/attacks.hpp"
#include "apd/gan.hpp"
#include "apd/mog.hpp"
#include "apd/sampler.hpp"
#include "apd/uncertainty.hpp"

namespace apd::io {

using nlohmann::json;

// ---- APD1 parameter records ----
void write_param_record(std::ostream& out, const Vec& v);
Vec read_param_record(std::istream& in, const std::string& context);

void save_param_vector(const std::string& path, const Vec& v);
Vec load_param_vector(const std::string& path);

// ---- JSON forms for the domain configs ----
json to_json(const nn::NetSpec& spec);
nn::NetSpec net_spec_from_json(const json& j);

json to_json(const sampler::SamplerConfig& cfg);
sampler::SamplerConfig sampler_config_from_json(const json& j);

json to_json(const gan::GanConfig& cfg);
gan::GanConfig gan_config_from_json(const json& j);

json to_json(const attacks::AttackConfig& cfg);
attacks::AttackConfig attack_config_from_json(const json& j);

// ---- composite artifacts: <base>.json sidecar + <base>.bin payload ----
void save_sample_set(const std::string& base, const sampler::SampleSet& set);
sampler::SampleSet load_sample_set(const std::string& base);

void save_generator(const std::string& base, const gan::GeneratorState& state);
gan::GeneratorState load_generator(const std::string& base);

void save_mog(const std::string& base, const mog::MoGModel& model);
mog::MoGModel load_mog(const std::string& base);

void save_attack_set(const std::string& base, const attacks::AttackSet& set);
attacks::AttackSet load_attack_set(const std::string& base);

// ---- CSV ----
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// (input_id, sample_id, p_0..p_{C-1}) rows for external auditing.
void write_predictive_csv(const std::string& path,
                          const std::vector<uncertainty::PredictiveBatch>& batches);

void write_loss_trace_csv(const std::string& path, const std::vector<gan::TraceRow>& trace);

// ---- misc ----
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

std::string format_double(double v);  // shortest round-trip decimal form

}  // namespace apd::io
