#pragma once

#include <string>

#include <json.hpp>

#include "ecodyn/data_pipeline.hpp"
#include "ecodyn/inference.hpp"
#include "ecodyn/selection.hpp"
#include "ecodyn/stats.hpp"
#include "ecodyn/synthetic.hpp"

namespace ecodyn {

using json = nlohmann::ordered_json;

// Field names are stable: they are the on-disk artifact format.

void to_json(json& j, ModelKind kind);
void from_json(const json& j, ModelKind& kind);

void to_json(json& j, const MeanFieldParams<>& p);
void from_json(const json& j, MeanFieldParams<>& p);

void to_json(json& j, const Segment& s);
void from_json(const json& j, Segment& s);

void to_json(json& j, const RunDiagnostics& d);
void from_json(const json& j, RunDiagnostics& d);

void to_json(json& j, const FitResult& f);
void from_json(const json& j, FitResult& f);

void to_json(json& j, const SelectionEntry& e);
void to_json(json& j, const SelectionReport& r);

void to_json(json& j, const IntegratorConfig& c);
void from_json(const json& j, IntegratorConfig& c);

void to_json(json& j, const FitConfig& c);
/// Keys absent from `j` keep the value already in `c`; unknown keys throw.
void from_json(const json& j, FitConfig& c);

void to_json(json& j, const SweepConfig& c);
void from_json(const json& j, SweepConfig& c);

void to_json(json& j, const RegressionResult& r);
void to_json(json& j, const FilterLog& log);

void to_json(json& j, const GeneralParams& p);
void from_json(const json& j, GeneralParams& p);

/// FNV-1a over the compact dump, as 16 hex digits.
std::string config_hash(const json& config);

/// Two-space indented dump with a trailing newline.
std::string dump(const json& j);

}  // namespace ecodyn
