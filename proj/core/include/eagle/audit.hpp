#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eagle/orders.hpp"

namespace eagle {

enum class TimeScope { feature_window, global_static, train_split_only, label_window };

std::string to_string(TimeScope s);
TimeScope time_scope_from_string(const std::string& s);

struct FeatureDecl {
    std::string name;
    std::string type;           // "node", "edge" or "label"
    TimeScope scope = TimeScope::feature_window;
    std::string source_column;  // CSV header this feature is computed from
    std::string justification;
};

using FeatureManifest = std::vector<FeatureDecl>;

struct AuditRow {
    std::string name;
    std::string type;
    std::string time_scope;
    std::string source_column;
    bool future_info = false;
    std::string justification;
};

struct AuditReport {
    std::vector<AuditRow> rows;
    std::vector<std::string> dropped_columns;
    std::optional<double> max_abs_feature_label_corr;
    std::string to_json() const;
};

// Fails (throws leakage_error) if any non-label feature is label-window scoped
// or sourced from a forbidden column.
AuditReport audit_features(const SchemaConfig& schema, const FeatureManifest& manifest);

// The manifest of everything the pipeline computes downstream, per schema.
FeatureManifest default_feature_manifest(const SchemaConfig& schema);

}  // namespace eagle
