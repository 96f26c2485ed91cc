#include "eagle/audit.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "eagle/errors.hpp"

namespace eagle {

using nlohmann::json;

std::string to_string(TimeScope s) {
    switch (s) {
        case TimeScope::feature_window: return "feature-window";
        case TimeScope::global_static: return "global-static";
        case TimeScope::train_split_only: return "train-split-only";
        case TimeScope::label_window: return "label-window";
    }
    return "?";
}

TimeScope time_scope_from_string(const std::string& s) {
    if (s == "feature-window") return TimeScope::feature_window;
    if (s == "global-static") return TimeScope::global_static;
    if (s == "train-split-only") return TimeScope::train_split_only;
    if (s == "label-window") return TimeScope::label_window;
    throw data_error("unknown time scope: " + s);
}

AuditReport audit_features(const SchemaConfig& schema, const FeatureManifest& manifest) {
    schema.validate();
    std::set<std::string> seen;
    AuditReport report;
    for (const auto& decl : manifest) {
        if (!seen.insert(decl.name).second)
            throw data_error("feature '" + decl.name + "' appears more than once in the manifest");
        bool is_label = decl.type == "label";
        if (!is_label && decl.scope == TimeScope::label_window)
            throw leakage_error("feature '" + decl.name +
                                "' is scoped to the label window (temporal leakage)");
        for (const auto& forbidden : schema.forbidden_columns) {
            if (decl.source_column == forbidden && !is_label)
                throw leakage_error("feature '" + decl.name + "' is sourced from forbidden column '" +
                                    forbidden + "' (outcome-encoding; direct label leakage)");
        }
        AuditRow row;
        row.name = decl.name;
        row.type = decl.type;
        row.time_scope = to_string(decl.scope);
        row.source_column = decl.source_column;
        row.future_info = false;  // anything future-scoped was rejected above
        row.justification = decl.justification;
        report.rows.push_back(std::move(row));
    }
    report.dropped_columns = schema.forbidden_columns;
    return report;
}

FeatureManifest default_feature_manifest(const SchemaConfig& schema) {
    const auto& col = schema.columns;
    FeatureManifest m;
    m.push_back({"order_vol", "node", TimeScope::feature_window, col.at("order_id"),
                 "order count over the feature window only"});
    m.push_back({"mean_scheduled_transit", "node", TimeScope::feature_window,
                 col.at("scheduled_days"), "known at order placement"});
    m.push_back({"std_scheduled_transit", "node", TimeScope::feature_window,
                 col.at("scheduled_days"), "known at order placement"});
    m.push_back({"mean_discount_rate", "node", TimeScope::feature_window,
                 col.at("discount_rate"), "known at order placement"});
    m.push_back({"prev_delay_days", "node", TimeScope::feature_window, "delay_days (derived)",
                 "past-realised outcomes only"});
    m.push_back({"transit_mean", "edge", TimeScope::global_static, col.at("scheduled_days"),
                 "scheduled (not actual) transit; stable over time"});
    m.push_back({"transit_std", "edge", TimeScope::global_static, col.at("scheduled_days"),
                 "scheduled (not actual) transit; stable over time"});
    m.push_back({"flow_volume", "edge", TimeScope::global_static, col.at("order_id"),
                 "lane-level aggregate, not outcome-related"});
    m.push_back({"mode_distribution", "edge", TimeScope::global_static, col.at("shipping_mode"),
                 "shipping mode choice, not delivery outcome"});
    m.push_back({"mu_baseline", "label", TimeScope::train_split_only, "delay_days (derived)",
                 "computed exclusively from training data"});
    m.push_back({"y_class", "label", TimeScope::label_window, "delay_days (derived)",
                 "target variable"});
    m.push_back({"y_reg", "label", TimeScope::label_window, "delay_days (derived)",
                 "target variable"});
    return m;
}

std::string AuditReport::to_json() const {
    json j;
    j["rows"] = json::array();
    for (const auto& r : rows) {
        j["rows"].push_back({{"name", r.name},
                             {"type", r.type},
                             {"time_scope", r.time_scope},
                             {"source_column", r.source_column},
                             {"future_info", r.future_info},
                             {"justification", r.justification}});
    }
    j["dropped_columns"] = dropped_columns;
    if (max_abs_feature_label_corr)
        j["max_abs_feature_label_corr"] = *max_abs_feature_label_corr;
    return j.dump(2);
}

}  // namespace eagle
