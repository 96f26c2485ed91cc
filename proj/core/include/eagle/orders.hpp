#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace eagle {

// One cleaned order row. order_day is days since the earliest order in the file.
struct OrderRecord {
    std::string order_id;
    int32_t order_day = 0;
    std::string origin_region;
    std::string dest_region;
    int32_t scheduled_days = 0;
    int32_t real_days = 0;
    double discount_rate = 0.0;
    int32_t shipping_mode = 0;  // index into SchemaConfig::shipping_modes
    double delay_days = 0.0;    // max(0, real_days - scheduled_days)

    bool operator==(const OrderRecord&) const = default;
};

struct SchemaConfig {
    // logical field -> CSV header
    std::map<std::string, std::string> columns;
    std::vector<std::string> forbidden_columns;  // outcome-encoding headers
    std::vector<std::string> shipping_modes;     // exactly 4 observed categories
    std::string date_format = "%Y-%m-%d";

    static SchemaConfig from_json_file(const std::string& path);
    static SchemaConfig from_json(const std::string& json_text);
    std::string to_json() const;
    void validate() const;

    // Default mapping for the public DataCo export.
    static SchemaConfig dataco_default();
    // Mapping for the synthetic generator's CSV output.
    static SchemaConfig synthetic_default();
};

struct OrderTable {
    std::vector<OrderRecord> orders;   // sorted by (order_day, order_id)
    std::vector<std::string> shipping_modes;
    int64_t raw_rows = 0;
    int64_t dropped_rows = 0;

    int32_t day_span() const;  // max order_day + 1
    bool operator==(const OrderTable&) const = default;
};

struct IngestStats {
    int64_t row_count = 0;
    int32_t day_span = 0;
    int64_t distinct_origins = 0;
    int64_t distinct_dests = 0;
    std::map<std::string, int64_t> mode_counts;
    std::vector<double> delay_quantiles;  // q0, q25, q50, q75, q90, q100
    std::string to_json() const;
};

// Parses the raw CSV; rows with unparseable dates or negative transit days are
// dropped and counted. A drop rate above 1% aborts the ingest.
OrderTable parse_orders(std::istream& csv_source, const SchemaConfig& schema);

IngestStats ingest_stats(const OrderTable& table);

// Columnar on-disk order table (canonical CSV layout, lossless round trip).
void save_order_table(const OrderTable& table, const std::string& path);
OrderTable load_order_table(const std::string& path);

}  // namespace eagle
