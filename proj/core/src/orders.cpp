#include "eagle/orders.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eagle/csv.hpp"
#include "eagle/errors.hpp"

namespace eagle {
namespace {

using nlohmann::json;

// Days since 1970-01-01 for a proleptic Gregorian date; avoids mktime and any
// timezone reinterpretation.
int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<int64_t>(era) * 146097 + static_cast<int64_t>(doe) - 719468;
}

bool parse_date_days(const std::string& text, const std::string& fmt, int64_t& days_out) {
    std::tm tm = {};
    std::istringstream ss(text);
    ss >> std::get_time(&tm, fmt.c_str());
    if (ss.fail()) return false;
    if (tm.tm_year < -1800 || tm.tm_mon < 0 || tm.tm_mon > 11 || tm.tm_mday < 1 || tm.tm_mday > 31)
        return false;
    days_out = days_from_civil(tm.tm_year + 1900, static_cast<unsigned>(tm.tm_mon + 1),
                               static_cast<unsigned>(tm.tm_mday));
    return true;
}

bool parse_int(const std::string& s, long& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtol(s.c_str(), &end, 10);
    return end && *end == '\0';
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end && *end == '\0' && std::isfinite(out);
}

const std::vector<std::string> kRequiredFields = {
    "order_id", "order_date", "origin_region", "dest_region",
    "scheduled_days", "real_days", "discount_rate", "shipping_mode"};

}  // namespace

void SchemaConfig::validate() const {
    for (const auto& f : kRequiredFields) {
        if (!columns.count(f))
            throw data_error("schema is missing a mapping for logical field '" + f + "'");
    }
    if (forbidden_columns.empty())
        throw data_error("schema forbidden-column list must not be empty");
    if (shipping_modes.size() != 4)
        throw data_error("schema must list exactly 4 shipping-mode categories");
}

SchemaConfig SchemaConfig::from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    SchemaConfig cfg;
    for (auto& [k, v] : j.at("columns").items()) cfg.columns[k] = v.get<std::string>();
    cfg.forbidden_columns = j.at("forbidden_columns").get<std::vector<std::string>>();
    cfg.shipping_modes = j.at("shipping_modes").get<std::vector<std::string>>();
    cfg.date_format = j.at("date_format").get<std::string>();
    cfg.validate();
    return cfg;
}

SchemaConfig SchemaConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open schema config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return from_json(ss.str());
    } catch (const json::exception& e) {
        throw data_error("malformed schema config " + path + ": " + e.what());
    }
}

std::string SchemaConfig::to_json() const {
    json j;
    j["columns"] = columns;
    j["forbidden_columns"] = forbidden_columns;
    j["shipping_modes"] = shipping_modes;
    j["date_format"] = date_format;
    return j.dump(2);
}

SchemaConfig SchemaConfig::dataco_default() {
    SchemaConfig cfg;
    cfg.columns = {
        {"order_id", "Order Id"},
        {"order_date", "order date (DateOrders)"},
        {"origin_region", "Order Region"},
        {"dest_region", "Customer State"},
        {"scheduled_days", "Days for shipment (scheduled)"},
        {"real_days", "Days for shipping (real)"},
        {"discount_rate", "Order Item Discount Rate"},
        {"shipping_mode", "Shipping Mode"},
    };
    cfg.forbidden_columns = {"Delivery Status", "Late_delivery_risk", "Days for shipping (real)"};
    cfg.shipping_modes = {"First Class", "Same Day", "Second Class", "Standard Class"};
    cfg.date_format = "%m/%d/%Y %H:%M";
    return cfg;
}

SchemaConfig SchemaConfig::synthetic_default() {
    SchemaConfig cfg;
    cfg.columns = {
        {"order_id", "order_id"},
        {"order_date", "order_date"},
        {"origin_region", "origin_region"},
        {"dest_region", "dest_region"},
        {"scheduled_days", "scheduled_days"},
        {"real_days", "real_days"},
        {"discount_rate", "discount_rate"},
        {"shipping_mode", "shipping_mode"},
    };
    cfg.forbidden_columns = {"delivery_status", "late_risk", "real_days"};
    cfg.shipping_modes = {"air", "ground", "rail", "sea"};
    cfg.date_format = "%Y-%m-%d";
    return cfg;
}

int32_t OrderTable::day_span() const {
    int32_t max_day = -1;
    for (const auto& o : orders) max_day = std::max(max_day, o.order_day);
    return max_day + 1;
}

OrderTable parse_orders(std::istream& csv_source, const SchemaConfig& schema) {
    schema.validate();
    csv::Reader reader(csv_source);
    std::vector<std::string> header;
    if (!reader.next(header)) throw data_error("empty CSV input: no header row");

    // Strip a UTF-8 BOM if present.
    if (!header.empty() && header[0].size() >= 3 &&
        static_cast<unsigned char>(header[0][0]) == 0xEF)
        header[0].erase(0, 3);

    std::map<std::string, size_t> col_idx;
    for (size_t i = 0; i < header.size(); ++i) col_idx[header[i]] = i;

    std::map<std::string, size_t> field_idx;
    for (const auto& f : kRequiredFields) {
        auto it = col_idx.find(schema.columns.at(f));
        if (it == col_idx.end())
            throw data_error("required header '" + schema.columns.at(f) +
                             "' (logical field '" + f + "') not found in CSV");
        field_idx[f] = it->second;
    }

    std::map<std::string, int32_t> mode_idx;
    for (size_t i = 0; i < schema.shipping_modes.size(); ++i)
        mode_idx[schema.shipping_modes[i]] = static_cast<int32_t>(i);

    struct RawRow {
        OrderRecord rec;
        int64_t abs_day;
    };
    std::vector<RawRow> rows;
    int64_t raw = 0, dropped = 0;
    std::vector<std::string> fields;
    const size_t max_needed = [&] {
        size_t m = 0;
        for (auto& [k, v] : field_idx) m = std::max(m, v);
        return m;
    }();

    while (reader.next(fields)) {
        if (fields.size() == 1 && fields[0].empty()) continue;  // trailing blank line
        ++raw;
        if (fields.size() <= max_needed) {
            ++dropped;
            continue;
        }
        RawRow r;
        long sched = 0, real = 0;
        double disc = 0.0;
        const std::string& mode = fields[field_idx["shipping_mode"]];
        auto mit = mode_idx.find(mode);
        if (!parse_date_days(fields[field_idx["order_date"]], schema.date_format, r.abs_day) ||
            !parse_int(fields[field_idx["scheduled_days"]], sched) || sched < 0 ||
            !parse_int(fields[field_idx["real_days"]], real) || real < 0 ||
            !parse_double(fields[field_idx["discount_rate"]], disc) ||
            mit == mode_idx.end()) {
            ++dropped;
            continue;
        }
        r.rec.order_id = fields[field_idx["order_id"]];
        r.rec.origin_region = fields[field_idx["origin_region"]];
        r.rec.dest_region = fields[field_idx["dest_region"]];
        r.rec.scheduled_days = static_cast<int32_t>(sched);
        r.rec.real_days = static_cast<int32_t>(real);
        r.rec.discount_rate = std::clamp(disc, 0.0, 1.0);
        r.rec.shipping_mode = mit->second;
        r.rec.delay_days = std::max(0.0, static_cast<double>(real - sched));
        rows.push_back(std::move(r));
    }

    if (rows.empty()) throw data_error("no parseable order rows in input");
    if (dropped > 0 && static_cast<double>(dropped) / static_cast<double>(raw) > 0.01)
        throw data_error("dropped " + std::to_string(dropped) + " of " + std::to_string(raw) +
                         " rows (> 1% malformed); refusing to shift split boundaries silently");

    int64_t min_day = rows[0].abs_day;
    for (const auto& r : rows) min_day = std::min(min_day, r.abs_day);

    OrderTable table;
    table.shipping_modes = schema.shipping_modes;
    table.raw_rows = raw;
    table.dropped_rows = dropped;
    table.orders.reserve(rows.size());
    for (auto& r : rows) {
        r.rec.order_day = static_cast<int32_t>(r.abs_day - min_day);
        table.orders.push_back(std::move(r.rec));
    }
    std::sort(table.orders.begin(), table.orders.end(),
              [](const OrderRecord& a, const OrderRecord& b) {
                  if (a.order_day != b.order_day) return a.order_day < b.order_day;
                  return a.order_id < b.order_id;
              });
    return table;
}

IngestStats ingest_stats(const OrderTable& table) {
    if (table.orders.empty()) throw data_error("ingest_stats: empty order table");
    IngestStats s;
    s.row_count = static_cast<int64_t>(table.orders.size());
    s.day_span = table.day_span();
    std::set<std::string> origins, dests;
    std::vector<double> delays;
    delays.reserve(table.orders.size());
    for (const auto& o : table.orders) {
        origins.insert(o.origin_region);
        dests.insert(o.dest_region);
        s.mode_counts[table.shipping_modes[static_cast<size_t>(o.shipping_mode)]]++;
        delays.push_back(o.delay_days);
    }
    s.distinct_origins = static_cast<int64_t>(origins.size());
    s.distinct_dests = static_cast<int64_t>(dests.size());
    std::sort(delays.begin(), delays.end());
    for (double q : {0.0, 0.25, 0.5, 0.75, 0.9, 1.0}) {
        size_t idx = static_cast<size_t>(q * static_cast<double>(delays.size() - 1));
        s.delay_quantiles.push_back(delays[idx]);
    }
    return s;
}

std::string IngestStats::to_json() const {
    json j;
    j["row_count"] = row_count;
    j["day_span"] = day_span;
    j["distinct_origins"] = distinct_origins;
    j["distinct_dests"] = distinct_dests;
    j["mode_counts"] = mode_counts;
    j["delay_quantiles"] = delay_quantiles;
    return j.dump(2);
}

void save_order_table(const OrderTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write order table: " + path);
    out << "order_id,order_day,origin_region,dest_region,scheduled_days,real_days,"
           "discount_rate,shipping_mode,delay_days\n";
    out << std::setprecision(17);
    for (const auto& o : table.orders) {
        std::ostringstream disc, delay;
        disc << std::setprecision(17) << o.discount_rate;
        delay << std::setprecision(17) << o.delay_days;
        csv::write_row(out, {o.order_id, std::to_string(o.order_day), o.origin_region,
                             o.dest_region, std::to_string(o.scheduled_days),
                             std::to_string(o.real_days), disc.str(),
                             table.shipping_modes[static_cast<size_t>(o.shipping_mode)],
                             delay.str()});
    }
    // Footer carries parse provenance so the round trip is lossless.
    out << "#meta," << table.raw_rows << ',' << table.dropped_rows;
    for (const auto& m : table.shipping_modes) out << ',' << csv::escape_field(m);
    out << '\n';
    if (!out) throw io_error("failed writing order table: " + path);
}

OrderTable load_order_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open order table: " + path);
    csv::Reader reader(in);
    std::vector<std::string> fields;
    if (!reader.next(fields) || fields.size() != 9 || fields[0] != "order_id")
        throw data_error("not an order table file: " + path);
    OrderTable table;
    bool saw_meta = false;
    std::map<std::string, int32_t> mode_idx;
    std::vector<std::vector<std::string>> pending;
    while (reader.next(fields)) {
        if (!fields.empty() && fields[0] == "#meta") {
            if (fields.size() < 3) throw data_error("corrupt order-table footer: " + path);
            table.raw_rows = std::stoll(fields[1]);
            table.dropped_rows = std::stoll(fields[2]);
            for (size_t i = 3; i < fields.size(); ++i) table.shipping_modes.push_back(fields[i]);
            saw_meta = true;
            break;
        }
        pending.push_back(fields);
    }
    if (!saw_meta) throw data_error("order table missing footer (truncated?): " + path);
    for (size_t i = 0; i < table.shipping_modes.size(); ++i)
        mode_idx[table.shipping_modes[i]] = static_cast<int32_t>(i);
    for (const auto& f : pending) {
        if (f.size() != 9) throw data_error("corrupt order-table row in " + path);
        OrderRecord o;
        o.order_id = f[0];
        o.order_day = std::stoi(f[1]);
        o.origin_region = f[2];
        o.dest_region = f[3];
        o.scheduled_days = std::stoi(f[4]);
        o.real_days = std::stoi(f[5]);
        o.discount_rate = std::stod(f[6]);
        auto it = mode_idx.find(f[7]);
        if (it == mode_idx.end()) throw data_error("unknown shipping mode in " + path);
        o.shipping_mode = it->second;
        o.delay_days = std::stod(f[8]);
        table.orders.push_back(std::move(o));
    }
    return table;
}

}  // namespace eagle
