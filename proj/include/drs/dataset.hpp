#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drs/diff.hpp"
#include "drs/error.hpp"
#include "drs/metrics.hpp"

namespace drs {

struct LabeledCommit {
    Commit commit;
    ChangeMetrics metrics;
    bool buggy = false;
};

struct Dataset {
    std::vector<LabeledCommit> rows;
    std::size_t skipped_rows = 0;

    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }
};

namespace detail {

/// RFC 4180 record reader: quoted fields may hold commas, doubled quotes
/// and newlines. Returns false at end of input.
inline bool read_csv_record(std::istream& is, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char c = 0;
    while (is.get(c)) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (is.peek() == '"') {
                    field.push_back('"');
                    is.get();
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            if (!field.empty() && field.back() == '\r') field.pop_back();
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(c);
        }
    }
    if (!any) return false;
    if (!field.empty() && field.back() == '\r') field.pop_back();
    fields.push_back(std::move(field));
    return true;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<bool> parse_bool(std::string_view s) {
    s = trim(s);
    if (s == "1" || s == "true" || s == "True" || s == "TRUE") return true;
    if (s == "0" || s == "false" || s == "False" || s == "FALSE") return false;
    return std::nullopt;
}

/// Unix seconds, or ISO-8601 "YYYY-MM-DD[T ]HH:MM:SS[Z|+hh:mm]".
inline std::optional<std::int64_t> parse_timestamp(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    std::int64_t secs = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), secs);
    if (ec == std::errc{} && ptr == s.data() + s.size()) return secs;

    int y, mo, d, h = 0, mi = 0, sec = 0;
    char sep = 0;
    int consumed = 0;
    std::string buf(s);
    if (std::sscanf(buf.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &sec, &consumed) < 7 ||
        (sep != 'T' && sep != ' ')) {
        return std::nullopt;
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60) return std::nullopt;
    std::string_view tz = std::string_view(buf).substr(static_cast<std::size_t>(consumed));
    // fractional seconds are ignored
    if (!tz.empty() && tz.front() == '.') {
        std::size_t i = 1;
        while (i < tz.size() && tz[i] >= '0' && tz[i] <= '9') ++i;
        tz.remove_prefix(i);
    }
    int offset = 0;
    if (tz.empty() || tz == "Z") {
        offset = 0;
    } else if ((tz.front() == '+' || tz.front() == '-') && tz.size() == 6 && tz[3] == ':') {
        int oh = 0, om = 0;
        if (std::sscanf(std::string(tz.substr(1)).c_str(), "%2d:%2d", &oh, &om) != 2) return std::nullopt;
        offset = (oh * 3600 + om * 60) * (tz.front() == '-' ? -1 : 1);
    } else {
        return std::nullopt;
    }
    // days_from_civil (proleptic Gregorian)
    const int yy = y - (mo <= 2 ? 1 : 0);
    const int era = (yy >= 0 ? yy : yy - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(yy - era * 400);
    const unsigned doy = static_cast<unsigned>((153 * (mo + (mo > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    const std::int64_t days = static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
    return days * 86400 + h * 3600 + mi * 60 + sec - offset;
}

}  // namespace detail

/// Reads the commit table. Required columns: commit_id, project,
/// author_date, buggy and the twelve metric keys; optional commit_message
/// and diff columns are carried through. Rows with unparseable dates,
/// labels or metric values are skipped and counted.
inline Dataset load_dataset(std::istream& is) {
    std::vector<std::string> header;
    if (!detail::read_csv_record(is, header)) throw Error(Errc::EmptyDataset, "dataset has no header row");
    std::map<std::string, std::size_t, std::less<>> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[std::string(detail::trim(header[i]))] = i;

    auto require = [&](std::string_view name) {
        auto it = col.find(name);
        if (it == col.end()) throw Error(Errc::MissingColumn, "dataset is missing column '" + std::string(name) + "'");
        return it->second;
    };
    const std::size_t id_col = require("commit_id");
    const std::size_t project_col = require("project");
    const std::size_t date_col = require("author_date");
    const std::size_t buggy_col = require("buggy");
    std::array<std::size_t, kMetricCount> metric_cols{};
    for (std::size_t i = 0; i < kMetricCount; ++i) metric_cols[i] = require(kMetricKeys[i]);
    auto optional_col = [&](std::string_view name) -> std::optional<std::size_t> {
        auto it = col.find(name);
        return it == col.end() ? std::nullopt : std::optional<std::size_t>(it->second);
    };
    const auto message_col = optional_col("commit_message");
    const auto diff_col = optional_col("diff");

    Dataset ds;
    std::vector<std::string> fields;
    while (detail::read_csv_record(is, fields)) {
        if (fields.size() == 1 && detail::trim(fields[0]).empty()) continue;  // blank line
        if (fields.size() < header.size()) {
            ++ds.skipped_rows;
            continue;
        }
        LabeledCommit row;
        auto ts = detail::parse_timestamp(fields[date_col]);
        auto label = detail::parse_bool(fields[buggy_col]);
        bool ok = ts.has_value() && label.has_value();
        for (std::size_t i = 0; ok && i < kMetricCount; ++i) {
            auto v = detail::parse_double(fields[metric_cols[i]]);
            if (!v) ok = false;
            row.metrics.values[i] = v;
        }
        if (!ok) {
            ++ds.skipped_rows;
            continue;
        }
        row.commit.sha = std::string(detail::trim(fields[id_col]));
        row.commit.repo = std::string(detail::trim(fields[project_col]));
        row.commit.author_timestamp = *ts;
        if (message_col) row.commit.message = fields[*message_col];
        if (diff_col) row.commit.raw_diff = fields[*diff_col];
        row.buggy = *label;
        ds.rows.push_back(std::move(row));
    }
    if (ds.rows.empty()) throw Error(Errc::EmptyDataset, "dataset has no usable rows");
    return ds;
}

inline Dataset load_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open dataset file: " + path);
    return load_dataset(in);
}

}  // namespace drs
