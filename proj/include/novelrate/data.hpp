#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "novelrate/csv.hpp"
#include "novelrate/errors.hpp"

namespace novelrate::data {

enum class SourceId { RFGS_TOTAL, RFGS_GENDER, LOCED, PC, ATHENAEUM };

inline const char* source_name(SourceId s) {
    switch (s) {
        case SourceId::RFGS_TOTAL: return "rfgs_total";
        case SourceId::RFGS_GENDER: return "rfgs_gender";
        case SourceId::LOCED: return "loced";
        case SourceId::PC: return "pc";
        case SourceId::ATHENAEUM: return "athenaeum";
    }
    return "?";
}

struct YearCount {
    int year;
    long long count;
};

struct CountSeries {
    SourceId source_id = SourceId::RFGS_TOTAL;
    std::vector<YearCount> entries;  // strictly increasing years

    bool empty() const { return entries.empty(); }
    size_t size() const { return entries.size(); }
};

struct GenderCountRow {
    int year;
    long long men;
    long long women;
    long long unknown;
};

struct PopulationSeries {
    std::vector<std::pair<int, long long>> entries;  // (year, persons), persons > 0

    std::optional<long long> persons(int year) const {
        for (const auto& [y, p] : entries)
            if (y == year) return p;
        return std::nullopt;
    }
};

// Log-scale Gamma prior on the latent log-rate of one year.
struct ElicitedGamma {
    int year;
    double shape;
    double rate;
};

struct EarlyYearSample {
    int year;
    long long men;
    long long women;
    long long unknown;
    long long rfgs_total = 0;  // known total novels that year
};

// ---------------------------------------------------------------------------
// loaders

inline CountSeries load_count_series(const std::string& path, SourceId source) {
    auto t = csv::read_file(path);
    csv::expect_header(t, {"year", "count"}, path);
    if (t.rows.empty()) throw EmptyFile(path);
    CountSeries s;
    s.source_id = source;
    for (size_t r = 0; r < t.rows.size(); ++r) {
        long line = t.line_numbers[r];
        long long year = csv::parse_int(t.rows[r][0], line);
        long long count = csv::parse_int(t.rows[r][1], line);
        if (count < 0) throw MalformedRow("count must be >= 0", line);
        s.entries.push_back({static_cast<int>(year), count});
    }
    std::sort(s.entries.begin(), s.entries.end(),
              [](const YearCount& a, const YearCount& b) { return a.year < b.year; });
    for (size_t i = 1; i < s.entries.size(); ++i)
        if (s.entries[i].year == s.entries[i - 1].year) throw DuplicateYear(s.entries[i].year);
    return s;
}

inline std::vector<GenderCountRow> load_gender_csv(const std::string& path) {
    auto t = csv::read_file(path);
    csv::expect_header(t, {"year", "men", "women", "unknown"}, path);
    if (t.rows.empty()) throw EmptyFile(path);
    std::vector<GenderCountRow> rows;
    for (size_t r = 0; r < t.rows.size(); ++r) {
        long line = t.line_numbers[r];
        GenderCountRow g;
        g.year = static_cast<int>(csv::parse_int(t.rows[r][0], line));
        g.men = csv::parse_int(t.rows[r][1], line);
        g.women = csv::parse_int(t.rows[r][2], line);
        g.unknown = csv::parse_int(t.rows[r][3], line);
        if (g.men < 0 || g.women < 0 || g.unknown < 0)
            throw MalformedRow("gender counts must be >= 0", line);
        rows.push_back(g);
    }
    std::sort(rows.begin(), rows.end(),
              [](const GenderCountRow& a, const GenderCountRow& b) { return a.year < b.year; });
    for (size_t i = 1; i < rows.size(); ++i)
        if (rows[i].year == rows[i - 1].year) throw DuplicateYear(rows[i].year);
    return rows;
}

inline PopulationSeries load_population_csv(const std::string& path) {
    auto t = csv::read_file(path);
    csv::expect_header(t, {"year", "persons"}, path);
    if (t.rows.empty()) throw EmptyFile(path);
    PopulationSeries s;
    for (size_t r = 0; r < t.rows.size(); ++r) {
        long line = t.line_numbers[r];
        int year = static_cast<int>(csv::parse_int(t.rows[r][0], line));
        long long persons = csv::parse_int(t.rows[r][1], line);
        if (persons <= 0) throw MalformedRow("persons must be > 0", line);
        s.entries.emplace_back(year, persons);
    }
    std::sort(s.entries.begin(), s.entries.end());
    for (size_t i = 1; i < s.entries.size(); ++i)
        if (s.entries[i].first == s.entries[i - 1].first)
            throw DuplicateYear(s.entries[i].first);
    return s;
}

struct TitleRow {
    int year;
    char gender;  // 'M', 'F', 'U'
    std::string title;
};

inline std::vector<TitleRow> load_titles_csv(const std::string& path) {
    auto t = csv::read_file(path);
    csv::expect_header(t, {"year", "gender", "title"}, path);
    if (t.rows.empty()) throw EmptyFile(path);
    std::vector<TitleRow> rows;
    for (size_t r = 0; r < t.rows.size(); ++r) {
        long line = t.line_numbers[r];
        TitleRow row;
        row.year = static_cast<int>(csv::parse_int(t.rows[r][0], line));
        const std::string& g = t.rows[r][1];
        if (g != "M" && g != "F" && g != "U")
            throw MalformedRow("gender must be one of M,F,U, got '" + g + "'", line);
        row.gender = g[0];
        row.title = t.rows[r][2];
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::vector<EarlyYearSample> load_early_samples_csv(const std::string& path) {
    auto rows = load_gender_csv(path);
    std::vector<EarlyYearSample> out;
    for (const auto& g : rows)
        out.push_back({g.year, g.men, g.women, g.unknown, 0});
    return out;
}

// ---------------------------------------------------------------------------
// masking and rounding

// Drops every LOCED year ending in 0 or 5; those years mix dated and undated
// material in the source series.
inline CountSeries mask_loced(const CountSeries& series) {
    if (series.source_id != SourceId::LOCED)
        throw WrongSource(std::string("mask_loced applied to ") + source_name(series.source_id));
    CountSeries out;
    out.source_id = SourceId::LOCED;
    for (const auto& e : series.entries)
        if (e.year % 5 != 0) out.entries.push_back(e);
    return out;
}

inline std::vector<long long> round_down_fractional(const std::vector<double>& raw) {
    std::vector<long long> out;
    out.reserve(raw.size());
    for (double v : raw) {
        if (v < 0.0) throw NegativeValue(v);
        out.push_back(static_cast<long long>(std::floor(v)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// alignment

struct AlignConfig {
    int year_origin = 1800;  // t = 1
    int horizon = 120;       // t = 1..120 (1800..1919)
    int early_start = 1789;  // years before the origin kept as separate totals
    bool validate_gender_totals = true;
};

struct AlignedDataset {
    int year_origin = 1800;
    int horizon = 120;
    int early_start = 1789;

    std::optional<CountSeries> rfgs_total;  // window years only
    std::optional<CountSeries> pc;
    std::optional<CountSeries> loced;
    std::optional<CountSeries> athenaeum;
    std::vector<GenderCountRow> rfgs_gender;
    std::vector<GenderCountRow> ath_gender;
    std::optional<PopulationSeries> population;
    std::vector<ElicitedGamma> elicited;

    CountSeries early_totals;  // RFGS years before year_origin
    std::vector<EarlyYearSample> early_samples;

    int last_year() const { return year_origin + horizon - 1; }

    // t = 1 at year_origin
    int t_of_year(int year) const {
        if (year < year_origin || year > last_year()) throw YearOutOfWindow(year);
        return year - year_origin + 1;
    }
    int year_of_t(int t) const { return year_origin + t - 1; }

    void serialize(std::ostream& os) const;
    std::string serialize() const {
        std::ostringstream ss;
        serialize(ss);
        return ss.str();
    }
};

struct DatasetParts {
    std::optional<CountSeries> rfgs_total;
    std::optional<CountSeries> pc;
    std::optional<CountSeries> loced;
    std::optional<CountSeries> athenaeum;
    std::vector<GenderCountRow> rfgs_gender;
    std::vector<GenderCountRow> ath_gender;
    std::optional<PopulationSeries> population;
    std::vector<ElicitedGamma> elicited;
    std::vector<EarlyYearSample> early_samples;
};

inline AlignedDataset align(const DatasetParts& parts, const AlignConfig& cfg = {}) {
    AlignedDataset d;
    d.year_origin = cfg.year_origin;
    d.horizon = cfg.horizon;
    d.early_start = cfg.early_start;
    const int last = d.last_year();

    auto check_window = [&](int year) {
        if (year < cfg.year_origin || year > last) throw YearOutOfWindow(year);
    };

    if (parts.rfgs_total) {
        CountSeries in_window;
        in_window.source_id = SourceId::RFGS_TOTAL;
        d.early_totals.source_id = SourceId::RFGS_TOTAL;
        for (const auto& e : parts.rfgs_total->entries) {
            if (e.year >= cfg.early_start && e.year < cfg.year_origin) {
                d.early_totals.entries.push_back(e);
            } else {
                check_window(e.year);
                in_window.entries.push_back(e);
            }
        }
        if (!in_window.empty()) d.rfgs_total = std::move(in_window);
    }
    if (parts.pc) {
        for (const auto& e : parts.pc->entries) check_window(e.year);
        d.pc = *parts.pc;
    }
    if (parts.loced) {
        CountSeries masked = mask_loced(*parts.loced);
        for (const auto& e : masked.entries) check_window(e.year);
        if (!masked.empty()) d.loced = std::move(masked);
    }
    if (parts.athenaeum) {
        for (const auto& e : parts.athenaeum->entries) check_window(e.year);
        d.athenaeum = *parts.athenaeum;
    }
    for (const auto& g : parts.rfgs_gender) check_window(g.year);
    d.rfgs_gender = parts.rfgs_gender;
    for (const auto& g : parts.ath_gender) check_window(g.year);
    d.ath_gender = parts.ath_gender;
    d.population = parts.population;
    for (const auto& e : parts.elicited) check_window(e.year);
    d.elicited = parts.elicited;

    // duplicate t within a source would silently overwrite a likelihood term
    auto check_collisions = [&](const std::optional<CountSeries>& s) {
        if (!s) return;
        for (size_t i = 1; i < s->entries.size(); ++i)
            if (s->entries[i].year == s->entries[i - 1].year)
                throw IndexCollision(std::string(source_name(s->source_id)) +
                                     ": year " + std::to_string(s->entries[i].year));
    };
    check_collisions(d.rfgs_total);
    check_collisions(d.pc);
    check_collisions(d.loced);
    check_collisions(d.athenaeum);

    if (cfg.validate_gender_totals && d.rfgs_total) {
        for (const auto& g : d.rfgs_gender) {
            for (const auto& e : d.rfgs_total->entries) {
                if (e.year == g.year && g.men + g.women + g.unknown != e.count)
                    throw Error("gender counts for " + std::to_string(g.year) +
                                " do not sum to the total (" +
                                std::to_string(g.men + g.women + g.unknown) + " vs " +
                                std::to_string(e.count) + ")");
            }
        }
    }

    d.early_samples = parts.early_samples;
    for (auto& s : d.early_samples) {
        if (s.year < cfg.early_start || s.year >= cfg.year_origin)
            throw YearOutOfWindow(s.year);
        for (const auto& e : d.early_totals.entries)
            if (e.year == s.year) s.rfgs_total = e.count;
    }
    return d;
}

inline void AlignedDataset::serialize(std::ostream& os) const {
    os << "aligned_dataset v1\n";
    os << "origin " << year_origin << " horizon " << horizon
       << " early_start " << early_start << "\n";
    auto dump = [&](const char* tag, const std::optional<CountSeries>& s) {
        os << tag;
        if (s)
            for (const auto& e : s->entries) os << " " << e.year << ":" << e.count;
        os << "\n";
    };
    dump("rfgs_total", rfgs_total);
    dump("pc", pc);
    dump("loced", loced);
    dump("athenaeum", athenaeum);
    auto dump_gender = [&](const char* tag, const std::vector<GenderCountRow>& rows) {
        os << tag;
        for (const auto& g : rows)
            os << " " << g.year << ":" << g.men << "/" << g.women << "/" << g.unknown;
        os << "\n";
    };
    dump_gender("rfgs_gender", rfgs_gender);
    dump_gender("ath_gender", ath_gender);
    os << "population";
    if (population)
        for (const auto& [y, p] : population->entries) os << " " << y << ":" << p;
    os << "\n";
    os << "elicited";
    for (const auto& e : elicited) {
        char buf[80];
        std::snprintf(buf, sizeof(buf), " %d:%.17g/%.17g", e.year, e.shape, e.rate);
        os << buf;
    }
    os << "\n";
    os << "early_totals";
    for (const auto& e : early_totals.entries) os << " " << e.year << ":" << e.count;
    os << "\n";
    os << "early_samples";
    for (const auto& s : early_samples)
        os << " " << s.year << ":" << s.men << "/" << s.women << "/" << s.unknown
           << "@" << s.rfgs_total;
    os << "\n";
}

}  // namespace novelrate::data
