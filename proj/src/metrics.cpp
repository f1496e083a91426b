#include "fedprune/metrics.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fedprune/errors.hpp"

namespace fedprune {

namespace {

const char* kHeader =
    "round\tstage\tparams_broadcast\tparams_end\tflops\taccuracy\t"
    "best_accuracy\tbytes_down\tbytes_up\tselected\tfilters\twall_ms";

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string join_filters(const std::vector<std::size_t>& filters) {
    if (filters.empty()) return "-";
    std::string out;
    for (std::size_t i = 0; i < filters.size(); ++i) {
        if (i != 0) out += '|';
        out += std::to_string(filters[i]);
    }
    return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

[[noreturn]] void bad_line(const std::string& path, std::size_t lineno,
                           const std::string& what) {
    throw IngestError(path + ": line " + std::to_string(lineno) + ": " + what);
}

unsigned long long parse_u64(const std::string& s, const std::string& path,
                             std::size_t lineno, const char* field) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (errno != 0 || end == s.c_str() || *end != '\0') {
        bad_line(path, lineno, std::string("bad ") + field + " value '" + s + "'");
    }
    return v;
}

double parse_f64(const std::string& s, const std::string& path, std::size_t lineno,
                 const char* field) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (errno != 0 || end == s.c_str() || *end != '\0') {
        bad_line(path, lineno, std::string("bad ") + field + " value '" + s + "'");
    }
    return v;
}

}  // namespace

unsigned long long round_bytes(std::size_t params, std::size_t selected,
                               std::size_t width) {
    return static_cast<unsigned long long>(params) * width * selected * 2ull;
}

unsigned long long cumulative_bytes(const MetricsLedger& ledger) {
    if (ledger.rows.empty()) throw ConfigError("cumulative_bytes: empty ledger");
    unsigned long long total = 0;
    for (const LedgerRow& r : ledger.rows) total += r.bytes_down + r.bytes_up;
    return total;
}

void append_round(MetricsLedger& ledger, const RoundInfo& info,
                  unsigned long long flops, std::size_t width) {
    LedgerRow row;
    row.round = info.round;
    row.stage = info.stage == Stage::search ? "search" : "train";
    row.params_broadcast = info.params_broadcast;
    row.params_end = info.params_end;
    row.flops = flops;
    row.accuracy = info.accuracy;
    row.best_accuracy =
        ledger.rows.empty()
            ? info.accuracy
            : std::max(ledger.rows.back().best_accuracy, info.accuracy);
    const unsigned long long half =
        round_bytes(info.params_broadcast, info.selected.size(), width) / 2;
    row.bytes_down = half;
    row.bytes_up = half;
    row.selected = info.selected.size();
    row.filters = info.filters;
    row.wall_ms = info.wall_ms;
    ledger.rows.push_back(std::move(row));
}

void write_ledger(const MetricsLedger& ledger, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("write_ledger: cannot open " + path);
    os << "# ledger v1\n";
    os << "# label=" << ledger.label << "\n";
    os << "# seed=" << ledger.seed << "\n";
    os << "# config=" << ledger.config_hash << "\n";
    os << kHeader << "\n";
    for (const LedgerRow& r : ledger.rows) {
        os << r.round << '\t' << r.stage << '\t' << r.params_broadcast << '\t'
           << r.params_end << '\t' << r.flops << '\t' << fmt_double(r.accuracy)
           << '\t' << fmt_double(r.best_accuracy) << '\t' << r.bytes_down << '\t'
           << r.bytes_up << '\t' << r.selected << '\t' << join_filters(r.filters)
           << '\t' << fmt_double(r.wall_ms) << '\n';
    }
    if (!os.flush()) throw ConfigError("write_ledger: write to " + path + " failed");
}

MetricsLedger read_ledger(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestError(path + ": cannot open");
    MetricsLedger ledger;
    std::string line;
    std::size_t lineno = 0;
    bool saw_header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string body = line.substr(1);
            const std::size_t sp = body.find_first_not_of(' ');
            const std::string meta = sp == std::string::npos ? "" : body.substr(sp);
            if (meta.rfind("label=", 0) == 0) ledger.label = meta.substr(6);
            if (meta.rfind("seed=", 0) == 0) {
                ledger.seed = parse_u64(meta.substr(5), path, lineno, "seed");
            }
            if (meta.rfind("config=", 0) == 0) ledger.config_hash = meta.substr(7);
            continue;
        }
        if (!saw_header) {
            if (line != kHeader) bad_line(path, lineno, "unexpected header");
            saw_header = true;
            continue;
        }
        const std::vector<std::string> f = split(line, '\t');
        if (f.size() != 12) {
            bad_line(path, lineno,
                     "expected 12 fields, found " + std::to_string(f.size()));
        }
        LedgerRow row;
        row.round = parse_u64(f[0], path, lineno, "round");
        row.stage = f[1];
        if (row.stage != "search" && row.stage != "train") {
            bad_line(path, lineno, "unknown stage '" + row.stage + "'");
        }
        row.params_broadcast = parse_u64(f[2], path, lineno, "params_broadcast");
        row.params_end = parse_u64(f[3], path, lineno, "params_end");
        row.flops = parse_u64(f[4], path, lineno, "flops");
        row.accuracy = parse_f64(f[5], path, lineno, "accuracy");
        row.best_accuracy = parse_f64(f[6], path, lineno, "best_accuracy");
        row.bytes_down = parse_u64(f[7], path, lineno, "bytes_down");
        row.bytes_up = parse_u64(f[8], path, lineno, "bytes_up");
        row.selected = parse_u64(f[9], path, lineno, "selected");
        if (f[10] != "-") {
            for (const std::string& part : split(f[10], '|')) {
                row.filters.push_back(parse_u64(part, path, lineno, "filters"));
            }
        }
        row.wall_ms = parse_f64(f[11], path, lineno, "wall_ms");
        ledger.rows.push_back(std::move(row));
    }
    if (!saw_header) throw IngestError(path + ": missing ledger header");
    return ledger;
}

}  // namespace fedprune
