#include "codeopt/util.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>

#include "codeopt/error.hpp"

namespace codeopt {

double Rng::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw Error(ErrorCode::DomainError, "uniform_index over empty range");
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x = 0;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

double Rng::normal(double mean, double stddev) {
    if (has_spare_) {
        has_spare_ = false;
        return mean + stddev * spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
}

std::size_t Rng::categorical(std::span<const double> probs) {
    if (probs.empty()) throw Error(ErrorCode::DomainError, "categorical over empty support");
    const double u = uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    // Rounding left u above the running sum: return the last positive mass.
    for (std::size_t i = probs.size(); i-- > 0;) {
        if (probs[i] > 0.0) return i;
    }
    return probs.size() - 1;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < s.size()) out.emplace_back(s.substr(start));
            break;
        }
        std::string line(s.substr(start, nl - start));
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(std::move(line));
        start = nl + 1;
    }
    return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (prefix.size() > s.size()) return false;
    return to_lower(s.substr(0, prefix.size())) == to_lower(prefix);
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
    return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

std::string strip_code_fence(std::string_view s) {
    const std::string t = trim(s);
    if (t.rfind("```", 0) != 0) return std::string(s);
    const auto first_nl = t.find('\n');
    if (first_nl == std::string::npos) return std::string(s);
    auto body = t.substr(first_nl + 1);
    const auto close = body.rfind("```");
    if (close != std::string::npos) body = body.substr(0, close);
    return body;
}

std::string tail_excerpt(std::string_view s, std::size_t cap) {
    if (s.size() <= cap) return std::string(s);
    const std::size_t dropped = s.size() - cap;
    return "[... truncated " + std::to_string(dropped) + " bytes ...]\n" +
           std::string(s.substr(dropped));
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& p, std::string_view content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + p.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "short write to " + p.string());
}

// ---------------------------------------------------------------------------
// unified diff via LCS table; candidate files are small enough for O(nm).

std::string unified_diff(std::string_view before, std::string_view after,
                         std::string_view from_label, std::string_view to_label) {
    const auto a = split_lines(before);
    const auto b = split_lines(after);
    if (a == b) return {};
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<std::vector<std::uint32_t>> lcs(n + 1, std::vector<std::uint32_t>(m + 1, 0));
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = m; j-- > 0;) {
            lcs[i][j] = a[i] == b[j] ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);
        }
    }
    struct Op {
        char tag;
        std::size_t ai;
        std::size_t bi;
    };
    std::vector<Op> ops;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < n || j < m) {
        if (i < n && j < m && a[i] == b[j]) {
            ops.push_back({' ', i++, j++});
        } else if (i < n && (j == m || lcs[i + 1][j] >= lcs[i][j + 1])) {
            ops.push_back({'-', i++, j});
        } else {
            ops.push_back({'+', i, j++});
        }
    }

    constexpr std::size_t kContext = 3;
    std::ostringstream out;
    out << "--- " << from_label << "\n+++ " << to_label << "\n";
    std::size_t k = 0;
    while (k < ops.size()) {
        while (k < ops.size() && ops[k].tag == ' ') ++k;
        if (k == ops.size()) break;
        std::size_t start = k >= kContext ? k - kContext : 0;
        std::size_t end = k;
        // Extend the hunk while changes are within 2*context of each other.
        while (end < ops.size()) {
            if (ops[end].tag != ' ') {
                ++end;
                continue;
            }
            std::size_t run = end;
            while (run < ops.size() && ops[run].tag == ' ') ++run;
            if (run == ops.size() || run - end > 2 * kContext) {
                end = std::min(end + kContext, ops.size());
                break;
            }
            end = run;
        }
        std::size_t a_start = ops[start].ai;
        std::size_t b_start = ops[start].bi;
        std::size_t a_len = 0;
        std::size_t b_len = 0;
        for (std::size_t q = start; q < end; ++q) {
            if (ops[q].tag != '+') ++a_len;
            if (ops[q].tag != '-') ++b_len;
        }
        out << "@@ -" << (a_len ? a_start + 1 : a_start) << ',' << a_len << " +"
            << (b_len ? b_start + 1 : b_start) << ',' << b_len << " @@\n";
        for (std::size_t q = start; q < end; ++q) {
            const auto& line = ops[q].tag == '+' ? b[ops[q].bi] : a[ops[q].ai];
            out << ops[q].tag << line << '\n';
        }
        k = end;
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// KeyValueFile

namespace {

[[noreturn]] void config_fail(std::string_view origin, std::size_t line, const std::string& msg) {
    throw Error(ErrorCode::ConfigError,
                std::string(origin) + ":" + std::to_string(line) + ": " + msg);
}

std::string strip_comment(std::string_view line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
        if (line[i] == '#' && !in_str) return std::string(line.substr(0, i));
    }
    return std::string(line);
}

std::optional<ConfigScalar> parse_scalar(const std::string& raw) {
    const std::string t = trim(raw);
    if (t.empty()) return std::nullopt;
    if (t.size() >= 2 && t.front() == '"' && t.back() == '"') {
        std::string out;
        for (std::size_t i = 1; i + 1 < t.size(); ++i) {
            if (t[i] == '\\' && i + 2 < t.size()) {
                const char c = t[++i];
                out.push_back(c == 'n' ? '\n' : c == 't' ? '\t' : c);
            } else {
                out.push_back(t[i]);
            }
        }
        return out;
    }
    const std::string l = to_lower(t);
    if (l == "true") return true;
    if (l == "false") return false;
    double v = 0.0;
    const auto* first = t.data();
    const auto* last = t.data() + t.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec == std::errc() && ptr == last) return v;
    // Bare word: treated as a string so `direction = lower` reads naturally.
    return t;
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text, std::string_view origin) {
    KeyValueFile kv;
    kv.origin_ = std::string(origin);
    std::string section;
    std::size_t lineno = 0;
    for (const auto& raw : split_lines(text)) {
        ++lineno;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') config_fail(origin, lineno, "unterminated section header");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) config_fail(origin, lineno, "expected key = value");
        std::string key = trim(std::string_view(line).substr(0, eq));
        std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key.empty()) config_fail(origin, lineno, "empty key");
        if (!section.empty()) key = section + "." + key;
        if (!value.empty() && value.front() == '[') {
            if (value.back() != ']') config_fail(origin, lineno, "unterminated array");
            std::vector<ConfigScalar> items;
            const std::string inner = value.substr(1, value.size() - 2);
            for (const auto& part : split(inner, ',')) {
                if (trim(part).empty()) continue;
                auto s = parse_scalar(part);
                if (!s) config_fail(origin, lineno, "bad array element");
                items.push_back(*s);
            }
            kv.values_[key] = std::move(items);
        } else {
            auto s = parse_scalar(value);
            if (!s) config_fail(origin, lineno, "missing value for '" + key + "'");
            std::visit([&](auto&& x) { kv.values_[key] = x; }, *s);
        }
    }
    return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error&) {
        throw Error(ErrorCode::ConfigError, "cannot read config file " + path.string());
    }
    return parse(text, path.string());
}

std::string KeyValueFile::get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorCode::ConfigError, origin_ + ": missing key " + key);
    if (const auto* s = std::get_if<std::string>(&it->second)) return *s;
    if (const auto* d = std::get_if<double>(&it->second)) return format_double(*d);
    if (const auto* b = std::get_if<bool>(&it->second)) return *b ? "true" : "false";
    throw Error(ErrorCode::ConfigError, origin_ + ": key " + key + " is not a string");
}

double KeyValueFile::get_number(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorCode::ConfigError, origin_ + ": missing key " + key);
    if (const auto* d = std::get_if<double>(&it->second)) return *d;
    throw Error(ErrorCode::ConfigError, origin_ + ": key " + key + " is not a number");
}

bool KeyValueFile::get_bool(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorCode::ConfigError, origin_ + ": missing key " + key);
    if (const auto* b = std::get_if<bool>(&it->second)) return *b;
    throw Error(ErrorCode::ConfigError, origin_ + ": key " + key + " is not a boolean");
}

std::vector<std::string> KeyValueFile::get_string_list(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorCode::ConfigError, origin_ + ": missing key " + key);
    const auto* arr = std::get_if<std::vector<ConfigScalar>>(&it->second);
    if (!arr) {
        if (const auto* s = std::get_if<std::string>(&it->second)) {
            std::vector<std::string> out;
            for (auto& p : split(*s, ',')) out.push_back(trim(p));
            return out;
        }
        throw Error(ErrorCode::ConfigError, origin_ + ": key " + key + " is not a list");
    }
    std::vector<std::string> out;
    for (const auto& item : *arr) {
        if (const auto* s = std::get_if<std::string>(&item)) {
            out.push_back(*s);
        } else if (const auto* d = std::get_if<double>(&item)) {
            out.push_back(format_double(*d));
        } else {
            throw Error(ErrorCode::ConfigError, origin_ + ": key " + key + " holds a non-string");
        }
    }
    return out;
}

std::vector<double> KeyValueFile::get_number_list(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorCode::ConfigError, origin_ + ": missing key " + key);
    if (const auto* d = std::get_if<double>(&it->second)) return {*d};
    const auto* arr = std::get_if<std::vector<ConfigScalar>>(&it->second);
    if (!arr) throw Error(ErrorCode::ConfigError, origin_ + ": key " + key + " is not a list");
    std::vector<double> out;
    for (const auto& item : *arr) {
        const auto* d = std::get_if<double>(&item);
        if (!d) throw Error(ErrorCode::ConfigError, origin_ + ": key " + key + " holds a non-number");
        out.push_back(*d);
    }
    return out;
}

}  // namespace codeopt
