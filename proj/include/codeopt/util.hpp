#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace codeopt {

// ---------------------------------------------------------------------------
// Random numbers. mt19937_64 is specified bit-exactly by the standard; the
// distributions below are hand-rolled so draws match across standard libraries.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // Uniform in [0, 1) with 53 random bits.
    double uniform01();
    // Uniform integer in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);
    bool bernoulli(double p) { return uniform01() < p; }
    double normal(double mean, double stddev);
    // Draw index i with probability probs[i]; probs must sum to ~1.
    std::size_t categorical(std::span<const double> probs);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// ---------------------------------------------------------------------------
// Text

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool contains_ci(std::string_view haystack, std::string_view needle);
// Removes a surrounding markdown code fence (```lang ... ```), if present.
std::string strip_code_fence(std::string_view s);
// Keeps the last `cap` bytes, prefixing a marker that names the dropped count.
std::string tail_excerpt(std::string_view s, std::size_t cap);
std::string format_double(double v);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::string_view content);

/// Line-based unified diff (3 lines of context) from `before` to `after`.
std::string unified_diff(std::string_view before, std::string_view after,
                         std::string_view from_label = "best", std::string_view to_label = "candidate");

// ---------------------------------------------------------------------------
// Minimal TOML subset: `key = value`, `[section]`, '#' comments; values are
// strings, booleans, numbers, or flat arrays of those. Keys inside a section
// are stored as "section.key".

using ConfigScalar = std::variant<bool, double, std::string>;
using ConfigValue = std::variant<bool, double, std::string, std::vector<ConfigScalar>>;

class KeyValueFile {
public:
    static KeyValueFile parse(std::string_view text, std::string_view origin = "<memory>");
    static KeyValueFile load(const std::filesystem::path& path);

    [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }
    [[nodiscard]] const std::map<std::string, ConfigValue>& values() const { return values_; }

    [[nodiscard]] std::string get_string(const std::string& key) const;
    [[nodiscard]] double get_number(const std::string& key) const;
    [[nodiscard]] bool get_bool(const std::string& key) const;
    [[nodiscard]] std::vector<std::string> get_string_list(const std::string& key) const;
    [[nodiscard]] std::vector<double> get_number_list(const std::string& key) const;

    void set(const std::string& key, ConfigValue v) { values_[key] = std::move(v); }

private:
    std::map<std::string, ConfigValue> values_;
    std::string origin_;
};

}  // namespace codeopt
