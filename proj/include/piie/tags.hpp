#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "piie/errors.hpp"

namespace piie {

// The seven PII categories.
enum class Category : int { age = 0, contact, date, id, location, name, profession };

inline constexpr std::size_t category_count = 7;

inline constexpr std::array<std::string_view, category_count> category_names = {
    "Age", "Contact", "Date", "ID", "Location", "Name", "Profession"};

inline constexpr std::array<Category, category_count> all_categories = {
    Category::age,      Category::contact, Category::date,      Category::id,
    Category::location, Category::name,    Category::profession};

inline std::string_view to_string(Category c) { return category_names[static_cast<std::size_t>(c)]; }

inline std::optional<Category> parse_category(std::string_view s) {
  for (std::size_t i = 0; i < category_count; ++i)
    if (category_names[i] == s) return static_cast<Category>(i);
  return std::nullopt;
}

using TagId = int;

// IOB tag set over the seven categories: O = 0, B-c = 1 + 2c, I-c = 2 + 2c.
struct TagScheme {
  static constexpr std::size_t size = 2 * category_count + 1;
  static constexpr TagId outside = 0;

  static constexpr TagId begin(Category c) { return 1 + 2 * static_cast<int>(c); }
  static constexpr TagId inside(Category c) { return 2 + 2 * static_cast<int>(c); }
  static constexpr bool is_begin(TagId t) { return t > 0 && t % 2 == 1; }
  static constexpr bool is_inside(TagId t) { return t > 0 && t % 2 == 0; }
  static constexpr Category category(TagId t) { return static_cast<Category>((t - 1) / 2); }
  static constexpr bool valid(TagId t) { return t >= 0 && static_cast<std::size_t>(t) < size; }

  static std::string name(TagId t) {
    if (!valid(t)) throw ValidationError("tag id " + std::to_string(t) + " out of range");
    if (t == outside) return "O";
    return std::string(is_begin(t) ? "B-" : "I-") + std::string(to_string(category(t)));
  }

  static TagId index(std::string_view s) {
    if (s == "O") return outside;
    if (s.size() > 2 && s[1] == '-' && (s[0] == 'B' || s[0] == 'I')) {
      if (auto c = parse_category(s.substr(2))) return s[0] == 'B' ? begin(*c) : inside(*c);
    }
    throw ValidationError("unknown tag '" + std::string(s) + "'");
  }

  // Hard IOB constraints: I-c may only follow B-c or I-c.
  static constexpr bool allowed_transition(TagId from, TagId to) {
    if (!is_inside(to)) return true;
    return from != outside && category(from) == category(to);
  }
  static constexpr bool allowed_start(TagId to) { return !is_inside(to); }
};

struct PiiSpan {
  Category category;
  std::size_t start;  // inclusive
  std::size_t end;    // exclusive

  friend auto operator<=>(const PiiSpan&, const PiiSpan&) = default;
};

inline std::string to_string(const PiiSpan& s) {
  return std::string(to_string(s.category)) + "[" + std::to_string(s.start) + "," + std::to_string(s.end) + ")";
}

// Orphan I-c (at the start, after O, or after another category) becomes B-c.
inline std::vector<TagId> repair_iob(std::span<const TagId> tags) {
  std::vector<TagId> out(tags.begin(), tags.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!TagScheme::valid(out[i])) throw ValidationError("tag id " + std::to_string(out[i]) + " out of range");
    if (!TagScheme::is_inside(out[i])) continue;
    const bool orphan = i == 0 || !TagScheme::allowed_transition(out[i - 1], out[i]);
    if (orphan) out[i] = TagScheme::begin(TagScheme::category(out[i]));
  }
  return out;
}

inline bool is_iob_valid(std::span<const TagId> tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!TagScheme::valid(tags[i])) return false;
    if (i == 0 ? !TagScheme::allowed_start(tags[i]) : !TagScheme::allowed_transition(tags[i - 1], tags[i]))
      return false;
  }
  return true;
}

inline std::vector<TagId> spans_to_iob(std::size_t n, std::span<const PiiSpan> spans) {
  std::vector<PiiSpan> sorted(spans.begin(), spans.end());
  std::sort(sorted.begin(), sorted.end(), [](const PiiSpan& a, const PiiSpan& b) { return a.start < b.start; });
  for (const auto& s : sorted)
    if (s.start >= s.end || s.end > n)
      throw ValidationError("span " + to_string(s) + " invalid for length " + std::to_string(n));
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].start < sorted[i - 1].end)
      throw ValidationError("overlapping spans " + to_string(sorted[i - 1]) + " and " + to_string(sorted[i]));
  std::vector<TagId> tags(n, TagScheme::outside);
  for (const auto& s : sorted) {
    tags[s.start] = TagScheme::begin(s.category);
    for (std::size_t i = s.start + 1; i < s.end; ++i) tags[i] = TagScheme::inside(s.category);
  }
  return tags;
}

inline std::vector<PiiSpan> iob_to_spans(std::span<const TagId> raw) {
  const auto tags = repair_iob(raw);
  std::vector<PiiSpan> spans;
  for (std::size_t i = 0; i < tags.size();) {
    if (!TagScheme::is_begin(tags[i])) {
      ++i;
      continue;
    }
    const Category c = TagScheme::category(tags[i]);
    std::size_t j = i + 1;
    while (j < tags.size() && tags[j] == TagScheme::inside(c)) ++j;
    spans.push_back({c, i, j});
    i = j;
  }
  return spans;
}

inline std::vector<TagId> tags_from_strings(std::span<const std::string> names) {
  std::vector<TagId> out;
  out.reserve(names.size());
  for (const auto& s : names) out.push_back(TagScheme::index(s));
  return out;
}

inline std::vector<PiiSpan> iob_to_spans(std::span<const std::string> names) {
  const auto ids = tags_from_strings(names);
  return iob_to_spans(std::span<const TagId>(ids));
}

}  // namespace piie
