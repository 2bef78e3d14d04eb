#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "piie/corpus.hpp"
#include "piie/errors.hpp"
#include "piie/tags.hpp"

// Template-based corpus generator with gold IOB tags and dependency heads.
//
// Sentences are built from one to three clauses drawn from a fixed clause
// bank. Each clause carries hand-written local heads; the first drawn
// clause's root is the sentence root and later clause roots attach to it.
// Entity slots expand to one or more tokens whose last token is the entity
// head. The target profile keeps the same clause syntax but abbreviates cue
// words, injects social-media noise tokens and shuffles clause order.

namespace piie {

enum class Profile { source, target };

inline std::string_view to_string(Profile p) { return p == Profile::source ? "source" : "target"; }

inline Profile parse_profile(std::string_view s) {
  if (s == "source") return Profile::source;
  if (s == "target") return Profile::target;
  throw ValidationError("unknown profile '" + std::string(s) + "' (expected source or target)");
}

namespace synth {

struct Piece {
  std::string word;                 // empty for a slot
  std::optional<Category> slot;
  int head = 0;                     // local 1-based, 0 = clause root
};

struct ClauseTemplate {
  std::optional<Category> category;
  std::vector<Piece> pieces;
};

// "my:2 name:3 is:0 {Name}:3"
inline ClauseTemplate parse_clause(std::string_view spec) {
  ClauseTemplate ct;
  std::istringstream is{std::string(spec)};
  std::string item;
  int roots = 0;
  while (is >> item) {
    const auto colon = item.rfind(':');
    Piece p;
    const std::string word = item.substr(0, colon);
    p.head = std::stoi(item.substr(colon + 1));
    if (word.front() == '{') {
      auto c = parse_category(word.substr(1, word.size() - 2));
      if (!c) throw ContractError("bad slot in clause template: " + word);
      p.slot = c;
      ct.category = c;
    } else {
      p.word = word;
    }
    roots += p.head == 0;
    ct.pieces.push_back(std::move(p));
  }
  if (roots != 1) throw ContractError("clause template needs exactly one root: " + std::string(spec));
  return ct;
}

inline const std::vector<ClauseTemplate>& clause_bank() {
  static const std::vector<ClauseTemplate> bank = [] {
    const char* specs[] = {
        // Name
        "my:2 name:3 is:0 {Name}:3",
        "i:2 am:0 {Name}:2",
        "patient:4 {Name}:1 was:4 admitted:0",
        "dr:2 {Name}:3 examined:0 the:5 patient:3",
        "{Name}:2 called:0 me:2 yesterday:2",
        "this:2 is:0 {Name}:2 speaking:2",
        "contact:2 person:3 is:0 {Name}:3",
        "say:0 hi:1 to:1 {Name}:3",
        // Age
        "i:2 am:0 {Age}:4 years:5 old:2",
        "the:2 patient:3 is:0 {Age}:5 years:6 old:3",
        "age:0 {Age}:1",
        "turned:0 {Age}:1 last:4 week:1",
        "a:5 {Age}:3 year:4 old:5 woman:0",
        "he:2 is:0 {Age}:2",
        // Date
        "born:0 on:1 {Date}:2",
        "my:2 birthday:3 is:0 {Date}:3",
        "admitted:0 on:1 {Date}:2",
        "the:2 appointment:3 is:0 on:3 {Date}:4",
        "discharged:0 {Date}:1",
        "see:0 you:1 on:1 {Date}:3",
        // Contact
        "call:0 me:1 at:1 {Contact}:3",
        "my:3 phone:3 number:4 is:0 {Contact}:4",
        "email:0 me:1 at:1 {Contact}:3",
        "reach:0 him:1 at:1 {Contact}:3",
        "contact:0 {Contact}:1 for:1 details:3",
        "text:0 {Contact}:1",
        // ID
        "my:2 id:3 is:0 {ID}:3",
        "medical:3 record:3 number:0 {ID}:3",
        "ssn:0 {ID}:1",
        "account:2 number:0 {ID}:2",
        "license:4 {ID}:1 was:4 issued:0",
        "member:2 id:0 {ID}:2",
        // Location
        "i:2 live:0 in:2 {Location}:3",
        "moved:0 to:1 {Location}:2",
        "she:2 is:0 from:2 {Location}:3",
        "transferred:0 to:1 {Location}:4 hospital:2",
        "visiting:0 {Location}:1 this:4 week:1",
        "the:2 office:0 in:2 {Location}:3",
        // Profession
        "i:2 work:0 as:2 a:5 {Profession}:3",
        "she:2 is:0 a:4 {Profession}:2",
        "employed:0 as:1 {Profession}:2",
        "my:2 job:3 is:0 {Profession}:3",
        "the:2 {Profession}:3 said:0 hello:3",
        "works:0 as:1 {Profession}:2 at:1 the:6 clinic:4",
        // no entity
        "the:2 weather:3 is:0 nice:3",
        "thanks:0 for:1 the:4 help:2",
        "feeling:0 tired:1 today:1",
        "see:0 you:1 soon:1",
        "the:2 results:3 look:0 good:3",
        "please:2 let:0 me:2 know:2",
    };
    std::vector<ClauseTemplate> out;
    for (const char* s : specs) out.push_back(parse_clause(s));
    return out;
  }();
  return bank;
}

template <class T, std::size_t N>
const T& pick(const std::array<T, N>& xs, std::mt19937_64& rng) {
  return xs[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)];
}

inline bool chance(double p, std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

inline int uniform(int lo, int hi, std::mt19937_64& rng) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline std::string digits(int n, std::mt19937_64& rng) {
  std::string s;
  for (int i = 0; i < n; ++i) s.push_back(static_cast<char>('0' + uniform(i == 0 ? 1 : 0, 9, rng)));
  return s;
}

inline std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

inline constexpr std::array<std::string_view, 16> onsets = {"b", "d", "j", "k", "l", "m", "n", "r",
                                                            "s", "t", "v", "br", "ch", "st", "gr", "h"};
inline constexpr std::array<std::string_view, 7> nuclei = {"a", "e", "i", "o", "u", "ai", "ee"};
inline constexpr std::array<std::string_view, 9> name_endings = {"n", "na", "la", "ra", "ro", "el", "ie", "y", "sha"};
inline constexpr std::array<std::string_view, 10> surname_suffixes = {"son", "sen", "ez", "ski", "man",
                                                                      "ley", "berg", "ova", "stein", "well"};
inline constexpr std::array<std::string_view, 11> place_suffixes = {"ville", "burg", "port", "field", "dale", "wood",
                                                                    "ham", "ton", "stad", "bridge", "haven"};
inline constexpr std::array<std::string_view, 5> place_prefixes = {"New", "San", "Fort", "East", "Lake"};
inline constexpr std::array<std::string_view, 20> shared_names = {
    "jordan",  "austin",  "florence", "georgia", "chelsea", "sydney",   "victoria", "charlotte", "madison", "dallas",
    "lincoln", "jackson", "savannah", "phoenix", "aurora",  "orlando",  "denver",   "paris",     "india",   "virginia"};
inline constexpr std::array<std::string_view, 12> months = {"January", "February", "March",     "April",
                                                            "May",     "June",     "July",      "August",
                                                            "September", "October", "November", "December"};
inline constexpr std::array<std::string_view, 8> number_words = {"twenty", "thirty", "forty",  "fifty",
                                                                 "sixty",  "seventy", "eighteen", "nineteen"};
inline constexpr std::array<std::string_view, 6> mail_domains = {"gmail.com", "yahoo.com", "mail.com",
                                                                 "outlook.com", "uni.edu", "proton.me"};
inline constexpr std::array<std::string_view, 24> professions_common = {
    "nurse",     "teacher",    "lawyer",      "accountant", "pharmacist", "electrician", "dentist",  "chef",
    "pilot",     "plumber",    "architect",   "cashier",    "mechanic",   "surgeon",     "engineer", "librarian",
    "carpenter", "journalist", "firefighter", "paramedic",  "professor",  "therapist",   "designer", "farmer"};
inline constexpr std::array<std::string_view, 8> professions_source = {
    "software engineer", "police officer",  "social worker",  "registered nurse",
    "civil engineer",    "physician assistant", "bank teller", "truck driver"};
inline constexpr std::array<std::string_view, 8> professions_target = {
    "barista", "influencer", "streamer", "uber driver", "youtuber", "dog walker", "bartender", "tattoo artist"};

inline std::string syllable(std::mt19937_64& rng) {
  return std::string(pick(onsets, rng)) + std::string(pick(nuclei, rng));
}

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream is{std::string(s)};
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

inline std::vector<std::string> make_entity(Category c, Profile p, std::mt19937_64& rng) {
  const bool tgt = p == Profile::target;
  switch (c) {
    case Category::name: {
      std::vector<std::string> out;
      if (chance(0.2, rng))
        out.push_back(capitalize(std::string(pick(shared_names, rng))));
      else
        out.push_back(capitalize(syllable(rng) + std::string(pick(name_endings, rng))));
      if (chance(tgt ? 0.4 : 0.6, rng)) out.push_back(capitalize(syllable(rng) + std::string(pick(surname_suffixes, rng))));
      return out;
    }
    case Category::location: {
      std::vector<std::string> out;
      if (chance(0.2, rng)) {
        out.push_back(capitalize(std::string(pick(shared_names, rng))));
        return out;
      }
      if (chance(0.3, rng)) out.push_back(std::string(pick(place_prefixes, rng)));
      out.push_back(capitalize(syllable(rng) + std::string(pick(place_suffixes, rng))));
      if (chance(0.1, rng)) out.push_back("City");
      return out;
    }
    case Category::age: {
      if (chance(0.15, rng)) return {std::string(pick(number_words, rng))};
      return {std::to_string(uniform(18, 95, rng))};
    }
    case Category::date: {
      const int d = uniform(1, 28, rng), m = uniform(1, 12, rng), y = uniform(1940, 2022, rng);
      auto two = [](int v) { return (v < 10 ? "0" : "") + std::to_string(v); };
      switch (uniform(0, tgt ? 4 : 3, rng)) {
        case 0: return {two(m) + "/" + two(d) + "/" + std::to_string(y)};
        case 1: return {std::to_string(y) + "-" + two(m) + "-" + two(d)};
        case 2: return {std::string(months[static_cast<std::size_t>(m - 1)]), std::to_string(d) + ",", std::to_string(y)};
        case 3: return {std::string(months[static_cast<std::size_t>(m - 1)]), std::to_string(d)};
        default: return {std::to_string(m) + "/" + std::to_string(d)};
      }
    }
    case Category::contact: {
      switch (uniform(0, 2, rng)) {
        case 0: {
          std::string user = syllable(rng) + syllable(rng);
          if (chance(0.5, rng)) user += "." + syllable(rng);
          if (chance(0.5, rng)) user += std::to_string(uniform(1, 99, rng));
          return {user + "@" + std::string(pick(mail_domains, rng))};
        }
        case 1:
          if (tgt && chance(0.5, rng)) return {digits(10, rng)};
          return {digits(3, rng) + "-" + digits(3, rng) + "-" + digits(4, rng)};
        default: return {"(" + digits(3, rng) + ")", digits(3, rng) + "-" + digits(4, rng)};
      }
    }
    case Category::id: {
      switch (uniform(0, 3, rng)) {
        case 0: return {digits(3, rng) + "-" + digits(2, rng) + "-" + digits(4, rng)};
        case 1: return {digits(uniform(7, 9, rng), rng)};
        case 2: return {std::string(1, static_cast<char>('A' + uniform(0, 25, rng))) + digits(7, rng)};
        default: return {"MRN-" + digits(6, rng)};
      }
    }
    case Category::profession: {
      const double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      if (r < 0.6) return {std::string(pick(professions_common, rng))};
      return split_words(tgt ? pick(professions_target, rng) : pick(professions_source, rng));
    }
  }
  return {};
}

inline const std::unordered_map<std::string, std::vector<std::string>>& abbreviations() {
  static const std::unordered_map<std::string, std::vector<std::string>> m = {
      {"birthday", {"bday", "bd"}}, {"born", {"b"}},       {"years", {"yrs"}},      {"year", {"yr"}},
      {"phone", {"ph", "phn"}},     {"number", {"num", "no"}}, {"you", {"u"}},      {"please", {"pls", "plz"}},
      {"live", {"liv"}},            {"today", {"2day"}},    {"the", {"da"}},         {"thanks", {"thx"}},
      {"at", {"@"}},                {"and", {"n"}},         {"text", {"txt"}},       {"email", {"e-mail"}},
      {"for", {"4"}},               {"to", {"2"}},          {"am", {"m"}},           {"is", {"iz"}},
      {"work", {"wrk"}},            {"details", {"deets"}}, {"medical", {"med"}},   {"account", {"acct"}},
      {"appointment", {"appt"}},    {"patient", {"pt"}},    {"hospital", {"hosp"}}, {"license", {"lic"}},
  };
  return m;
}

inline constexpr std::array<std::string_view, 13> noise_tokens = {
    "lol", "omg", "tbh", "smh", "rt", "@user", "#tbt", "!!!", "\xF0\x9F\x98\x82", "\xF0\x9F\x99\x8F", "...", "idk", "fr"};

struct GenToken {
  std::string raw;
  TagId tag = TagScheme::outside;
  int head_id = -1;  // id of head token, -1 = root
  int id = 0;
};

}  // namespace synth

inline Corpus generate_synthetic(std::uint64_t seed, std::size_t n_sentences, Profile profile) {
  using namespace synth;
  if (n_sentences < 1) throw ContractError("generate_synthetic needs at least one sentence");
  std::mt19937_64 rng(seed ^ (profile == Profile::source ? 0x5eedULL : 0x7a66e7ULL));
  const auto& bank = clause_bank();
  const bool tgt = profile == Profile::target;

  std::vector<std::size_t> entity_clauses, neutral_clauses;
  for (std::size_t i = 0; i < bank.size(); ++i) (bank[i].category ? entity_clauses : neutral_clauses).push_back(i);

  Corpus corpus;
  corpus.reserve(n_sentences);
  for (std::size_t s = 0; s < n_sentences; ++s) {
    int next_id = 0;
    const int n_clauses = uniform(1, 3, rng);
    std::vector<std::vector<GenToken>> clauses;
    std::vector<int> clause_roots;
    for (int c = 0; c < n_clauses; ++c) {
      const bool neutral = chance(0.15, rng);
      const auto& pool = neutral ? neutral_clauses : entity_clauses;
      const auto& ct = bank[pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]];
      // anchor id of each piece: the token its dependents attach to
      std::vector<int> anchor(ct.pieces.size());
      std::vector<std::vector<GenToken>> expanded(ct.pieces.size());
      for (std::size_t p = 0; p < ct.pieces.size(); ++p) {
        const auto& piece = ct.pieces[p];
        if (piece.slot) {
          const auto words = make_entity(*piece.slot, profile, rng);
          const int last_id = next_id + static_cast<int>(words.size()) - 1;
          for (std::size_t w = 0; w < words.size(); ++w) {
            GenToken t;
            t.raw = words[w];
            t.tag = w == 0 ? TagScheme::begin(*piece.slot) : TagScheme::inside(*piece.slot);
            t.id = next_id++;
            t.head_id = t.id == last_id ? -2 : last_id;  // -2: resolved to the piece head below
            expanded[p].push_back(std::move(t));
          }
          anchor[p] = last_id;
        } else {
          std::string word = piece.word;
          if (tgt) {
            auto it = abbreviations().find(word);
            if (it != abbreviations().end() && chance(0.7, rng))
              word = it->second[std::uniform_int_distribution<std::size_t>(0, it->second.size() - 1)(rng)];
          } else if (p == 0 && c == 0 && chance(0.5, rng)) {
            word = capitalize(word);
          }
          GenToken t;
          t.raw = word;
          t.id = next_id++;
          t.head_id = -2;
          anchor[p] = t.id;
          expanded[p].push_back(std::move(t));
        }
      }
      int root_id = -1;
      std::vector<GenToken> flat;
      for (std::size_t p = 0; p < ct.pieces.size(); ++p) {
        const int h = ct.pieces[p].head;
        for (auto& t : expanded[p]) {
          if (t.head_id == -2) t.head_id = h == 0 ? -1 : anchor[static_cast<std::size_t>(h - 1)];
          flat.push_back(t);
        }
        if (h == 0) root_id = anchor[p];
      }
      clauses.push_back(std::move(flat));
      clause_roots.push_back(root_id);
    }

    // Later clause roots attach to the first clause's root.
    for (std::size_t c = 1; c < clauses.size(); ++c)
      for (auto& t : clauses[c])
        if (t.id == clause_roots[c]) t.head_id = clause_roots[0];

    std::vector<std::size_t> order(clauses.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (tgt) std::shuffle(order.begin(), order.end(), rng);

    std::vector<GenToken> tokens;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const std::size_t c = order[k];
      if (k > 0) {
        GenToken conn;
        static constexpr std::array<std::string_view, 3> src_conn = {"and", ",", ";"};
        static constexpr std::array<std::string_view, 4> tgt_conn = {"n", "&", "and", "also"};
        conn.raw = std::string(tgt ? pick(tgt_conn, rng) : pick(src_conn, rng));
        conn.id = next_id++;
        conn.head_id = clause_roots[c];
        tokens.push_back(std::move(conn));
      }
      tokens.insert(tokens.end(), clauses[c].begin(), clauses[c].end());
    }
    if (!tgt && chance(0.5, rng)) {
      GenToken stop;
      stop.raw = ".";
      stop.id = next_id++;
      stop.head_id = clause_roots[0];
      tokens.push_back(std::move(stop));
    }
    if (tgt) {
      const int n_noise = uniform(0, 3, rng);
      for (int k = 0; k < n_noise; ++k) {
        GenToken t;
        t.raw = std::string(pick(noise_tokens, rng));
        t.id = next_id++;
        t.head_id = clause_roots[0];
        // never split an entity
        std::vector<std::size_t> slots;
        for (std::size_t pos = 0; pos <= tokens.size(); ++pos)
          if (pos == tokens.size() || !TagScheme::is_inside(tokens[pos].tag)) slots.push_back(pos);
        const auto pos = slots[std::uniform_int_distribution<std::size_t>(0, slots.size() - 1)(rng)];
        tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos), std::move(t));
      }
    }

    std::vector<int> position(static_cast<std::size_t>(next_id), 0);
    for (std::size_t i = 0; i < tokens.size(); ++i) position[static_cast<std::size_t>(tokens[i].id)] = static_cast<int>(i + 1);
    std::vector<RawToken> raw;
    raw.reserve(tokens.size());
    for (const auto& t : tokens)
      raw.push_back(RawToken{t.raw, t.head_id < 0 ? 0 : position[static_cast<std::size_t>(t.head_id)], t.tag});
    Sentence sent = normalize_sentence(std::string(to_string(profile)) + "-" + std::to_string(s + 1), raw);
    corpus.push_back(std::move(sent));
  }
  return corpus;
}

}  // namespace piie
