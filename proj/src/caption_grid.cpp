#include "skewprobe/caption_grid.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <utility>

#include "skewprobe/errors.hpp"

namespace skewprobe {

namespace {

bool is_vowel_letter(char c) {
  switch (std::tolower(static_cast<unsigned char>(c))) {
    case 'a':
    case 'e':
    case 'i':
    case 'o':
    case 'u':
      return true;
    default:
      return false;
  }
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

template <typename Range>
void require_unique_nonempty(const Range& items, std::string_view what) {
  if (items.empty()) throw ConfigError("grid: " + std::string(what) + " must not be empty");
  std::set<std::string> seen;
  for (const auto& item : items) {
    if (item.empty()) throw ConfigError("grid: empty entry in " + std::string(what));
    if (!seen.insert(item).second)
      throw ConfigError("grid: duplicate entry '" + item + "' in " + std::string(what));
  }
}

}  // namespace

void AttributeGrid::validate() const {
  require_unique_nonempty(prefixes, "prefixes");
  require_unique_nonempty(subjects, "subjects");
  if (attribute_types.empty()) throw ConfigError("grid: attribute_types must not be empty");
  std::set<std::string> names;
  for (const auto& t : attribute_types) {
    if (t.name.empty()) throw ConfigError("grid: attribute type with empty name");
    // '-' separates the two halves of a pair key.
    if (t.name.find('-') != std::string::npos)
      throw ConfigError("grid: attribute type name '" + t.name + "' must not contain '-'");
    if (!names.insert(t.name).second)
      throw ConfigError("grid: duplicate attribute type '" + t.name + "'");
    require_unique_nonempty(t.values, "values of '" + t.name + "'");
  }
  if (pairs.empty()) throw ConfigError("grid: pairs must not be empty");
  std::set<std::pair<std::size_t, std::size_t>> seen_pairs;
  for (const auto& p : pairs) {
    if (p.first >= attribute_types.size() || p.second >= attribute_types.size())
      throw ConfigError("grid: pair references unknown attribute type");
    if (p.first == p.second)
      throw ConfigError("grid: pair (" + attribute_types[p.first].name + ", " +
                        attribute_types[p.second].name + ") repeats one type");
    // Two identical pairs would emit the same template key twice.
    if (!seen_pairs.insert({p.first, p.second}).second)
      throw ConfigError("grid: duplicate template key for pair " + pair_key(p));
  }
}

std::size_t AttributeGrid::type_index(std::string_view name) const {
  for (std::size_t i = 0; i < attribute_types.size(); ++i)
    if (attribute_types[i].name == name) return i;
  throw ConfigError("unknown attribute type '" + std::string(name) + "'");
}

const AttributeType& AttributeGrid::type(std::string_view name) const {
  return attribute_types[type_index(name)];
}

std::string AttributeGrid::pair_key(const AttributePair& pair) const {
  return attribute_types.at(pair.first).name + "-" + attribute_types.at(pair.second).name;
}

const AttributePair& AttributeGrid::find_pair(std::string_view key) const {
  for (const auto& p : pairs)
    if (pair_key(p) == key) return p;
  throw ConfigError("unknown attribute pair '" + std::string(key) + "'");
}

std::string CaptionRecord::pair_key() const {
  if (attr_values.size() != 2) return {};
  return attr_values[0].type + "-" + attr_values[1].type;
}

std::string join_with_article(std::string_view prefix, std::string_view rest) {
  std::string out(prefix);
  const auto last_space = prefix.find_last_of(' ');
  const std::size_t word_start = last_space == std::string_view::npos ? 0 : last_space + 1;
  const std::string_view last_word = prefix.substr(word_start);
  if (!rest.empty() && (iequals(last_word, "a") || iequals(last_word, "an"))) {
    const bool shout = last_word == "AN";
    std::string article(1, last_word.front());
    if (is_vowel_letter(rest.front())) article += shout ? 'N' : 'n';
    out.replace(word_start, last_word.size(), article);
  }
  out += ' ';
  out += rest;
  return out;
}

std::string render_caption(std::string_view prefix, std::string_view a1, std::string_view a2,
                           std::string_view subject) {
  std::string rest;
  rest.reserve(a1.size() + a2.size() + subject.size() + 2);
  rest.append(a1).append(" ").append(a2).append(" ").append(subject);
  return join_with_article(prefix, rest);
}

std::string neutral_caption(std::string_view prefix, std::string_view subject) {
  return join_with_article(prefix, subject);
}

std::string probe_caption(std::string_view value) {
  return join_with_article("a", std::string(value) + " person");
}

std::string caption_id(std::string_view pair, std::size_t subject_index, std::size_t prefix_index,
                       std::size_t a1_index, std::size_t a2_index) {
  return prototype_set_id(pair, subject_index, prefix_index) + ":" + std::to_string(a1_index) +
         ":" + std::to_string(a2_index);
}

std::string prototype_set_id(std::string_view pair, std::size_t subject_index,
                             std::size_t prefix_index) {
  return std::string(pair) + ":" + std::to_string(subject_index) + ":" +
         std::to_string(prefix_index);
}

std::string neutral_caption_id(std::size_t subject_index, std::size_t prefix_index) {
  return std::string(kNeutralIdPrefix) + std::to_string(subject_index) + ":" +
         std::to_string(prefix_index);
}

std::string probe_caption_id(std::string_view type, std::string_view value) {
  return std::string(kProbeIdPrefix) + std::string(type) + ":" + std::string(value);
}

std::vector<CounterfactualSet> build_corpus(const AttributeGrid& grid) {
  grid.validate();
  std::vector<CounterfactualSet> sets;
  sets.reserve(grid.pairs.size() * grid.subjects.size() * grid.prefixes.size());
  for (const auto& pair : grid.pairs) {
    const auto key = grid.pair_key(pair);
    const auto& first = grid.attribute_types[pair.first];
    const auto& second = grid.attribute_types[pair.second];
    for (std::size_t s = 0; s < grid.subjects.size(); ++s) {
      for (std::size_t p = 0; p < grid.prefixes.size(); ++p) {
        CounterfactualSet set;
        set.set_id = prototype_set_id(key, s, p);
        set.key = {grid.prefixes[p], grid.subjects[s], key};
        set.members.reserve(first.values.size() * second.values.size());
        for (std::size_t i = 0; i < first.values.size(); ++i) {
          for (std::size_t j = 0; j < second.values.size(); ++j) {
            CaptionRecord rec;
            rec.caption_id = caption_id(key, s, p, i, j);
            rec.prefix = grid.prefixes[p];
            rec.subject = grid.subjects[s];
            rec.attr_values = {{first.name, first.values[i]}, {second.name, second.values[j]}};
            rec.text = render_caption(rec.prefix, first.values[i], second.values[j], rec.subject);
            set.members.push_back(std::move(rec));
          }
        }
        sets.push_back(std::move(set));
      }
    }
  }
  return sets;
}

std::vector<CaptionRecord> corpus_captions(const AttributeGrid& grid) {
  std::vector<CaptionRecord> out;
  for (auto& set : build_corpus(grid))
    for (auto& m : set.members) out.push_back(std::move(m));
  return out;
}

std::vector<CaptionRecord> neutral_captions(const AttributeGrid& grid) {
  grid.validate();
  std::vector<CaptionRecord> out;
  out.reserve(grid.subjects.size() * grid.prefixes.size());
  for (std::size_t s = 0; s < grid.subjects.size(); ++s) {
    for (std::size_t p = 0; p < grid.prefixes.size(); ++p) {
      out.push_back({neutral_caption_id(s, p), grid.prefixes[p], grid.subjects[s], {},
                     neutral_caption(grid.prefixes[p], grid.subjects[s])});
    }
  }
  return out;
}

std::vector<CaptionRecord> probe_captions(const AttributeGrid& grid) {
  grid.validate();
  std::vector<CaptionRecord> out;
  for (const auto& t : grid.attribute_types) {
    for (const auto& v : t.values) {
      out.push_back({probe_caption_id(t.name, v), "", "", {{t.name, v}}, probe_caption(v)});
    }
  }
  return out;
}

std::vector<DuplicateText> find_duplicate_texts(const std::vector<CaptionRecord>& captions) {
  std::map<std::string, std::vector<std::string>> by_text;
  for (const auto& c : captions) by_text[c.text].push_back(c.caption_id);
  std::vector<DuplicateText> dups;
  for (auto& [text, ids] : by_text)
    if (ids.size() > 1) dups.push_back({text, std::move(ids)});
  return dups;
}

std::uint64_t SplitMix64::next() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

OccupationSplit split_occupations(std::vector<std::string> subjects, double test_fraction,
                                  std::uint64_t seed) {
  if (subjects.empty()) throw ConfigError("split: subject list is empty");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("split: test fraction must lie strictly between 0 and 1");
  // std::string comparison is byte order.
  std::sort(subjects.begin(), subjects.end());
  if (std::adjacent_find(subjects.begin(), subjects.end()) != subjects.end())
    throw ConfigError("split: subjects must be unique");

  SplitMix64 rng(seed);
  for (std::size_t i = subjects.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.next() % (i + 1));
    std::swap(subjects[i], subjects[j]);
  }

  const auto n_test =
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(subjects.size())));
  OccupationSplit split;
  split.seed = seed;
  split.test_fraction = test_fraction;
  split.test.assign(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.train.assign(subjects.begin() + static_cast<std::ptrdiff_t>(n_test), subjects.end());
  return split;
}

}  // namespace skewprobe
