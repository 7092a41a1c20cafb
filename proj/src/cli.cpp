#include "skewprobe/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "skewprobe/caption_grid.hpp"
#include "skewprobe/embedding_store.hpp"
#include "skewprobe/errors.hpp"
#include "skewprobe/filter_pipeline.hpp"
#include "skewprobe/parallel.hpp"
#include "skewprobe/serialization.hpp"
#include "skewprobe/skew_metrics.hpp"

namespace skewprobe {

namespace {

// Line-delimited JSON events on the error stream.
class EventLog {
 public:
  explicit EventLog(std::ostream& err) : err_(err) {}

  void emit(std::string_view level, std::string_view event, json fields = json::object()) {
    fields["level"] = level;
    fields["event"] = event;
    err_ << dump_json(fields) << '\n';
  }

 private:
  std::ostream& err_;
};

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_text_file(path, text);
  }
}

std::vector<std::string> split_pair(const std::string& pair) {
  const auto dash = pair.find('-');
  if (dash == std::string::npos || dash == 0 || dash + 1 == pair.size() ||
      pair.find('-', dash + 1) != std::string::npos)
    throw ConfigError("pair must look like TYPE-TYPE, got '" + pair + "'");
  std::vector<std::string> types{pair.substr(0, dash), pair.substr(dash + 1)};
  if (types[0] == types[1]) throw ConfigError("pair '" + pair + "' repeats one type");
  return types;
}

EmbeddingStore open_normalized_store(const std::string& dir) {
  auto store = EmbeddingStore::open(dir);
  if (!store.manifest().normalized) throw DataError("store " + dir + " is not flagged normalized");
  const auto report = validate_normalization(store);
  if (!report.pass)
    throw DataError("store " + dir + ": " + std::to_string(report.deviations.size()) +
                    " rows off unit norm, first is row " + std::to_string(report.deviations.front().row));
  return store;
}

std::vector<CaptionRecord> read_captions(const std::string& path) {
  std::vector<CaptionRecord> captions;
  std::size_t line = 0;
  for (const auto& j : read_jsonl_file(path)) {
    ++line;
    try {
      captions.push_back(j.get<CaptionRecord>());
    } catch (const json::exception& e) {
      throw DataError(path + ": record " + std::to_string(line) + ": " + e.what());
    }
  }
  return captions;
}

// JSON array, object with a "test" list (split output), or one subject per line.
std::vector<std::string> read_subject_list(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto parsed = json::parse(text, nullptr, false);
  if (!parsed.is_discarded()) {
    try {
      if (parsed.is_array()) return parsed.get<std::vector<std::string>>();
      if (parsed.is_object() && parsed.contains("test"))
        return parsed.at("test").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
  std::vector<std::string> subjects;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) subjects.push_back(line);
  }
  return subjects;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// ---------------------------------------------------------------- commands

struct GenCaptionsOptions {
  std::string grid;
  std::string out;
  std::string neutral;
  std::string probes;
};

std::string to_jsonl(const std::vector<CaptionRecord>& records) {
  std::string text;
  for (const auto& r : records) {
    text += dump_json(json(r));
    text += '\n';
  }
  return text;
}

int cmd_gen_captions(const GenCaptionsOptions& o, std::ostream& out, EventLog& log) {
  const auto grid = grid_from_json(read_json_file(o.grid));
  const auto captions = corpus_captions(grid);
  const auto dups = find_duplicate_texts(captions);
  for (const auto& d : dups) log.emit("warning", "duplicate_caption_text", {{"text", d.text}, {"caption_ids", d.caption_ids}});
  write_output(o.out, to_jsonl(captions), out);
  if (!o.neutral.empty()) write_text_file(o.neutral, to_jsonl(neutral_captions(grid)));
  if (!o.probes.empty()) write_text_file(o.probes, to_jsonl(probe_captions(grid)));
  log.emit("info", "captions_written",
           {{"captions", captions.size()},
            {"sets", grid.pairs.size() * grid.subjects.size() * grid.prefixes.size()},
            {"duplicate_texts", dups.size()}});
  return kExitOk;
}

struct SplitOptions {
  std::string grid;
  std::string subjects;
  std::string out;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

int cmd_split(const SplitOptions& o, std::ostream& out, EventLog& log) {
  if (o.grid.empty() == o.subjects.empty()) throw ConfigError("split: give exactly one of --grid or --subjects");
  const auto subjects =
      o.grid.empty() ? read_subject_list(o.subjects) : grid_from_json(read_json_file(o.grid)).subjects;
  const auto split = split_occupations(subjects, o.test_fraction, o.seed);
  write_output(o.out, dump_json(json(split), 2) + "\n", out);
  log.emit("info", "split_written", {{"train", split.train.size()}, {"test", split.test.size()}});
  return kExitOk;
}

struct ValidateOptions {
  std::string store;
  std::string out;
};

int cmd_validate_store(const ValidateOptions& o, std::ostream& out, EventLog& log) {
  const auto store = EmbeddingStore::open(o.store);
  const auto report = validate_normalization(store);
  json deviations = json::array();
  for (const auto& d : report.deviations) deviations.push_back({{"row", d.row}, {"norm", d.norm}});
  const json doc = {{"count", store.size()},
                    {"dim", store.dim()},
                    {"normalized", store.manifest().normalized},
                    {"pass", report.pass && store.manifest().normalized},
                    {"deviations", deviations}};
  write_output(o.out, dump_json(doc, 2) + "\n", out);
  log.emit(report.pass ? "info" : "error", "store_validated",
           {{"rows", store.size()}, {"deviations", report.deviations.size()}});
  return doc["pass"].get<bool>() ? kExitOk : kExitDataError;
}

struct FilterOptions {
  std::string store;
  std::string captions;
  std::string thresholds;
  std::string out;
  std::string funnel;
  double tau = kDefaultSimilarityTau;
  double nsfw_threshold = kDefaultNsfwThreshold;
};

int cmd_filter(const FilterOptions& o, std::ostream& out, EventLog& log) {
  FilterConfig config;
  config.tau = o.tau;
  config.nsfw_threshold = o.nsfw_threshold;
  config.thresholds = thresholds_from_json(read_json_file(o.thresholds));
  config.threads = resolve_thread_count();
  const auto captions = read_captions(o.captions);
  const auto store = open_normalized_store(o.store);

  const auto candidates = assemble_candidates(store, captions);
  check_thresholds(candidates, config.thresholds);
  const auto result = run_funnel(candidates, store, config);

  write_output(o.out, dump_json(kept_to_json(result), 2) + "\n", out);
  if (!o.funnel.empty()) write_text_file(o.funnel, dump_json(funnel_to_json(result), 2) + "\n");
  log.emit("info", "funnel",
           {{"input", result.total.input},
            {"after_similarity", result.total.surviving[0]},
            {"after_nsfw", result.total.surviving[1]},
            {"after_detectability", result.total.surviving[2]}});
  return kExitOk;
}

struct LearnOptions {
  std::string labels;
  std::string store;
  std::string pair;
  std::string out;
  bool use_label_counts = false;
};

int cmd_learn_thresholds(const LearnOptions& o, std::ostream& out, EventLog& log) {
  const auto types = split_pair(o.pair);
  std::vector<ManualLabel> labels;
  for (const auto& j : read_jsonl_file(o.labels)) {
    try {
      labels.push_back(manual_label_from_json(j));
    } catch (const json::exception& e) {
      throw DataError(o.labels + ": label " + std::to_string(labels.size() + 1) + ": " + e.what());
    }
  }
  if (labels.empty()) throw DataError(o.labels + ": no labels");

  const auto store = EmbeddingStore::open(o.store);
  std::map<std::string, CandidateSet> sets;
  for (auto& c : candidates_from_store(store)) sets.emplace(c.set_id, std::move(c));

  std::optional<int> set_size;
  std::map<std::string, std::vector<LabeledCount>> per_type;
  for (const auto& label : labels) {
    auto it = sets.find(label.set_id);
    if (it == sets.end()) throw DataError("labeled set '" + label.set_id + "' not found in store");
    const auto& cand = it->second;
    if (cand.key.pair != o.pair)
      throw DataError("labeled set '" + label.set_id + "' belongs to pair '" + cand.key.pair + "'");
    const int size = static_cast<int>(cand.members.size());
    if (set_size && *set_size != size) throw DataError("labeled sets differ in size");
    set_size = size;
    for (const auto& type : types) {
      auto entry = label.per_type.find(type);
      if (entry == label.per_type.end())
        throw DataError("label for set '" + label.set_id + "' has no '" + type + "' entry");
      const int count = o.use_label_counts ? entry->second.detectable_count
                                           : static_cast<int>(detectability_count(cand, store, type));
      per_type[type].push_back({count, entry->second.keep});
    }
  }

  DetectabilityThresholds thresholds;
  if (!o.out.empty() && o.out != "-" && std::filesystem::exists(o.out))
    thresholds = thresholds_from_json(read_json_file(o.out));
  auto& slot = thresholds[o.pair];
  slot.clear();
  for (const auto& type : types) {
    const auto& samples = per_type.at(type);
    const int t = learn_threshold(samples, *set_size);
    slot[type] = t;
    log.emit("info", "threshold_learned",
             {{"pair", o.pair},
              {"type", type},
              {"threshold", t},
              {"agreement", threshold_agreement(samples, t)},
              {"labels", samples.size()}});
  }
  write_output(o.out, dump_json(thresholds_to_json(thresholds), 2) + "\n", out);
  return kExitOk;
}

struct AuditOptions {
  std::string store;
  std::string pair;
  std::string k = "auto";
  std::string desired = "uniform";
  std::string subjects = "all";
  std::string marginal;
  std::string out;
  std::string csv;
  std::string grid;
  std::string kept;
};

int cmd_audit(const AuditOptions& o, std::ostream& out, EventLog& log) {
  const unsigned threads = resolve_thread_count();
  const auto pair_types = split_pair(o.pair);
  std::optional<AttributeGrid> grid;
  if (!o.grid.empty()) {
    grid = grid_from_json(read_json_file(o.grid));
    grid->find_pair(o.pair);
  }
  const auto store = open_normalized_store(o.store);

  const std::multiset<std::string> segment(pair_types.begin(), pair_types.end());
  auto in_segment = [&](const EmbeddingRecord& r) {
    if (r.modality != Modality::image) return false;
    std::multiset<std::string> types;
    for (const auto& av : r.attr_values) types.insert(av.type);
    return types == segment;
  };

  std::vector<PoolFilter> restrictions;
  if (!o.kept.empty()) {
    const auto doc = read_json_file(o.kept);
    std::set<std::string> kept;
    try {
      for (const auto& id : doc.at("kept")) kept.insert(id.get<std::string>());
    } catch (const json::exception& e) {
      throw ConfigError(o.kept + ": " + e.what());
    }
    restrictions.push_back([kept = std::move(kept)](const EmbeddingRecord& r) { return kept.contains(r.set_id); });
  }

  std::vector<std::string> target_types = pair_types;
  json marginal_doc = nullptr;
  if (!o.marginal.empty()) {
    const auto eq = o.marginal.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == o.marginal.size())
      throw ConfigError("--marginal must look like TYPE=VALUE");
    const auto type = o.marginal.substr(0, eq);
    const auto value = o.marginal.substr(eq + 1);
    auto pos = std::find(pair_types.begin(), pair_types.end(), type);
    if (pos == pair_types.end()) throw ConfigError("marginal type '" + type + "' is not part of pair " + o.pair);
    restrictions.push_back(grid ? marginal_pool(*grid, type, value) : marginal_pool(store, type, value));
    target_types = {pair_types[pos == pair_types.begin() ? 1 : 0]};
    marginal_doc = {{"type", type}, {"value", value}};
  }

  auto restrict = [restrictions](const EmbeddingRecord& r) {
    return std::all_of(restrictions.begin(), restrictions.end(), [&](const PoolFilter& f) { return f(r); });
  };

  // Attribute value universe: grid order when given, else first appearance in the segment.
  auto values_of = [&](const std::string& type) {
    if (grid) return grid->type(type).values;
    std::vector<std::string> values;
    for (const auto& r : store.records()) {
      if (!in_segment(r)) continue;
      const auto* v = r.attr(type);
      if (v && std::find(values.begin(), values.end(), *v) == values.end()) values.push_back(*v);
    }
    if (values.empty()) throw DataError("store has no images for pair " + o.pair);
    return values;
  };

  std::vector<std::vector<std::string>> target_values;
  for (const auto& t : target_types) target_values.push_back(values_of(t));
  DesiredDistribution desired;
  if (o.desired == "uniform") {
    desired = DesiredDistribution::uniform(target_types, target_values);
  } else {
    desired = desired_from_json(read_json_file(o.desired));
    if (desired.types != target_types)
      throw ConfigError("desired distribution types [" + join(desired.types, ",") +
                        "] do not match audited types [" + join(target_types, ",") + "]");
  }

  std::size_t k = 0;
  if (o.k == "auto") {
    k = desired.probs.size();
  } else {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(o.k, &used);
      if (used != o.k.size() || v < 1) throw std::invalid_argument(o.k);
      k = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ConfigError("--k must be 'auto' or a positive integer, got '" + o.k + "'");
    }
  }

  std::vector<std::string> subjects;
  if (o.subjects == "all") {
    std::set<std::string> seen;
    for (const auto& r : store.records())
      if (in_segment(r) && restrict(r)) seen.insert(r.subject);
    subjects.assign(seen.begin(), seen.end());
  } else {
    subjects = read_subject_list(o.subjects);
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  }
  if (subjects.empty()) throw DataError("no subjects to audit for pair " + o.pair);

  AuditSpec spec;
  spec.segment_types = pair_types;
  spec.target_types = target_types;
  spec.k = k;
  spec.desired = desired;
  spec.restrict = restrict;

  std::vector<SkewReport> reports(subjects.size());
  parallel_for(subjects.size(), threads,
               [&](std::size_t i) { reports[i] = audit_subject(store, subjects[i], spec); });

  std::map<std::string, SkewReport> by_subject;
  for (auto& r : reports) by_subject.emplace(r.subject, std::move(r));
  const auto summary = summarize_corpus(std::move(by_subject));

  json per_subject = json::object();
  for (const auto& [s, r] : summary.per_subject) per_subject[s] = report_to_json(r);
  const json doc = {{"pair", o.pair},
                    {"target_types", target_types},
                    {"marginal", marginal_doc},
                    {"k", k},
                    {"desired", desired_to_json(desired)},
                    {"reports", per_subject},
                    {"summary", summary_to_json(summary)}};
  write_output(o.out, dump_json(doc, 2) + "\n", out);

  if (!o.csv.empty()) {
    std::string csv = "subject,k,max_skew";
    for (const auto& [combo, p] : desired.probs) csv += "," + csv_field("p:" + join(combo, "|"));
    csv += '\n';
    for (const auto& [s, r] : summary.per_subject) {
      csv += csv_field(s) + "," + std::to_string(r.k) + "," + format_double(r.max_skew);
      for (const auto& [combo, p] : r.proportions) csv += "," + format_double(p);
      csv += '\n';
    }
    write_text_file(o.csv, csv);
  }
  log.emit("info", "audit_done",
           {{"pair", o.pair},
            {"subjects", summary.per_subject.size()},
            {"k", k},
            {"mean_max_skew", summary.mean_max_skew}});
  return kExitOk;
}

// ------------------------------------------------------------ config merge

// Turns `--config FILE` into ordinary flags inserted right after the
// subcommand name, so anything given explicitly on the command line (which
// comes later and wins under TakeLast) overrides the file. Top-level keys
// apply to every subcommand; an object keyed by the subcommand name wins
// over them.
std::vector<std::string> expand_config(const std::vector<std::string>& args, const CLI::App& app) {
  if (args.size() < 2) return args;
  std::string config_path;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].starts_with("--config=")) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;
  const CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[1]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }

  const auto doc = read_json_file(config_path);
  if (!doc.is_object()) throw ConfigError("config " + config_path + " must be a JSON object");
  std::map<std::string, json> entries;
  for (const auto& [key, value] : doc.items())
    if (!value.is_object()) entries[key] = value;
  if (doc.contains(args[1]) && doc.at(args[1]).is_object())
    for (const auto& [key, value] : doc.at(args[1]).items()) entries[key] = value;

  std::vector<std::string> injected;
  for (const auto& [key, value] : entries) {
    if (key == "config") continue;
    const auto* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) injected.push_back("--" + key);
    } else if (value.is_string()) {
      injected.push_back("--" + key);
      injected.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      injected.push_back("--" + key);
      injected.push_back(value.is_number_float() ? format_double(value.get<double>()) : value.dump());
    } else {
      throw ConfigError("config key '" + key + "' must be a string, number or boolean");
    }
  }
  std::vector<std::string> merged(args.begin(), args.begin() + 2);
  merged.insert(merged.end(), injected.begin(), injected.end());
  merged.insert(merged.end(), args.begin() + 2, args.end());
  return merged;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  EventLog log(err);
  CLI::App app{"Counterfactual retrieval bias audits: captions, filtering, Skew@K reports", "skewprobe"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  std::string ignored_config;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", ignored_config, "JSON file of option defaults; flags win");
  };

  GenCaptionsOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-captions", "Render counterfactual captions from a grid config");
  gen_cmd->add_option("--grid", gen.grid, "Grid config JSON")->required();
  gen_cmd->add_option("--out", gen.out, "Captions JSON-lines (default: stdout)");
  gen_cmd->add_option("--neutral", gen.neutral, "Also write attribute-neutral captions here");
  gen_cmd->add_option("--probes", gen.probes, "Also write 'a/an X person' probe captions here");
  add_config(gen_cmd);

  SplitOptions split;
  auto* split_cmd = app.add_subcommand("split", "Seeded train/test split of subjects");
  split_cmd->add_option("--grid", split.grid, "Grid config JSON supplying the subjects");
  split_cmd->add_option("--subjects", split.subjects, "Subject list (JSON array or one per line)");
  split_cmd->add_option("--test-fraction", split.test_fraction, "Share of subjects withheld for test");
  split_cmd->add_option("--seed", split.seed, "SplitMix64 seed");
  split_cmd->add_option("--out", split.out, "split.json (default: stdout)");
  add_config(split_cmd);

  ValidateOptions validate;
  auto* validate_cmd = app.add_subcommand("validate-store", "Check store structure and unit norms");
  validate_cmd->add_option("--store", validate.store, "Store directory")->required();
  validate_cmd->add_option("--out", validate.out, "Report JSON (default: stdout)");
  add_config(validate_cmd);

  FilterOptions filter;
  auto* filter_cmd = app.add_subcommand("filter", "Run the three-stage candidate filter");
  filter_cmd->add_option("--store", filter.store, "Store directory")->required();
  filter_cmd->add_option("--captions", filter.captions, "Caption corpus JSON-lines")->required();
  filter_cmd->add_option("--thresholds", filter.thresholds, "Detectability thresholds JSON")->required();
  filter_cmd->add_option("--tau", filter.tau, "Minimum cosine similarity");
  filter_cmd->add_option("--nsfw-threshold", filter.nsfw_threshold, "Discard sets with any score at or above this");
  filter_cmd->add_option("--out", filter.out, "kept.json (default: stdout)");
  filter_cmd->add_option("--funnel", filter.funnel, "funnel.json");
  add_config(filter_cmd);

  LearnOptions learn;
  auto* learn_cmd = app.add_subcommand("learn-thresholds", "Fit detectability thresholds to manual labels");
  learn_cmd->add_option("--labels", learn.labels, "Manual labels JSON-lines")->required();
  learn_cmd->add_option("--store", learn.store, "Store directory")->required();
  learn_cmd->add_option("--pair", learn.pair, "Attribute pair, e.g. race-gender")->required();
  learn_cmd->add_option("--out", learn.out, "thresholds.json, merged if present (default: stdout)");
  learn_cmd->add_flag("--use-label-counts", learn.use_label_counts,
                      "Fit against the annotated counts instead of probe-classifier counts");
  add_config(learn_cmd);

  AuditOptions audit;
  auto* audit_cmd = app.add_subcommand("audit", "Skew@K / MaxSkew@K report per subject");
  audit_cmd->add_option("--store", audit.store, "Store directory")->required();
  audit_cmd->add_option("--pair", audit.pair, "Attribute pair, e.g. race-gender")->required();
  audit_cmd->add_option("--k", audit.k, "'auto' (product of attribute set sizes) or an integer");
  audit_cmd->add_option("--desired", audit.desired, "'uniform' or a desired-distribution JSON file");
  audit_cmd->add_option("--subjects", audit.subjects, "'all' or a subject list file (split.json works)");
  audit_cmd->add_option("--marginal", audit.marginal, "TYPE=VALUE: audit the other type on this slice");
  audit_cmd->add_option("--out", audit.out, "report.json (default: stdout)");
  audit_cmd->add_option("--csv", audit.csv, "Flat per-subject CSV");
  audit_cmd->add_option("--grid", audit.grid, "Grid config fixing attribute value order");
  audit_cmd->add_option("--kept", audit.kept, "kept.json from filter: restrict pools to kept sets");
  add_config(audit_cmd);

  try {
    const auto expanded = expand_config(args, app);
    std::vector<const char*> argv;
    argv.reserve(expanded.size());
    for (const auto& a : expanded) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitConfigError;
    }

    if (*gen_cmd) return cmd_gen_captions(gen, out, log);
    if (*split_cmd) return cmd_split(split, out, log);
    if (*validate_cmd) return cmd_validate_store(validate, out, log);
    if (*filter_cmd) return cmd_filter(filter, out, log);
    if (*learn_cmd) return cmd_learn_thresholds(learn, out, log);
    if (*audit_cmd) return cmd_audit(audit, out, log);
    return kExitConfigError;
  } catch (const ConfigError& e) {
    log.emit("error", "config_error", {{"message", e.what()}});
    return kExitConfigError;
  } catch (const std::exception& e) {
    log.emit("error", "data_error", {{"message", e.what()}});
    return kExitDataError;
  }
}

}  // namespace skewprobe
