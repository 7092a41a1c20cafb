#pragma once

// On-disk inputs for CLI tests and the acceptance runner.

#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>

#include "skewprobe/cli.hpp"
#include "skewprobe/json_io.hpp"
#include "skewprobe/serialization.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

namespace skewprobe::testing {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "skewprobe");
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// Runs the real binary through the shell; returns its exit status.
inline int run_binary(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" + SKEWPROBE_CLI_PATH + "\" " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

inline void write_captions(const std::filesystem::path& p, const std::vector<CaptionRecord>& captions) {
  std::string text;
  for (const auto& c : captions) text += json(c).dump() + "\n";
  spit(p, text);
}

inline void write_thresholds(const std::filesystem::path& p, const DetectabilityThresholds& t) {
  spit(p, thresholds_to_json(t).dump());
}

/// Several subjects over a 2x2 (race, gender) segment. With `balanced` each
/// subject has exactly one image per combination; otherwise subject "biased"
/// also has four Asian-male images closer to its query than anything else.
inline EmbeddingStore audit_store(std::mt19937_64& rng, bool balanced, std::size_t subjects = 6,
                                  std::size_t dim = 8) {
  const std::vector<std::string> races{"Asian", "Indian"};
  const std::vector<std::string> genders{"male", "female"};
  StoreBuilder b(dim);
  for (std::size_t s = 0; s < subjects; ++s) {
    const std::string subject = (!balanced && s == 0) ? "biased" : "subject" + std::to_string(s);
    for (std::size_t p = 0; p < 2; ++p) b.add_text(neutral_caption_id(s, p), subject, {}, random_unit(rng, dim));
    for (std::size_t set = 0; set < 3; ++set) {
      for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
          const auto cid = caption_id("race-gender", s, 0, i, j);
          const auto id = subject + ":" + std::to_string(set) + ":" + std::to_string(i) + std::to_string(j);
          b.add_image(id, cid, "race-gender:" + std::to_string(s) + ":0#" + std::to_string(set), subject,
                      {{"race", races[i]}, {"gender", genders[j]}}, random_unit(rng, dim));
        }
      }
      if (balanced) break;
    }
    if (!balanced && s == 0) {
      // Duplicate the subject's neutral mean direction on the planted images.
      std::vector<double> m(dim, 0.0);
      for (std::size_t r = 0; r < b.records().size(); ++r) {
        const auto& rec = b.records()[r];
        if (rec.subject == subject && rec.modality == Modality::text)
          for (std::size_t d = 0; d < dim; ++d) m[d] += b.vectors()[r * dim + d];
      }
      for (int extra = 0; extra < 4; ++extra) {
        auto v = m;
        v[static_cast<std::size_t>(extra)] += 0.01 * (extra + 1);
        b.add_image("biased:planted" + std::to_string(extra), caption_id("race-gender", s, 0, 0, 0),
                    "race-gender:0:0#planted" + std::to_string(extra), subject,
                    {{"race", "Asian"}, {"gender", "male"}}, normalized(v));
      }
    }
  }
  return b.build();
}

}  // namespace skewprobe::testing
