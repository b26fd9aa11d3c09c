#include "biaslab/promptlab.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "biaslab/common.h"
#include "biaslab/labelspace.h"

namespace biaslab::prompt {

void PromptSpec::validate() const {
  if (options.empty()) throw ConfigError("prompt spec has no options");
  std::set<std::string> letters;
  for (const OptionSpec& o : options) {
    if (o.letter.empty() || o.text.empty()) {
      throw ConfigError("prompt option with empty letter or text");
    }
    if (!letters.insert(o.letter).second) {
      throw ConfigError("duplicate option letter \"" + o.letter + "\"");
    }
  }
  for (const Shot& s : shots) {
    if (trim(s.sentence).empty()) {
      throw ConfigError("shot with empty sentence");
    }
    if (!letters.count(s.answer_letter)) {
      throw ConfigError("shot answer \"" + s.answer_letter +
                        "\" is not an option letter");
    }
  }
}

const std::vector<std::string>& instruction_catalog() {
  static const std::vector<std::string> catalog = {
      "Given a sentence, predict if the sentence contains a bias or not.",
      "Classify the given sentence as biased or not.",
      "Given a sentence, find if it contains a bias.",
      "Analyse the sentence and predict if it contains a bias or not.",
      "Decide if the given sentence contains a bias.",
      "Identify whether the given sentence is free from bias or not.",
  };
  return catalog;
}

std::vector<OptionSpec> default_options(const std::string& task) {
  const auto& aliases = labels::task_aliases(task);
  std::string neg = aliases.negative_name;
  std::string pos = aliases.positive_name;
  std::replace(neg.begin(), neg.end(), '_', ' ');
  std::replace(pos.begin(), pos.end(), '_', ' ');
  return {{"A", neg}, {"B", pos}};
}

namespace {

std::string options_block(const std::vector<OptionSpec>& options) {
  std::vector<std::string> lines;
  for (const OptionSpec& o : options) lines.push_back(o.letter + ". " + o.text);
  return join(lines, "\n");
}

}  // namespace

std::vector<std::string> build_prompt(const PromptSpec& spec,
                                      const std::string& sentence) {
  spec.validate();
  std::string query = collapse_whitespace(sentence);
  if (query.empty()) {
    throw DataError("build_prompt: empty sentence");
  }
  const std::string opts = options_block(spec.options);
  std::vector<std::string> blocks;
  if (!spec.instruction.empty()) blocks.push_back(spec.instruction);
  for (const Shot& s : spec.shots) {
    blocks.push_back("Sentence: " + collapse_whitespace(s.sentence) + "\n" +
                     opts + "\nAnswer: " + s.answer_letter);
  }
  std::string prefix = join(blocks, "\n");
  if (!prefix.empty()) prefix += "\n";

  std::vector<std::string> candidates;
  for (const OptionSpec& o : spec.options) {
    candidates.push_back(prefix + "Sentence: " + query + "\n" + opts +
                         "\nAnswer: " + o.letter);
  }
  return candidates;
}

// ---------------------------------------------------------------------------
// Deterministic marker LM. Whitespace tokens; a bare letter token is scored
// from the marker words seen since the previous letter token (pro markers
// lower its NLL, markers for other letters raise it); every other token gets
// a fixed pseudo-random NLL in [1, 3).

namespace {

class MarkerLm final : public LmBackend {
 public:
  MarkerLm(std::uint64_t seed,
           std::vector<std::pair<std::string, std::string>> lexicon)
      : seed_(seed) {
    for (auto& [word, letter] : lexicon) {
      lexicon_[word] = letter;
    }
  }

  std::string id() const override { return "marker_lm"; }

  std::pair<double, std::size_t> sequence_nll(const std::string& text) override {
    std::vector<std::string> tokens = split_whitespace(text);
    if (tokens.empty()) {
      throw DataError("marker_lm: cannot score an empty sequence");
    }
    double total = 0.0;
    std::size_t window_start = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const std::string& tok = tokens[i];
      if (is_letter_token(tok)) {
        int pro = 0, anti = 0;
        for (std::size_t j = window_start; j < i; ++j) {
          auto it = lexicon_.find(tokens[j]);
          if (it == lexicon_.end()) continue;
          if (it->second == tok) {
            ++pro;
          } else {
            ++anti;
          }
        }
        total += std::clamp(2.0 - 0.5 * (pro - anti), 0.1, 4.0);
        window_start = i + 1;
      } else {
        const std::string prev = i == 0 ? std::string() : tokens[i - 1];
        std::uint64_t h = mix64(seed_, mix64(fnv1a64(prev), fnv1a64(tok)));
        total += 1.0 + 2.0 * ((h >> 11) * 0x1.0p-53);
      }
    }
    return {total, tokens.size()};
  }

 private:
  static bool is_letter_token(const std::string& tok) {
    return tok.size() == 1 && tok[0] >= 'A' && tok[0] <= 'D';
  }

  std::uint64_t seed_;
  std::map<std::string, std::string> lexicon_;
};

std::vector<std::pair<std::string, std::string>> default_lexicon() {
  return {
      // Instruction words that steer the answer letter.
      {"predict", "B"},
      {"Analyse", "A"},
      // Fixture vocabulary.
      {"prejudiced", "B"},
      {"inferior", "B"},
      {"stubborn", "B"},
      {"garden", "A"},
      {"window", "A"},
      {"gentle", "A"},
  };
}

}  // namespace

std::unique_ptr<LmBackend> make_lm_backend(const std::string& backend_id,
                                           std::uint64_t seed) {
  if (backend_id == "marker_lm") {
    return std::make_unique<MarkerLm>(seed, default_lexicon());
  }
  throw ConfigError("unknown LM backend \"" + backend_id +
                    "\" (available: marker_lm); bind real language models "
                    "through the LmBackend interface");
}

std::unique_ptr<LmBackend> make_marker_lm(
    std::uint64_t seed,
    const std::vector<std::pair<std::string, std::string>>& lexicon) {
  return std::make_unique<MarkerLm>(seed, lexicon);
}

std::vector<CandidateScore> score_candidates(
    LmBackend& lm, const std::vector<OptionSpec>& options,
    const std::vector<std::string>& candidates) {
  if (options.size() != candidates.size()) {
    throw ShapeError("score_candidates: " + std::to_string(options.size()) +
                     " options but " + std::to_string(candidates.size()) +
                     " candidates");
  }
  std::vector<CandidateScore> scores;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    CandidateScore s;
    s.letter = options[i].letter;
    try {
      auto [nll, count] = lm.sequence_nll(candidates[i]);
      s.nll = nll;
      s.token_count = count;
    } catch (const std::exception& e) {
      throw DataError("scoring failed for option " + s.letter + ": " +
                      e.what());
    }
    if (s.token_count == 0) {
      throw DataError("scoring failed for option " + s.letter +
                      ": zero tokens");
    }
    s.perplexity = std::exp(s.nll / static_cast<double>(s.token_count));
    scores.push_back(std::move(s));
  }
  return scores;
}

namespace {

std::size_t argmin_by(const std::vector<CandidateScore>& scores, RankBy rank) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    double a = rank == RankBy::perplexity ? scores[i].perplexity : scores[i].nll;
    double b = rank == RankBy::perplexity ? scores[best].perplexity
                                          : scores[best].nll;
    if (a < b) best = i;
  }
  return best;
}

}  // namespace

std::string pick_answer(const std::vector<CandidateScore>& scores, RankBy rank) {
  if (scores.empty()) throw DataError("pick_answer: no scores");
  return scores[argmin_by(scores, rank)].letter;
}

bool ranking_methods_disagree(const std::vector<CandidateScore>& scores) {
  if (scores.empty()) return false;
  return argmin_by(scores, RankBy::perplexity) !=
         argmin_by(scores, RankBy::raw_nll);
}

std::vector<Shot> sample_shots(const std::vector<corpus::SentenceRecord>& pool,
                               std::size_t k, std::uint64_t seed,
                               const std::string& task,
                               const std::vector<OptionSpec>& options) {
  if (pool.size() < k) {
    throw DataError("sample_shots: pool of " + std::to_string(pool.size()) +
                    " is smaller than k = " + std::to_string(k));
  }
  DetRng rng(mix64(seed, fnv1a64("shots")));
  std::vector<std::size_t> picks = rng.sample_indices(pool.size(), k);
  std::vector<Shot> shots;
  for (std::size_t idx : picks) {
    const corpus::SentenceRecord& r = pool[idx];
    int gold = corpus::task_gold(r, task);
    if (gold < 0 || gold >= static_cast<int>(options.size())) {
      throw DataError("sample_shots: label " + std::to_string(gold) +
                      " has no option letter");
    }
    shots.push_back({r.text, options[static_cast<std::size_t>(gold)].letter});
  }
  return shots;
}

PromptEvalResult run_prompt_eval(LmBackend& lm, const PromptSpec& spec,
                                 const std::vector<corpus::SentenceRecord>& records,
                                 const std::string& split_name, RankBy rank,
                                 const std::string& fingerprint) {
  spec.validate();
  if (records.empty()) throw DataError("run_prompt_eval: no records");

  PromptEvalResult result;
  result.dump.split = split_name;
  result.dump.fingerprint = fingerprint;
  result.dump.tasks = {spec.task};
  for (const corpus::SentenceRecord& r : records) {
    std::vector<std::string> candidates = build_prompt(spec, r.text);
    std::vector<CandidateScore> scores =
        score_candidates(lm, spec.options, candidates);
    if (ranking_methods_disagree(scores)) {
      ++result.ranking_disagreements;
    }
    std::string letter = pick_answer(scores, rank);
    int pred = -1;
    for (std::size_t i = 0; i < spec.options.size(); ++i) {
      if (spec.options[i].letter == letter) pred = static_cast<int>(i);
    }
    eval::PredictionRow row;
    row.example_id = r.id;
    if (r.category != corpus::Category::none) {
      row.category = corpus::category_name(r.category);
    }
    row.gold[spec.task] = corpus::task_gold(r, spec.task);
    row.pred[spec.task] = pred;
    result.dump.rows.push_back(std::move(row));
  }
  result.dump.validate();
  return result;
}

SelectionOutcome select_prompt(LmBackend& lm,
                               const std::vector<PromptSpec>& specs,
                               const std::vector<corpus::SentenceRecord>& validation,
                               RankBy rank) {
  if (specs.empty()) throw ConfigError("select_prompt: no prompt specs");
  if (validation.empty()) {
    throw DataError("select_prompt: empty validation set");
  }
  SelectionOutcome outcome;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    PromptEvalResult r =
        run_prompt_eval(lm, specs[i], validation, "validation", rank);
    std::vector<int> golds, preds;
    for (const eval::PredictionRow& row : r.dump.rows) {
      golds.push_back(row.gold.at(specs[i].task));
      preds.push_back(row.pred.at(specs[i].task));
    }
    outcome.validation_f1.push_back(eval::macro_f1(
        golds, preds, static_cast<int>(specs[i].options.size())));
  }
  outcome.best_index = 0;
  for (std::size_t i = 1; i < specs.size(); ++i) {
    if (outcome.validation_f1[i] > outcome.validation_f1[outcome.best_index]) {
      outcome.best_index = i;
    }
  }
  return outcome;
}

}  // namespace biaslab::prompt
