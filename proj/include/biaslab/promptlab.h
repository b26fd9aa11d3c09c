#pragma once

// Zero-shot / few-shot label prediction by perplexity ranking over candidate
// completions, plus validation-driven prompt selection and shot sampling.

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "biaslab/corpus.h"
#include "biaslab/evaluation.h"

namespace biaslab::prompt {

struct OptionSpec {
  std::string letter;  // "A", "B", ...
  std::string text;    // "no bias", "bias", ...
};

struct Shot {
  std::string sentence;
  std::string answer_letter;
};

struct PromptSpec {
  std::string name;
  std::string instruction;
  std::vector<OptionSpec> options;  // order = class-id order
  std::vector<Shot> shots;          // empty = zero-shot
  std::string task = "bias";

  void validate() const;  // unique letters, shot answers among them
};

// The six published instruction texts for the bias task, in catalog order.
const std::vector<std::string>& instruction_catalog();

// A = the task's negative label text, B = positive.
std::vector<OptionSpec> default_options(const std::string& task);

// One complete sequence per option. Template (frozen; perplexity ranking is
// whitespace-sensitive): blocks joined by single newlines — the instruction
// (if any), each shot as "Sentence: <s>" / option lines "<L>. <text>" /
// "Answer: <letter>", then the query block ending in "Answer: <candidate>".
std::vector<std::string> build_prompt(const PromptSpec& spec,
                                      const std::string& sentence);

struct CandidateScore {
  std::string letter;
  double nll = 0.0;
  std::size_t token_count = 0;
  double perplexity = 0.0;  // exp(nll / token_count)
};

class LmBackend {
 public:
  virtual ~LmBackend() = default;
  virtual std::string id() const = 0;
  // Total negative log-likelihood and token count for a full sequence.
  virtual std::pair<double, std::size_t> sequence_nll(const std::string& text) = 0;
};

// "marker_lm" is the deterministic test backend: whitespace tokens, fixed
// per-token NLLs, and a marker lexicon that steers answer-letter likelihoods.
std::unique_ptr<LmBackend> make_lm_backend(const std::string& backend_id,
                                           std::uint64_t seed);

// Same backend with a custom word -> letter lexicon (fixture construction).
std::unique_ptr<LmBackend> make_marker_lm(
    std::uint64_t seed, const std::vector<std::pair<std::string, std::string>>& lexicon);

// candidates[i] corresponds to options[i].
std::vector<CandidateScore> score_candidates(
    LmBackend& lm, const std::vector<OptionSpec>& options,
    const std::vector<std::string>& candidates);

enum class RankBy { perplexity, raw_nll };

// Lowest perplexity wins (or lowest raw NLL under the ablation flag); exact
// ties go to the earlier option.
std::string pick_answer(const std::vector<CandidateScore>& scores,
                        RankBy rank = RankBy::perplexity);

// True when perplexity and raw-NLL ranking would pick different options
// (possible when token counts differ).
bool ranking_methods_disagree(const std::vector<CandidateScore>& scores);

// Uniform sample without replacement, deterministic per seed; the answer
// letter comes from the record's gold label through the option order.
std::vector<Shot> sample_shots(const std::vector<corpus::SentenceRecord>& pool,
                               std::size_t k, std::uint64_t seed,
                               const std::string& task,
                               const std::vector<OptionSpec>& options);

struct PromptEvalResult {
  eval::PredictionDump dump;
  std::size_t ranking_disagreements = 0;  // perplexity vs raw NLL
};

PromptEvalResult run_prompt_eval(LmBackend& lm, const PromptSpec& spec,
                                 const std::vector<corpus::SentenceRecord>& records,
                                 const std::string& split_name,
                                 RankBy rank = RankBy::perplexity,
                                 const std::string& fingerprint = "");

struct SelectionOutcome {
  std::size_t best_index = 0;
  std::vector<double> validation_f1;  // one score per spec
};

// Macro-F1 of each spec on the validation records; argmax wins, ties to the
// earlier spec. Test evaluation should then use only the winner.
SelectionOutcome select_prompt(LmBackend& lm,
                               const std::vector<PromptSpec>& specs,
                               const std::vector<corpus::SentenceRecord>& validation,
                               RankBy rank = RankBy::perplexity);

}  // namespace biaslab::prompt
