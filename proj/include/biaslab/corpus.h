#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "biaslab/labelspace.h"

// Dataset assembly: source ingestion (CrowS-Pairs-style pairs, StereoSet-style
// CATs, plain (text, label) rows), annotation aggregation with Fleiss' kappa,
// stratified splitting, and distribution statistics.

namespace biaslab::corpus {

enum class Category {
  religion,
  gender,
  socio_economic,
  race,
  profession,
  other,
  none,
};

enum class Source {
  crows_pairs,
  stereoset_intra,
  stereoset_inter,
  toxicbias,
  babe,
  sst2,
  synthetic,
};

std::string category_name(Category c);
// Lowercases/snake_cases the raw name; unknown categories map to `other`
// (a warning is recorded via the optional out-parameter).
Category parse_category(const std::string& raw, bool* unknown = nullptr);
std::string source_name(Source s);
Source parse_source(const std::string& raw);

struct SentenceRecord {
  std::string id;
  std::string text;  // whitespace-normalized at construction
  std::optional<labels::Binary> bias;
  std::optional<labels::Binary> stereotype;
  Category category = Category::none;
  Source source = Source::synthetic;

  bool fully_labeled() const { return bias && stereotype; }
};

// Normalizes text and enforces the non-empty invariant.
SentenceRecord make_record(std::string id, std::string text, Source source,
                           Category category = Category::none);

struct AnnotationRecord {
  std::string sentence_id;
  std::string annotator_id;
  labels::Binary bias_vote = labels::Binary::negative;
  labels::Binary stereotype_vote = labels::Binary::negative;
};

struct DatasetSplit {
  std::vector<SentenceRecord> train;
  std::vector<SentenceRecord> validation;
  std::vector<SentenceRecord> test;
  std::array<double, 3> ratios{0.72, 0.08, 0.20};
  std::uint64_t seed = 0;
};

struct AgreementReport {
  double kappa_bias = 0.0;
  double kappa_stereotype = 0.0;
  std::size_t n_items = 0;
  std::size_t n_annotators = 0;
};

// --------------------------------------------------------------------------
// Assembly operations.

// Replaces the single blank marker with `fill`, then collapses whitespace.
// Throws DataError unless exactly one marker is present.
std::string assemble_intrasentence(const std::string& template_with_blank,
                                   const std::string& fill,
                                   const std::string& marker = "BLANK");

// Context + single space + completion. Both must be non-empty.
std::string assemble_intersentence(const std::string& context,
                                   const std::string& completion);

struct PairedRow {
  std::string sent_more;
  std::string sent_less;
  std::string bias_type;  // optional; empty = unknown
};

// Keeps the sent_more side; labels left unset for annotation.
std::vector<SentenceRecord> extract_crows_pairs(
    const std::vector<PairedRow>& rows);

// StereoSet-style Context Association Test item.
struct CatOption {
  std::string text;   // fill (intra) or completion (inter)
  std::string label;  // stereotype | anti_stereotype | neutral
};
struct CatItem {
  std::string id;
  bool intrasentence = true;
  std::string bias_type;
  std::string context;  // template with blank (intra) or context (inter)
  std::vector<CatOption> options;
};

// Assembles the stereotypical option of each CAT, plus the neutral option
// when `include_neutral` is set (neutral records carry category none).
std::vector<SentenceRecord> extract_stereoset(const std::vector<CatItem>& items,
                                              bool include_neutral = true,
                                              const std::string& marker =
                                                  "BLANK");

// --------------------------------------------------------------------------
// Annotation aggregation.

// Strict majority; throws TieError on an even split.
labels::Binary majority_vote(const std::vector<labels::Binary>& votes);

// Standard Fleiss' kappa over an items x categories count matrix. Every row
// must sum to the same rater count n >= 2. Perfect agreement returns exactly
// 1.0 (including the all-mass-in-one-category case, by documented convention).
double fleiss_kappa(const std::vector<std::vector<int>>& matrix);

struct AggregationResult {
  std::vector<SentenceRecord> labeled;  // records with majority labels
  AgreementReport agreement;
  std::vector<std::string> tie_ids;  // sentences needing senior review
};

// Applies majority voting per sentence and computes agreement over the vote
// matrices. Sentences with ties are reported, not guessed.
AggregationResult aggregate_annotations(
    const std::vector<SentenceRecord>& sentences,
    const std::vector<AnnotationRecord>& annotations);

// --------------------------------------------------------------------------
// Splitting.

// Global split sizes: floor(ratio*N) per split, leftovers assigned by
// largest fractional remainder (ties toward the earlier split).
std::array<std::size_t, 3> split_sizes(std::size_t n,
                                       const std::array<double, 3>& ratios);

// Stratified by the joint (bias, stereotype) label; deterministic per seed.
DatasetSplit split(const std::vector<SentenceRecord>& records,
                   const std::array<double, 3>& ratios, std::uint64_t seed);

// Gold class id of a record under a head task: "bias", "stereotype",
// "sentiment" (stored in the stereotype slot, which doubles as the
// auxiliary-task slot), or "joint". Throws DataError on a missing label.
int task_gold(const SentenceRecord& record, const std::string& task);

// --------------------------------------------------------------------------
// Statistics.

struct DatasetStats {
  std::size_t total = 0;
  std::map<std::string, std::size_t> bias_counts;
  std::map<std::string, std::size_t> stereotype_counts;
  std::array<std::size_t, 4> joint_counts{0, 0, 0, 0};
  std::map<std::string, std::size_t> category_counts;
};

// Requires labels on every record; throws DataError naming the offender.
DatasetStats dataset_stats(const std::vector<SentenceRecord>& records);
std::string stats_to_json(const DatasetStats& stats);

// --------------------------------------------------------------------------
// File I/O (canonical TSV schema: id, text, bias, stereotype, category,
// source; empty label fields mean unset).

std::vector<SentenceRecord> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path,
                   const std::vector<SentenceRecord>& records);

std::vector<PairedRow> read_paired_csv(const std::filesystem::path& path);
std::vector<CatItem> read_stereoset_json(const std::filesystem::path& path);
std::vector<AnnotationRecord> read_annotations(
    const std::filesystem::path& path);

// (text, binary label) rows; the label lands in the bias slot for
// toxicbias/babe and in the auxiliary slot for sst2-style sentiment rows.
std::vector<SentenceRecord> read_text_label_tsv(
    const std::filesystem::path& path, Source source);

}  // namespace biaslab::corpus
