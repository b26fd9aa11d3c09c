#include "biaslab/corpus.h"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "biaslab/common.h"
#include "biaslab/io.h"

namespace biaslab::corpus {

namespace fs = std::filesystem;
using labels::Binary;
using nlohmann::json;

std::string category_name(Category c) {
  switch (c) {
    case Category::religion:
      return "religion";
    case Category::gender:
      return "gender";
    case Category::socio_economic:
      return "socio_economic";
    case Category::race:
      return "race";
    case Category::profession:
      return "profession";
    case Category::other:
      return "other";
    case Category::none:
      return "none";
  }
  throw DataError("unreachable category");
}

Category parse_category(const std::string& raw, bool* unknown) {
  if (unknown) *unknown = false;
  std::string v = to_lower(trim(raw));
  for (char& c : v) {
    if (c == ' ' || c == '-') c = '_';
  }
  if (v.empty() || v == "none") return Category::none;
  if (v == "religion") return Category::religion;
  if (v == "gender") return Category::gender;
  if (v == "socio_economic" || v == "socioeconomic" ||
      v == "socio_economical" || v == "socio_economic_status") {
    return Category::socio_economic;
  }
  if (v == "race" || v == "race_color") return Category::race;
  if (v == "profession" || v == "occupation") return Category::profession;
  if (v == "other" || v == "others") return Category::other;
  if (unknown) *unknown = true;
  return Category::other;
}

std::string source_name(Source s) {
  switch (s) {
    case Source::crows_pairs:
      return "crows_pairs";
    case Source::stereoset_intra:
      return "stereoset_intra";
    case Source::stereoset_inter:
      return "stereoset_inter";
    case Source::toxicbias:
      return "toxicbias";
    case Source::babe:
      return "babe";
    case Source::sst2:
      return "sst2";
    case Source::synthetic:
      return "synthetic";
  }
  throw DataError("unreachable source");
}

Source parse_source(const std::string& raw) {
  std::string v = to_lower(trim(raw));
  if (v == "crows_pairs") return Source::crows_pairs;
  if (v == "stereoset_intra") return Source::stereoset_intra;
  if (v == "stereoset_inter") return Source::stereoset_inter;
  if (v == "toxicbias") return Source::toxicbias;
  if (v == "babe") return Source::babe;
  if (v == "sst2") return Source::sst2;
  if (v == "synthetic") return Source::synthetic;
  throw DataError("unknown source: \"" + raw + "\"");
}

SentenceRecord make_record(std::string id, std::string text, Source source,
                           Category category) {
  SentenceRecord r;
  r.id = trim(id);
  r.text = collapse_whitespace(text);
  r.source = source;
  r.category = category;
  if (r.id.empty()) throw DataError("record with empty id");
  if (r.text.empty()) {
    throw DataError("record " + r.id + " has empty text after trimming");
  }
  return r;
}

// --------------------------------------------------------------------------

std::string assemble_intrasentence(const std::string& template_with_blank,
                                   const std::string& fill,
                                   const std::string& marker) {
  if (marker.empty()) throw ConfigError("blank marker must be non-empty");
  std::size_t first = template_with_blank.find(marker);
  if (first == std::string::npos) {
    throw DataError("template has no blank marker \"" + marker +
                    "\": " + template_with_blank);
  }
  if (template_with_blank.find(marker, first + marker.size()) !=
      std::string::npos) {
    throw DataError("template has multiple blank markers \"" + marker +
                    "\": " + template_with_blank);
  }
  std::string filled = template_with_blank;
  filled.replace(first, marker.size(), fill);
  return collapse_whitespace(filled);
}

std::string assemble_intersentence(const std::string& context,
                                   const std::string& completion) {
  std::string c = collapse_whitespace(context);
  std::string k = collapse_whitespace(completion);
  if (c.empty() || k.empty()) {
    throw DataError("intersentence parts must be non-empty");
  }
  return c + " " + k;
}

std::vector<SentenceRecord> extract_crows_pairs(
    const std::vector<PairedRow>& rows) {
  std::vector<SentenceRecord> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (trim(rows[i].sent_more).empty()) {
      throw ShapeError("crows_pairs row " + std::to_string(i + 1) +
                       ": missing sent_more");
    }
    if (trim(rows[i].sent_less).empty()) {
      throw ShapeError("crows_pairs row " + std::to_string(i + 1) +
                       ": missing sent_less");
    }
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "cp-%04zu", i + 1);
    out.push_back(make_record(idbuf, rows[i].sent_more, Source::crows_pairs,
                              parse_category(rows[i].bias_type)));
  }
  return out;
}

namespace {

std::string canon_option_label(const std::string& raw) {
  std::string v = to_lower(trim(raw));
  for (char& c : v) {
    if (c == ' ' || c == '-') c = '_';
  }
  if (v == "unrelated") v = "neutral";
  return v;
}

}  // namespace

std::vector<SentenceRecord> extract_stereoset(const std::vector<CatItem>& items,
                                              bool include_neutral,
                                              const std::string& marker) {
  std::vector<SentenceRecord> out;
  for (const CatItem& item : items) {
    const CatOption* stereo = nullptr;
    const CatOption* neutral = nullptr;
    for (const CatOption& opt : item.options) {
      std::string label = canon_option_label(opt.label);
      if (label == "stereotype" && !stereo) stereo = &opt;
      if (label == "neutral" && !neutral) neutral = &opt;
    }
    if (!stereo) {
      throw DataError("stereoset item " + item.id +
                      " has no stereotype option");
    }
    Source src =
        item.intrasentence ? Source::stereoset_intra : Source::stereoset_inter;
    auto assemble = [&](const std::string& text) {
      return item.intrasentence
                 ? assemble_intrasentence(item.context, text, marker)
                 : assemble_intersentence(item.context, text);
    };
    out.push_back(make_record(item.id + "-s", assemble(stereo->text), src,
                              parse_category(item.bias_type)));
    if (include_neutral && neutral) {
      out.push_back(make_record(item.id + "-n", assemble(neutral->text), src,
                                Category::none));
    }
  }
  return out;
}

// --------------------------------------------------------------------------

Binary majority_vote(const std::vector<Binary>& votes) {
  if (votes.empty()) throw DataError("majority_vote: no votes");
  std::size_t pos = 0;
  for (Binary v : votes) {
    if (v == Binary::positive) ++pos;
  }
  std::size_t neg = votes.size() - pos;
  if (pos == neg) {
    throw TieError("majority_vote: tie with " + std::to_string(votes.size()) +
                   " votes");
  }
  return pos > neg ? Binary::positive : Binary::negative;
}

double fleiss_kappa(const std::vector<std::vector<int>>& matrix) {
  if (matrix.empty()) throw ShapeError("fleiss_kappa: empty matrix");
  std::size_t n_categories = matrix.front().size();
  if (n_categories < 2) {
    throw ShapeError("fleiss_kappa: need at least 2 categories");
  }
  long long raters = 0;
  for (int c : matrix.front()) raters += c;
  if (raters < 2) throw ShapeError("fleiss_kappa: need at least 2 raters");

  const double n = static_cast<double>(raters);
  const double n_items = static_cast<double>(matrix.size());
  double p_bar = 0.0;
  std::vector<double> column_mass(n_categories, 0.0);
  for (const auto& row : matrix) {
    if (row.size() != n_categories) {
      throw ShapeError("fleiss_kappa: ragged row");
    }
    long long row_sum = 0;
    double agree = 0.0;
    for (std::size_t j = 0; j < n_categories; ++j) {
      if (row[j] < 0) throw ShapeError("fleiss_kappa: negative count");
      row_sum += row[j];
      agree += static_cast<double>(row[j]) * (row[j] - 1);
      column_mass[j] += row[j];
    }
    if (row_sum != raters) {
      throw ShapeError("fleiss_kappa: rows must all sum to the same count");
    }
    p_bar += agree / (n * (n - 1.0));
  }
  p_bar /= n_items;

  double p_e = 0.0;
  for (double mass : column_mass) {
    double p_j = mass / (n_items * n);
    p_e += p_j * p_j;
  }
  // All mass in one category implies perfect agreement; kappa defined as 1.
  if (1.0 - p_e == 0.0) return 1.0;
  return (p_bar - p_e) / (1.0 - p_e);
}

AggregationResult aggregate_annotations(
    const std::vector<SentenceRecord>& sentences,
    const std::vector<AnnotationRecord>& annotations) {
  std::map<std::string, std::vector<const AnnotationRecord*>> by_sentence;
  std::set<std::pair<std::string, std::string>> seen;
  for (const AnnotationRecord& a : annotations) {
    if (!seen.insert({a.sentence_id, a.annotator_id}).second) {
      throw DataError("duplicate annotation for sentence " + a.sentence_id +
                      " by annotator " + a.annotator_id);
    }
    by_sentence[a.sentence_id].push_back(&a);
  }

  AggregationResult result;
  std::vector<std::vector<int>> bias_matrix;
  std::vector<std::vector<int>> stereo_matrix;
  std::size_t raters = 0;
  for (const SentenceRecord& s : sentences) {
    auto it = by_sentence.find(s.id);
    if (it == by_sentence.end()) {
      throw DataError("no annotations for sentence " + s.id);
    }
    const auto& votes = it->second;
    if (votes.size() < 3) {
      throw DataError("sentence " + s.id + " has only " +
                      std::to_string(votes.size()) +
                      " annotators; at least 3 required");
    }
    if (raters == 0) raters = votes.size();

    std::vector<Binary> bias_votes, stereo_votes;
    std::vector<int> bias_row(2, 0), stereo_row(2, 0);
    for (const AnnotationRecord* a : votes) {
      bias_votes.push_back(a->bias_vote);
      stereo_votes.push_back(a->stereotype_vote);
      ++bias_row[static_cast<int>(a->bias_vote)];
      ++stereo_row[static_cast<int>(a->stereotype_vote)];
    }
    bias_matrix.push_back(bias_row);
    stereo_matrix.push_back(stereo_row);

    SentenceRecord labeled = s;
    bool tied = false;
    try {
      labeled.bias = majority_vote(bias_votes);
    } catch (const TieError&) {
      tied = true;
    }
    try {
      labeled.stereotype = majority_vote(stereo_votes);
    } catch (const TieError&) {
      tied = true;
    }
    if (tied) {
      result.tie_ids.push_back(s.id);
    } else {
      result.labeled.push_back(std::move(labeled));
    }
  }

  result.agreement.kappa_bias = fleiss_kappa(bias_matrix);
  result.agreement.kappa_stereotype = fleiss_kappa(stereo_matrix);
  result.agreement.n_items = sentences.size();
  result.agreement.n_annotators = raters;
  return result;
}

// --------------------------------------------------------------------------

std::array<std::size_t, 3> split_sizes(std::size_t n,
                                       const std::array<double, 3>& ratios) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  for (double r : ratios) {
    if (r <= 0.0) throw ConfigError("split ratios must be positive");
  }
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double ideal = ratios[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(ideal));
    remainder[i] = ideal - std::floor(ideal);
    assigned += sizes[i];
  }
  // Largest fractional remainder first; earlier split wins ties.
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k) {
    ++sizes[order[k % 3]];
    ++assigned;
  }
  return sizes;
}

DatasetSplit split(const std::vector<SentenceRecord>& records,
                   const std::array<double, 3>& ratios, std::uint64_t seed) {
  const std::size_t n = records.size();
  if (n < 3) {
    throw DataError("cannot split " + std::to_string(n) +
                    " records into 3 splits");
  }
  auto targets = split_sizes(n, ratios);

  // Strata keyed by joint label.
  std::array<std::vector<std::size_t>, 4> strata;
  for (std::size_t i = 0; i < n; ++i) {
    const SentenceRecord& r = records[i];
    if (!r.fully_labeled()) {
      throw DataError("record " + r.id + " is missing labels; cannot stratify");
    }
    strata[labels::to_joint(*r.bias, *r.stereotype).index].push_back(i);
  }

  // Per-stratum largest-remainder allocation.
  double alloc_ideal[4][3];
  std::size_t alloc[4][3] = {};
  for (int g = 0; g < 4; ++g) {
    std::size_t m = strata[g].size();
    std::size_t assigned = 0;
    std::array<double, 3> rem{};
    for (int s = 0; s < 3; ++s) {
      alloc_ideal[g][s] = ratios[s] * static_cast<double>(m);
      alloc[g][s] = static_cast<std::size_t>(std::floor(alloc_ideal[g][s]));
      rem[s] = alloc_ideal[g][s] - std::floor(alloc_ideal[g][s]);
      assigned += alloc[g][s];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; assigned < m; ++k) {
      ++alloc[g][order[k % 3]];
      ++assigned;
    }
  }

  // Reconcile stratum allocations with the global targets by moving single
  // items between splits, always choosing the move that best restores the
  // per-stratum ideals.
  for (;;) {
    long long dev[3];
    for (int s = 0; s < 3; ++s) {
      long long total = 0;
      for (int g = 0; g < 4; ++g) total += static_cast<long long>(alloc[g][s]);
      dev[s] = total - static_cast<long long>(targets[s]);
    }
    int over = -1, under = -1;
    for (int s = 0; s < 3; ++s) {
      if (dev[s] > 0 && (over < 0 || dev[s] > dev[over])) over = s;
      if (dev[s] < 0 && (under < 0 || dev[s] < dev[under])) under = s;
    }
    if (over < 0 && under < 0) break;
    int best_g = -1;
    double best_score = -1e300;
    for (int g = 0; g < 4; ++g) {
      if (alloc[g][over] == 0) continue;
      double score =
          (static_cast<double>(alloc[g][over]) - alloc_ideal[g][over]) -
          (static_cast<double>(alloc[g][under]) - alloc_ideal[g][under]);
      if (score > best_score) {
        best_score = score;
        best_g = g;
      }
    }
    if (best_g < 0) throw DataError("split reconciliation failed");
    --alloc[best_g][over];
    ++alloc[best_g][under];
  }

  // Assign members: shuffle each stratum, then slice.
  DatasetSplit out;
  out.ratios = ratios;
  out.seed = seed;
  for (int g = 0; g < 4; ++g) {
    DetRng rng(mix64(seed, 0x5eed5eedull + static_cast<std::uint64_t>(g)));
    std::vector<std::size_t> members = strata[g];
    rng.shuffle(members);
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
      auto* dest = s == 0 ? &out.train : (s == 1 ? &out.validation : &out.test);
      for (std::size_t k = 0; k < alloc[g][s]; ++k) {
        dest->push_back(records[members[pos++]]);
      }
    }
  }
  return out;
}

// --------------------------------------------------------------------------

int task_gold(const SentenceRecord& record, const std::string& task) {
  if (task == "bias") {
    if (!record.bias) {
      throw DataError("record " + record.id + " lacks a bias label");
    }
    return static_cast<int>(*record.bias);
  }
  if (task == "stereotype" || task == "sentiment") {
    if (!record.stereotype) {
      throw DataError("record " + record.id + " lacks a " + task + " label");
    }
    return static_cast<int>(*record.stereotype);
  }
  if (task == "joint") {
    if (!record.fully_labeled()) {
      throw DataError("record " + record.id +
                      " lacks labels for the joint task");
    }
    return labels::to_joint(*record.bias, *record.stereotype).index;
  }
  throw DataError("unknown head task \"" + task + "\"");
}

DatasetStats dataset_stats(const std::vector<SentenceRecord>& records) {
  DatasetStats stats;
  stats.bias_counts = {{"bias", 0}, {"no_bias", 0}};
  stats.stereotype_counts = {{"stereotype", 0}, {"no_stereotype", 0}};
  for (Category c :
       {Category::religion, Category::gender, Category::socio_economic,
        Category::race, Category::profession, Category::other,
        Category::none}) {
    stats.category_counts[category_name(c)] = 0;
  }
  for (const SentenceRecord& r : records) {
    if (!r.fully_labeled()) {
      throw DataError("record " + r.id + " is missing a label");
    }
    ++stats.total;
    ++stats.bias_counts[labels::label_name(*r.bias, "bias")];
    ++stats.stereotype_counts[labels::label_name(*r.stereotype, "stereotype")];
    ++stats.joint_counts[static_cast<std::size_t>(
        labels::to_joint(*r.bias, *r.stereotype).index)];
    ++stats.category_counts[category_name(r.category)];
  }
  return stats;
}

std::string stats_to_json(const DatasetStats& stats) {
  json j;
  j["total"] = stats.total;
  j["bias"] = stats.bias_counts;
  j["stereotype"] = stats.stereotype_counts;
  json joint;
  for (int k = 0; k < 4; ++k) {
    auto [b, s] = labels::from_joint(labels::JointLabel{k});
    std::string key = labels::label_name(b, "bias") + "+" +
                      labels::label_name(s, "stereotype");
    joint[key] = stats.joint_counts[static_cast<std::size_t>(k)];
  }
  j["joint"] = joint;
  j["categories"] = stats.category_counts;
  return j.dump(2) + "\n";
}

// --------------------------------------------------------------------------

namespace {

std::string label_field(const std::optional<Binary>& v,
                        const std::string& task) {
  return v ? labels::label_name(*v, task) : std::string();
}

}  // namespace

std::vector<SentenceRecord> read_dataset(const fs::path& path) {
  io::Table t = io::read_tsv(path);
  for (const char* col : {"id", "text", "bias", "stereotype", "category",
                          "source"}) {
    if (t.column_index(col) < 0) {
      throw ShapeError(path.string() + ": missing column " + std::string(col));
    }
  }
  int ci = t.column_index("id"), ct = t.column_index("text"),
      cb = t.column_index("bias"), cs = t.column_index("stereotype"),
      cc = t.column_index("category"), co = t.column_index("source");
  std::vector<SentenceRecord> out;
  std::set<std::string> ids;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    SentenceRecord rec = make_record(t.cell(r, ci), t.cell(r, ct),
                                     parse_source(t.cell(r, co)),
                                     parse_category(t.cell(r, cc)));
    if (!ids.insert(rec.id).second) {
      throw DataError(path.string() + ": duplicate id " + rec.id);
    }
    if (!trim(t.cell(r, cb)).empty()) {
      rec.bias = labels::parse_label(t.cell(r, cb), "bias");
    }
    if (!trim(t.cell(r, cs)).empty()) {
      rec.stereotype = labels::parse_label(t.cell(r, cs), "stereotype");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_dataset(const fs::path& path,
                   const std::vector<SentenceRecord>& records) {
  io::Table t;
  t.columns = {"id", "text", "bias", "stereotype", "category", "source"};
  for (const SentenceRecord& r : records) {
    t.rows.push_back({r.id, r.text, label_field(r.bias, "bias"),
                      label_field(r.stereotype, "stereotype"),
                      category_name(r.category), source_name(r.source)});
  }
  io::write_tsv(path, t);
}

std::vector<PairedRow> read_paired_csv(const fs::path& path) {
  io::Table t = io::read_csv(path);
  int cm = t.column_index("sent_more");
  int cl = t.column_index("sent_less");
  if (cm < 0 || cl < 0) {
    throw ShapeError(path.string() +
                     ": paired file needs sent_more and sent_less columns");
  }
  int cb = t.column_index("bias_type");
  std::vector<PairedRow> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out.push_back({t.cell(r, cm), t.cell(r, cl), t.cell(r, cb)});
  }
  return out;
}

std::vector<CatItem> read_stereoset_json(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  std::vector<CatItem> out;
  auto load_kind = [&](const char* key, bool intra) {
    if (!j.contains(key)) return;
    for (const json& item : j.at(key)) {
      CatItem cat;
      cat.intrasentence = intra;
      cat.id = item.at("id").get<std::string>();
      cat.bias_type = item.value("bias_type", std::string());
      cat.context = item.at("context").get<std::string>();
      for (const json& opt : item.at("options")) {
        cat.options.push_back({opt.at("text").get<std::string>(),
                               opt.at("label").get<std::string>()});
      }
      out.push_back(std::move(cat));
    }
  };
  load_kind("intrasentence", true);
  load_kind("intersentence", false);
  if (out.empty()) {
    throw DataError(path.string() +
                    ": no intrasentence/intersentence items found");
  }
  return out;
}

std::vector<AnnotationRecord> read_annotations(const fs::path& path) {
  io::Table t = io::read_tsv(path);
  for (const char* col :
       {"sentence_id", "annotator_id", "bias_vote", "stereotype_vote"}) {
    if (t.column_index(col) < 0) {
      throw ShapeError(path.string() + ": missing column " + std::string(col));
    }
  }
  int cs = t.column_index("sentence_id"), ca = t.column_index("annotator_id"),
      cb = t.column_index("bias_vote"), cv = t.column_index("stereotype_vote");
  std::vector<AnnotationRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    AnnotationRecord a;
    a.sentence_id = trim(t.cell(r, cs));
    a.annotator_id = trim(t.cell(r, ca));
    a.bias_vote = labels::parse_label(t.cell(r, cb), "bias");
    a.stereotype_vote = labels::parse_label(t.cell(r, cv), "stereotype");
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<SentenceRecord> read_text_label_tsv(const fs::path& path,
                                                Source source) {
  io::Table t = io::read_tsv(path);
  int ct = t.column_index("text");
  int cl = t.column_index("label");
  if (ct < 0 || cl < 0) {
    throw ShapeError(path.string() + ": needs text and label columns");
  }
  std::string prefix = source_name(source);
  std::vector<SentenceRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "%s-%04zu", prefix.c_str(), r + 1);
    SentenceRecord rec = make_record(idbuf, t.cell(r, ct), source);
    if (source == Source::sst2) {
      // Sentiment rows fill the auxiliary slot.
      rec.stereotype = labels::parse_label(t.cell(r, cl), "sentiment");
    } else {
      rec.bias = labels::parse_label(t.cell(r, cl), "bias");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace biaslab::corpus
