#pragma once

// Backend abstraction (encode -> hidden states), pooling, classification
// heads for every task mode, cross-entropy losses, and checkpoint files.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "biaslab/labelspace.h"

namespace biaslab::modeling {

enum class Family { encoder_only, decoder_only, stub };

Family parse_family(const std::string& s);
std::string family_name(Family f);

enum class Pooling { cls, mean, max, last_token };

Pooling parse_pooling(const std::string& s);
std::string pooling_name(Pooling p);

// cls needs a classification-token position, which only encoder-style
// backends provide; everything else works everywhere.
Pooling default_pooling(Family f);
void validate_pooling(Family f, Pooling p);  // throws ConfigError

// Last-layer states for a batch: one (sequence x hidden) matrix per example
// plus a 0/1 attention mask of the same row count.
struct HiddenBatch {
  std::vector<Eigen::MatrixXd> states;
  std::vector<std::vector<int>> mask;
  int hidden = 0;

  std::size_t batch() const { return states.size(); }
};

struct AdaptationConfig {
  enum class Method { full, low_rank_quantized };
  Method method = Method::full;
  int quant_bits = 4;
  int rank = 16;
  double alpha = 8.0;
  double dropout = 0.01;

  void validate() const;  // throws ConfigError
};

AdaptationConfig::Method parse_adaptation_method(const std::string& s);
std::string adaptation_method_name(AdaptationConfig::Method m);

struct BackendInfo {
  std::string backend_id;
  Family family = Family::stub;
  int hidden_size = 0;
  int max_length = 0;
};

// A backend owns tokenization and encoding. Implementations must be
// deterministic in evaluation mode for a fixed seed. Over-length inputs are
// truncated at max_length and counted.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual const BackendInfo& info() const = 0;
  virtual HiddenBatch encode(const std::vector<std::string>& texts) = 0;
  virtual std::size_t truncation_count() const = 0;
  virtual void reset_truncation_count() = 0;
};

// backend_id "stub" is always available: a deterministic 2-layer,
// hidden-32 transformer with seed-fixed weights and whitespace+hash
// tokenization. Real pretrained backends register through the same factory.
std::unique_ptr<Backend> make_backend(const std::string& backend_id,
                                      std::uint64_t seed,
                                      const AdaptationConfig& adaptation = {});

// Masked pooling over one HiddenBatch; returns (batch x hidden).
Eigen::MatrixXd pool(const HiddenBatch& h, Pooling strategy);

// ---------------------------------------------------------------------------

struct Head {
  std::string task;
  Eigen::MatrixXd weight;  // (classes x hidden)
  Eigen::VectorXd bias;    // (classes)

  int classes() const { return static_cast<int>(weight.rows()); }
  int hidden() const { return static_cast<int>(weight.cols()); }
};

struct HeadSet {
  labels::TaskModeSpec mode;
  std::vector<Head> heads;

  const Head& head(const std::string& task) const;
  Head& head(const std::string& task);
};

// Seed-fixed small random weights, zero bias. The per-head stream is keyed
// by (seed, task name) only, so e.g. an stl_bias head and a shared_mtl bias
// head built from the same seed start identical.
HeadSet make_heads(const labels::TaskModeSpec& mode, int hidden_size,
                   std::uint64_t seed);

// Logits per head; pooled is (batch x hidden).
std::map<std::string, Eigen::MatrixXd> forward(const HeadSet& heads,
                                               const Eigen::MatrixXd& pooled);

struct LossBreakdown {
  double total = 0.0;
  std::map<std::string, double> per_task;  // unweighted mean cross-entropies
};

// Mean cross-entropy per head; total = sum of weighted per-task terms.
// Weights default to 1; a task weighted 0 is skipped entirely, so its gold
// may be withheld. Missing gold for an active head is an error.
LossBreakdown compute_loss(const labels::TaskModeSpec& mode,
                           const std::map<std::string, Eigen::MatrixXd>& logits,
                           const std::map<std::string, std::vector<int>>& gold,
                           const std::map<std::string, double>& task_weights = {});

struct HeadGrad {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

// Analytic gradients of compute_loss's total w.r.t. each head's parameters.
std::map<std::string, HeadGrad> head_gradients(
    const HeadSet& heads, const Eigen::MatrixXd& pooled,
    const std::map<std::string, std::vector<int>>& gold,
    const std::map<std::string, double>& task_weights = {});

// Argmax per head, ties broken toward the lower class index.
std::map<std::string, std::vector<int>> predict(
    const labels::TaskModeSpec& mode,
    const std::map<std::string, Eigen::MatrixXd>& logits);

// ---------------------------------------------------------------------------

struct Checkpoint {
  std::string backend_id;
  Pooling pooling = Pooling::mean;
  AdaptationConfig adaptation;
  std::uint64_t seed = 0;
  int label_enumeration_version = labels::kLabelEnumerationVersion;
  HeadSet heads;
  std::map<std::string, double> metrics;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);

// Throws AlignmentError if the stored enumeration version differs from the
// compiled-in one (class indices would silently mean different labels).
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace biaslab::modeling
