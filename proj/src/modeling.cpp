#include "biaslab/modeling.h"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "biaslab/common.h"
#include "biaslab/io.h"

namespace biaslab::modeling {

using nlohmann::json;

Family parse_family(const std::string& s) {
  std::string v = to_lower(trim(s));
  if (v == "encoder_only") return Family::encoder_only;
  if (v == "decoder_only") return Family::decoder_only;
  if (v == "stub") return Family::stub;
  throw ConfigError("unknown model family: \"" + s + "\"");
}

std::string family_name(Family f) {
  switch (f) {
    case Family::encoder_only:
      return "encoder_only";
    case Family::decoder_only:
      return "decoder_only";
    case Family::stub:
      return "stub";
  }
  throw ConfigError("unreachable family");
}

Pooling parse_pooling(const std::string& s) {
  std::string v = to_lower(trim(s));
  if (v == "cls") return Pooling::cls;
  if (v == "mean") return Pooling::mean;
  if (v == "max") return Pooling::max;
  if (v == "last_token") return Pooling::last_token;
  throw ConfigError("unknown pooling strategy: \"" + s + "\"");
}

std::string pooling_name(Pooling p) {
  switch (p) {
    case Pooling::cls:
      return "cls";
    case Pooling::mean:
      return "mean";
    case Pooling::max:
      return "max";
    case Pooling::last_token:
      return "last_token";
  }
  throw ConfigError("unreachable pooling");
}

Pooling default_pooling(Family f) {
  return f == Family::encoder_only ? Pooling::cls : Pooling::mean;
}

void validate_pooling(Family f, Pooling p) {
  if (p == Pooling::cls && f != Family::encoder_only) {
    throw ConfigError("cls pooling requires an encoder_only backend; " +
                      family_name(f) + " has no classification token");
  }
}

void AdaptationConfig::validate() const {
  if (rank <= 0) throw ConfigError("adaptation rank must be positive");
  if (alpha <= 0.0) throw ConfigError("adaptation alpha must be positive");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("adaptation dropout must be in [0, 1)");
  }
  if (quant_bits != 4 && quant_bits != 8) {
    throw ConfigError("adaptation quant_bits must be 4 or 8");
  }
}

AdaptationConfig::Method parse_adaptation_method(const std::string& s) {
  std::string v = to_lower(trim(s));
  if (v == "full") return AdaptationConfig::Method::full;
  if (v == "low_rank_quantized") return AdaptationConfig::Method::low_rank_quantized;
  throw ConfigError("unknown adaptation method: \"" + s + "\"");
}

std::string adaptation_method_name(AdaptationConfig::Method m) {
  return m == AdaptationConfig::Method::full ? "full" : "low_rank_quantized";
}

// ---------------------------------------------------------------------------
// Stub backend: 2 pre-LN transformer layers, hidden 32, 4 attention heads,
// weights drawn once from the seed and never updated.

namespace {

constexpr int kStubHidden = 32;
constexpr int kStubLayers = 2;
constexpr int kStubHeads = 4;
constexpr int kStubFfn = 64;
constexpr int kStubMaxLen = 64;

Eigen::MatrixXd random_matrix(DetRng& rng, int rows, int cols, double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.next_normal();
  }
  return m;
}

Eigen::RowVectorXd layer_norm(const Eigen::RowVectorXd& x) {
  double mean = x.mean();
  double var = (x.array() - mean).square().mean();
  return (x.array() - mean) / std::sqrt(var + 1e-5);
}

struct StubLayer {
  Eigen::MatrixXd wq, wk, wv, wo;  // (hidden x hidden)
  Eigen::MatrixXd w1;              // (hidden x ffn)
  Eigen::MatrixXd w2;              // (ffn x hidden)
};

class StubBackend final : public Backend {
 public:
  StubBackend(std::string backend_id, std::uint64_t seed)
      : seed_(seed) {
    info_.backend_id = std::move(backend_id);
    info_.family = Family::stub;
    info_.hidden_size = kStubHidden;
    info_.max_length = kStubMaxLen;
    double scale = 0.15;
    for (int l = 0; l < kStubLayers; ++l) {
      std::string p = "layer" + std::to_string(l) + ".";
      StubLayer layer;
      layer.wq = seeded(p + "wq", kStubHidden, kStubHidden, scale);
      layer.wk = seeded(p + "wk", kStubHidden, kStubHidden, scale);
      layer.wv = seeded(p + "wv", kStubHidden, kStubHidden, scale);
      layer.wo = seeded(p + "wo", kStubHidden, kStubHidden, scale);
      layer.w1 = seeded(p + "w1", kStubHidden, kStubFfn, scale);
      layer.w2 = seeded(p + "w2", kStubFfn, kStubHidden, scale);
      layers_.push_back(std::move(layer));
    }
  }

  const BackendInfo& info() const override { return info_; }

  HiddenBatch encode(const std::vector<std::string>& texts) override {
    HiddenBatch out;
    out.hidden = kStubHidden;
    if (texts.empty()) return out;

    std::vector<Eigen::MatrixXd> encoded;
    std::size_t max_rows = 0;
    for (const std::string& text : texts) {
      encoded.push_back(encode_one(text));
      max_rows = std::max(max_rows, static_cast<std::size_t>(encoded.back().rows()));
    }
    // Pad to a common sequence length; padded rows are zero and masked out.
    for (const Eigen::MatrixXd& e : encoded) {
      Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(
          static_cast<Eigen::Index>(max_rows), kStubHidden);
      padded.topRows(e.rows()) = e;
      std::vector<int> mask(max_rows, 0);
      std::fill(mask.begin(), mask.begin() + e.rows(), 1);
      out.states.push_back(std::move(padded));
      out.mask.push_back(std::move(mask));
    }
    return out;
  }

  std::size_t truncation_count() const override { return truncations_; }
  void reset_truncation_count() override { truncations_ = 0; }

 private:
  Eigen::MatrixXd seeded(const std::string& name, int rows, int cols,
                         double scale) {
    DetRng rng(mix64(seed_, fnv1a64(name)));
    return random_matrix(rng, rows, cols, scale);
  }

  Eigen::RowVectorXd token_embedding(const std::string& token) const {
    DetRng rng(mix64(seed_, mix64(fnv1a64("embedding"), fnv1a64(token))));
    Eigen::RowVectorXd e(kStubHidden);
    for (int i = 0; i < kStubHidden; ++i) e(i) = 0.1 * rng.next_normal();
    return e;
  }

  Eigen::MatrixXd encode_one(const std::string& text) {
    std::vector<std::string> tokens = split_whitespace(text);
    if (tokens.empty()) {
      throw DataError("cannot encode empty text");
    }
    if (tokens.size() > static_cast<std::size_t>(kStubMaxLen)) {
      tokens.resize(kStubMaxLen);
      ++truncations_;
    }
    const int n = static_cast<int>(tokens.size());
    Eigen::MatrixXd x(n, kStubHidden);
    for (int p = 0; p < n; ++p) {
      Eigen::RowVectorXd e = token_embedding(tokens[p]);
      for (int i = 0; i < kStubHidden; i += 2) {
        double angle = p / std::pow(10000.0, static_cast<double>(i) / kStubHidden);
        e(i) += 0.1 * std::sin(angle);
        e(i + 1) += 0.1 * std::cos(angle);
      }
      x.row(p) = e;
    }
    for (const StubLayer& layer : layers_) {
      x = x + attention(normalized(x), layer);
      Eigen::MatrixXd h = normalized(x) * layer.w1;
      x = x + (h.array().tanh().matrix() * layer.w2);
    }
    return normalized(x);
  }

  static Eigen::MatrixXd normalized(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      out.row(r) = layer_norm(x.row(r));
    }
    return out;
  }

  static Eigen::MatrixXd attention(const Eigen::MatrixXd& x,
                                   const StubLayer& layer) {
    const int dh = kStubHidden / kStubHeads;
    Eigen::MatrixXd q = x * layer.wq;
    Eigen::MatrixXd k = x * layer.wk;
    Eigen::MatrixXd v = x * layer.wv;
    Eigen::MatrixXd concat(x.rows(), kStubHidden);
    for (int h = 0; h < kStubHeads; ++h) {
      auto qh = q.middleCols(h * dh, dh);
      auto kh = k.middleCols(h * dh, dh);
      auto vh = v.middleCols(h * dh, dh);
      Eigen::MatrixXd scores = qh * kh.transpose() / std::sqrt(double(dh));
      for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        Eigen::RowVectorXd row = scores.row(r);
        double m = row.maxCoeff();
        Eigen::RowVectorXd ex = (row.array() - m).exp();
        concat.block(r, h * dh, 1, dh) = (ex / ex.sum()) * vh;
      }
    }
    return concat * layer.wo;
  }

  std::uint64_t seed_;
  BackendInfo info_;
  std::vector<StubLayer> layers_;
  std::size_t truncations_ = 0;
};

}  // namespace

std::unique_ptr<Backend> make_backend(const std::string& backend_id,
                                      std::uint64_t seed,
                                      const AdaptationConfig& adaptation) {
  adaptation.validate();
  if (backend_id == "stub") {
    return std::make_unique<StubBackend>(backend_id, seed);
  }
  throw ConfigError("unknown backend \"" + backend_id +
                    "\" (available: stub); bind real backends through the "
                    "Backend interface");
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd pool(const HiddenBatch& h, Pooling strategy) {
  if (h.states.size() != h.mask.size()) {
    throw ShapeError("pool: states/mask batch size mismatch");
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(h.batch()), h.hidden);
  for (std::size_t i = 0; i < h.batch(); ++i) {
    const Eigen::MatrixXd& s = h.states[i];
    const std::vector<int>& m = h.mask[i];
    if (static_cast<std::size_t>(s.rows()) != m.size() ||
        s.cols() != h.hidden) {
      throw ShapeError("pool: example " + std::to_string(i) +
                       " has inconsistent shape");
    }
    int count = 0;
    for (int bit : m) count += bit != 0;
    if (count == 0) {
      throw DataError("pool: degenerate all-masked row at example " +
                      std::to_string(i));
    }
    switch (strategy) {
      case Pooling::cls: {
        if (m[0] == 0) {
          throw DataError("pool: cls position masked at example " +
                          std::to_string(i));
        }
        out.row(i) = s.row(0);
        break;
      }
      case Pooling::mean: {
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(h.hidden);
        for (std::size_t p = 0; p < m.size(); ++p) {
          if (m[p]) acc += s.row(static_cast<Eigen::Index>(p));
        }
        out.row(i) = acc / count;
        break;
      }
      case Pooling::max: {
        bool first = true;
        Eigen::RowVectorXd acc(h.hidden);
        for (std::size_t p = 0; p < m.size(); ++p) {
          if (!m[p]) continue;
          if (first) {
            acc = s.row(static_cast<Eigen::Index>(p));
            first = false;
          } else {
            acc = acc.cwiseMax(s.row(static_cast<Eigen::Index>(p)));
          }
        }
        out.row(i) = acc;
        break;
      }
      case Pooling::last_token: {
        std::size_t last = 0;
        for (std::size_t p = 0; p < m.size(); ++p) {
          if (m[p]) last = p;
        }
        out.row(i) = s.row(static_cast<Eigen::Index>(last));
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

const Head& HeadSet::head(const std::string& task) const {
  for (const Head& h : heads) {
    if (h.task == task) return h;
  }
  throw DataError("no head for task \"" + task + "\"");
}

Head& HeadSet::head(const std::string& task) {
  for (Head& h : heads) {
    if (h.task == task) return h;
  }
  throw DataError("no head for task \"" + task + "\"");
}

HeadSet make_heads(const labels::TaskModeSpec& mode, int hidden_size,
                   std::uint64_t seed) {
  mode.validate();
  if (hidden_size <= 0) throw ConfigError("hidden_size must be positive");
  HeadSet set;
  set.mode = mode;
  for (const std::string& task : mode.head_tasks()) {
    DetRng rng(mix64(seed, fnv1a64(task)));
    Head h;
    h.task = task;
    h.weight = random_matrix(rng, mode.classes_for(task), hidden_size, 0.02);
    h.bias = Eigen::VectorXd::Zero(mode.classes_for(task));
    set.heads.push_back(std::move(h));
  }
  return set;
}

std::map<std::string, Eigen::MatrixXd> forward(const HeadSet& heads,
                                               const Eigen::MatrixXd& pooled) {
  std::map<std::string, Eigen::MatrixXd> out;
  for (const Head& h : heads.heads) {
    if (pooled.cols() != h.hidden()) {
      throw ShapeError("forward: pooled width " + std::to_string(pooled.cols()) +
                       " != head hidden " + std::to_string(h.hidden()));
    }
    Eigen::MatrixXd logits = pooled * h.weight.transpose();
    logits.rowwise() += h.bias.transpose();
    out[h.task] = std::move(logits);
  }
  return out;
}

namespace {

double task_weight(const std::map<std::string, double>& weights,
                   const std::string& task) {
  auto it = weights.find(task);
  return it == weights.end() ? 1.0 : it->second;
}

// Per-row (log-softmax denominator, i.e. logsumexp) with max-shift stability.
double row_logsumexp(const Eigen::RowVectorXd& row) {
  double m = row.maxCoeff();
  return m + std::log((row.array() - m).exp().sum());
}

double mean_cross_entropy(const Eigen::MatrixXd& logits,
                          const std::vector<int>& gold,
                          const std::string& task) {
  if (static_cast<std::size_t>(logits.rows()) != gold.size()) {
    throw ShapeError("loss: " + task + " has " + std::to_string(logits.rows()) +
                     " logit rows but " + std::to_string(gold.size()) +
                     " gold labels");
  }
  if (gold.empty()) throw DataError("loss: empty batch for task " + task);
  double sum = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    int y = gold[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols()) {
      throw DataError("loss: gold label " + std::to_string(y) +
                      " out of range for task " + task);
    }
    sum += row_logsumexp(logits.row(r)) - logits(r, y);
  }
  return sum / static_cast<double>(logits.rows());
}

}  // namespace

LossBreakdown compute_loss(const labels::TaskModeSpec& mode,
                           const std::map<std::string, Eigen::MatrixXd>& logits,
                           const std::map<std::string, std::vector<int>>& gold,
                           const std::map<std::string, double>& task_weights) {
  mode.validate();
  LossBreakdown out;
  for (const std::string& task : mode.head_tasks()) {
    double w = task_weight(task_weights, task);
    if (w == 0.0) continue;
    auto lit = logits.find(task);
    if (lit == logits.end()) {
      throw DataError("loss: missing logits for head " + task);
    }
    auto git = gold.find(task);
    if (git == gold.end()) {
      throw DataError("loss: missing gold labels for head " + task);
    }
    double ce = mean_cross_entropy(lit->second, git->second, task);
    out.per_task[task] = ce;
    out.total += w * ce;
  }
  return out;
}

std::map<std::string, HeadGrad> head_gradients(
    const HeadSet& heads, const Eigen::MatrixXd& pooled,
    const std::map<std::string, std::vector<int>>& gold,
    const std::map<std::string, double>& task_weights) {
  std::map<std::string, HeadGrad> out;
  for (const Head& h : heads.heads) {
    double w = task_weight(task_weights, h.task);
    if (w == 0.0) continue;
    auto git = gold.find(h.task);
    if (git == gold.end()) {
      throw DataError("gradients: missing gold labels for head " + h.task);
    }
    const std::vector<int>& y = git->second;
    if (static_cast<std::size_t>(pooled.rows()) != y.size()) {
      throw ShapeError("gradients: batch size mismatch for head " + h.task);
    }
    if (y.empty()) throw DataError("gradients: empty batch");

    Eigen::MatrixXd logits = pooled * h.weight.transpose();
    logits.rowwise() += h.bias.transpose();
    // dL/dlogits = weight * (softmax - onehot) / batch
    Eigen::MatrixXd g(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      Eigen::RowVectorXd row = logits.row(r);
      double m = row.maxCoeff();
      Eigen::RowVectorXd ex = (row.array() - m).exp();
      g.row(r) = ex / ex.sum();
      int yi = y[static_cast<std::size_t>(r)];
      if (yi < 0 || yi >= logits.cols()) {
        throw DataError("gradients: gold label out of range for head " + h.task);
      }
      g(r, yi) -= 1.0;
    }
    g *= w / static_cast<double>(logits.rows());
    HeadGrad grad;
    grad.weight = g.transpose() * pooled;
    grad.bias = g.colwise().sum().transpose();
    out[h.task] = std::move(grad);
  }
  return out;
}

std::map<std::string, std::vector<int>> predict(
    const labels::TaskModeSpec& mode,
    const std::map<std::string, Eigen::MatrixXd>& logits) {
  mode.validate();
  std::map<std::string, std::vector<int>> out;
  for (const std::string& task : mode.head_tasks()) {
    auto it = logits.find(task);
    if (it == logits.end()) {
      throw DataError("predict: missing logits for head " + task);
    }
    const Eigen::MatrixXd& l = it->second;
    if (!l.allFinite()) {
      throw NumericError("predict: non-finite logits for head " + task);
    }
    std::vector<int> preds;
    preds.reserve(static_cast<std::size_t>(l.rows()));
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
      int best = 0;
      for (Eigen::Index c = 1; c < l.cols(); ++c) {
        if (l(r, c) > l(r, best)) best = static_cast<int>(c);
      }
      preds.push_back(best);
    }
    out[task] = std::move(preds);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

json head_to_json(const Head& h) {
  json j;
  j["task"] = h.task;
  j["classes"] = h.classes();
  j["hidden"] = h.hidden();
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(h.weight.size()));
  for (int r = 0; r < h.classes(); ++r) {
    for (int c = 0; c < h.hidden(); ++c) w.push_back(h.weight(r, c));
  }
  j["weight"] = w;
  std::vector<double> b(h.bias.data(), h.bias.data() + h.bias.size());
  j["bias"] = b;
  return j;
}

Head head_from_json(const json& j) {
  Head h;
  h.task = j.at("task").get<std::string>();
  int classes = j.at("classes").get<int>();
  int hidden = j.at("hidden").get<int>();
  auto w = j.at("weight").get<std::vector<double>>();
  auto b = j.at("bias").get<std::vector<double>>();
  if (w.size() != static_cast<std::size_t>(classes) * hidden ||
      b.size() != static_cast<std::size_t>(classes)) {
    throw DataError("checkpoint head \"" + h.task + "\" has wrong weight size");
  }
  h.weight.resize(classes, hidden);
  for (int r = 0; r < classes; ++r) {
    for (int c = 0; c < hidden; ++c) {
      h.weight(r, c) = w[static_cast<std::size_t>(r) * hidden + c];
    }
  }
  h.bias = Eigen::Map<Eigen::VectorXd>(b.data(), classes);
  return h;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  c.heads.mode.validate();
  c.adaptation.validate();
  json j;
  j["format"] = "biaslab-checkpoint";
  j["format_version"] = 1;
  j["backend_id"] = c.backend_id;
  j["pooling"] = pooling_name(c.pooling);
  j["adaptation"] = {{"method", adaptation_method_name(c.adaptation.method)},
                     {"quant_bits", c.adaptation.quant_bits},
                     {"rank", c.adaptation.rank},
                     {"alpha", c.adaptation.alpha},
                     {"dropout", c.adaptation.dropout}};
  j["seed"] = c.seed;
  j["label_enumeration_version"] = c.label_enumeration_version;
  j["mode"] = labels::task_mode_name(c.heads.mode.mode);
  if (c.heads.mode.auxiliary) {
    j["auxiliary"] = labels::auxiliary_task_name(*c.heads.mode.auxiliary);
  }
  json heads = json::array();
  for (const Head& h : c.heads.heads) heads.push_back(head_to_json(h));
  j["heads"] = heads;
  j["metrics"] = c.metrics;
  io::write_file(path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (j.value("format", std::string()) != "biaslab-checkpoint") {
    throw DataError(path.string() + ": not a checkpoint file");
  }
  Checkpoint c;
  c.label_enumeration_version = j.at("label_enumeration_version").get<int>();
  if (c.label_enumeration_version != labels::kLabelEnumerationVersion) {
    throw AlignmentError(
        path.string() + ": label enumeration version " +
        std::to_string(c.label_enumeration_version) + " != expected " +
        std::to_string(labels::kLabelEnumerationVersion) +
        "; class indices are not comparable");
  }
  c.backend_id = j.at("backend_id").get<std::string>();
  c.pooling = parse_pooling(j.at("pooling").get<std::string>());
  const json& a = j.at("adaptation");
  c.adaptation.method = parse_adaptation_method(a.at("method").get<std::string>());
  c.adaptation.quant_bits = a.at("quant_bits").get<int>();
  c.adaptation.rank = a.at("rank").get<int>();
  c.adaptation.alpha = a.at("alpha").get<double>();
  c.adaptation.dropout = a.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.heads.mode.mode = labels::parse_task_mode(j.at("mode").get<std::string>());
  if (j.contains("auxiliary")) {
    c.heads.mode.auxiliary =
        labels::parse_auxiliary_task(j.at("auxiliary").get<std::string>());
  }
  c.heads.mode.validate();
  for (const json& h : j.at("heads")) {
    c.heads.heads.push_back(head_from_json(h));
  }
  if (j.contains("metrics")) {
    c.metrics = j.at("metrics").get<std::map<std::string, double>>();
  }
  return c;
}

}  // namespace biaslab::modeling
