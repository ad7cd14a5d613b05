#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dsnet/config.hpp"
#include "dsnet/metrics.hpp"
#include "dsnet/model.hpp"

namespace dsnet {

/// Adam with decoupled weight decay. Moments are keyed by parameter name.
class Adam {
 public:
  explicit Adam(const TrainConfig& cfg) : cfg_(cfg) {}

  /// One update from the gradients currently held by the store. Parameters
  /// without a gradient are treated as having a zero gradient.
  void step(ParamStore& params);

  long steps() const { return t_; }
  std::map<std::string, Tensor>& first_moments() { return m_; }
  std::map<std::string, Tensor>& second_moments() { return v_; }
  const std::map<std::string, Tensor>& first_moments() const { return m_; }
  const std::map<std::string, Tensor>& second_moments() const { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  TrainConfig cfg_;
  long t_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

/// Per-iteration diagnostics. Gate columns are batch means per level.
struct LogRow {
  long iteration = 0;
  LossReport loss;
  std::array<double, kPyramidLevels> w_s{}, w_t{}, v_s{}, v_t{}, u_s{}, u_t{};
  double eps_s = 0.0;
  double eps_t = 0.0;
  double wall_ms = 0.0;
};

/// Fixed column order of the training log.
std::string log_header();
std::string format_log_row(const LogRow& row);

struct TrainState {
  RunConfig config;
  std::unique_ptr<DsNet> net;
  Adam adam;
  long iteration = 0;
  std::vector<LogRow> log;

  explicit TrainState(const RunConfig& cfg);
};

/// Runs `iterations` optimizer steps on `data`, appending to state.log and,
/// when given, streaming CSV rows to `log_csv`. Throws NumericError naming
/// the iteration and loss term if a loss becomes non-finite.
void train_steps(TrainState& state, const std::vector<VideoSample>& data, long iterations,
                 std::ostream* log_csv = nullptr);
/// Fresh state trained for cfg.train.iterations.
std::unique_ptr<TrainState> train(const RunConfig& cfg, const std::vector<VideoSample>& data,
                                  std::ostream* log_csv = nullptr);

/// True if the mean loss of some `window`-iteration block exceeds the mean
/// of the block before it.
bool loss_window_increase(const std::vector<LogRow>& log, std::size_t window = 200);

/// Sample indices drawn for iteration `iteration` (0-based): seeded epoch
/// shuffles over the dataset.
std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch_size, long iteration,
                                       std::uint64_t seed);

// Checkpoint directory: manifest.txt (kind, variant, iteration, then one
// `param <name> <file> <n> <c> <h> <w>` line per tensor), config.cfg, and a
// tensor dump per parameter and per Adam moment.

enum class CheckpointKind { network, oracle_stub };

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::network;
  RunConfig config;
  std::unique_ptr<TrainState> state;  // null for the stub

  /// Predictor over the loaded network, or the ground-truth stub.
  std::unique_ptr<Predictor> predictor() const;
};

void save_checkpoint(const TrainState& state, const std::filesystem::path& dir);
void save_oracle_stub(const RunConfig& cfg, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);
/// Throws ConfigError when the checkpoint was trained as a different variant.
void require_variant(const Checkpoint& ckpt, Variant expected);

struct EvalResult {
  MetricsReport metrics;
  std::vector<BranchReliability> reliability;  // per sample, when the model has one
  std::vector<int> sequence;
  std::vector<int> index;
};

/// Forward passes without updates. Throws std::invalid_argument on an empty dataset.
EvalResult evaluate(const Predictor& predictor, const std::vector<VideoSample>& data, std::size_t batch_size = 4);

void write_eval_csv(std::ostream& out, const EvalResult& r);
void write_reliability_csv(std::ostream& out, const EvalResult& r);
/// Standalone SVG of a PR curve.
std::string pr_curve_svg(const PrCurve& curve, const std::string& title);

struct AblationRow {
  std::string label;
  Variant variant = Variant::proposed;
  double tau = kDefaultTau;
  MetricsReport metrics;
  double mean_eps_s = 0.0;
  double mean_eps_t = 0.0;
};

/// Variant lists for the named families: baseline, dwg, caa, head.
std::vector<Variant> ablation_family(const std::string& name);
const std::vector<double>& default_tau_sweep();

using ProgressFn = std::function<void(const std::string&)>;

/// Trains and evaluates each variant from the same seed and budget.
std::vector<AblationRow> ablate(const RunConfig& base, const std::vector<Variant>& variants,
                                const std::vector<VideoSample>& train_data, const std::vector<VideoSample>& eval_data,
                                const ProgressFn& progress = {});
/// Same, over tau values for the base variant.
std::vector<AblationRow> sweep_tau(const RunConfig& base, const std::vector<double>& taus,
                                   const std::vector<VideoSample>& train_data,
                                   const std::vector<VideoSample>& eval_data, const ProgressFn& progress = {});
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace dsnet
