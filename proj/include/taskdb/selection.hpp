#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "taskdb/matrix.hpp"
#include "taskdb/mvec.hpp"

namespace taskdb {

/// Historical transfer-performance matrix: models x tasks, entries are
/// nonnegative "higher is better" scores.
struct TransferMatrix {
  Matrix values;                          // M x N
  std::vector<std::uint64_t> model_ids;   // length M
  std::vector<std::string> task_ids;      // length N

  void validate() const;

  static TransferMatrix from_csv(const std::string& text);
  std::string to_csv() const;
};

/// Result of factorizing V into nonnegative model embeddings W (M x k) and
/// task embeddings H (N x k), V ~= W * H^T.
struct EmbeddingSpace {
  Matrix W;
  Matrix H;
  std::size_t k = 0;
  double final_error = 0.0;            // relative Frobenius reconstruction error
  std::size_t iterations = 0;
  std::vector<double> error_history;   // per-sweep relative error
};

struct TaskFeatures {
  std::vector<double> vector;
  std::string extractor_id;
};

struct TaskEmbedding {
  std::vector<double> vector;  // length k
};

/// Multiplicative-update nonnegative factorization of V at latent dimension
/// k. Stops once the relative Frobenius error improves by less than tol
/// between sweeps, or after max_iters sweeps. Initialization draws from
/// (0, 1] with the given seed, so runs are reproducible.
EmbeddingSpace factorize(const TransferMatrix& V, std::size_t k,
                         std::size_t max_iters, double tol, std::uint64_t seed);

/// ||V - W H^T||_F / ||V||_F; absolute error when ||V||_F is zero.
double reconstruction_error(const Matrix& V, const Matrix& W, const Matrix& H);

/// Maps extractor feature vectors into the task-embedding subspace.
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual std::vector<double> predict(const std::vector<double>& features) const = 0;
  virtual std::size_t feature_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
};

/// Distance-weighted k-nearest-neighbor regression (k = 3, inverse-distance
/// weights, exact-match short circuit).
class KnnRegressor : public Regressor {
 public:
  KnnRegressor(std::vector<std::vector<double>> features, Matrix targets,
               std::size_t neighbors = 3);

  std::vector<double> predict(const std::vector<double>& features) const override;
  std::size_t feature_dim() const override { return feature_dim_; }
  std::size_t output_dim() const override { return targets_.cols(); }

 private:
  std::vector<std::vector<double>> features_;
  Matrix targets_;
  std::size_t neighbors_;
  std::size_t feature_dim_;
};

/// Trains the feature -> embedding mapping on the historical tasks.
std::unique_ptr<Regressor> fit_regressor(const std::vector<TaskFeatures>& features,
                                         const Matrix& H);

/// Projects a new task into the latent subspace; negative predicted
/// coordinates clamp to zero so scores stay in the nonnegative cone.
TaskEmbedding project_task(const Regressor& r, const TaskFeatures& f);

/// scores[i] = dot(W row i, t).
std::vector<double> transfer_scores(const Matrix& W, const TaskEmbedding& t);

/// Argmax score; ties break toward the lowest model id.
std::uint64_t select_model(const std::vector<double>& scores,
                           const std::vector<std::uint64_t>& model_ids);

struct RegretReport {
  double mean_regret = 0.0;
  double max_regret = 0.0;
  double agreement_rate = 0.0;  // top-1 match rate against the true argmax
  std::size_t tasks = 0;
  std::vector<double> per_task_regret;
};

/// Scores predicted choices against the true holdout columns.
/// predicted maps holdout task id -> chosen model id.
RegretReport evaluate_selection(
    const TransferMatrix& V_holdout,
    const std::vector<std::pair<std::string, std::uint64_t>>& predicted);

/// On-disk selector bundle: W/H as Mvec frames, training features, and a
/// small metadata record. Enough to rebuild the regressor and rank models.
struct SelectorBundle {
  EmbeddingSpace space;
  std::vector<std::uint64_t> model_ids;
  std::vector<std::string> task_ids;
  std::vector<TaskFeatures> features;
  std::uint64_t seed = 0;

  void save(const std::filesystem::path& dir) const;
  static SelectorBundle load(const std::filesystem::path& dir);
};

}  // namespace taskdb
