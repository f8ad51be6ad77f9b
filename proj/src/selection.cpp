#include "taskdb/selection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "taskdb/rng.hpp"
#include "taskdb/strutil.hpp"

namespace taskdb {

namespace {

// Guard against division by zero in the multiplicative updates.
constexpr double kEps = 1e-12;

}  // namespace

void TransferMatrix::validate() const {
  if (values.rows() == 0 || values.cols() == 0)
    raise(ErrorCode::InvalidArgument, "transfer matrix must be at least 1x1");
  if (model_ids.size() != values.rows() || task_ids.size() != values.cols())
    raise(ErrorCode::DimensionMismatch, "id lists do not match matrix shape");
  for (double v : values.values()) {
    if (!(v >= 0.0))
      raise(ErrorCode::NegativeEntry, "transfer matrix entries must be >= 0 and finite");
    if (!std::isfinite(v))
      raise(ErrorCode::NegativeEntry, "transfer matrix entries must be finite");
  }
}

TransferMatrix TransferMatrix::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    raise(ErrorCode::IoError, "empty transfer matrix csv");
  auto header = split(trim(line), ',');
  if (header.size() < 2)
    raise(ErrorCode::IoError, "transfer matrix csv needs at least one task column");
  TransferMatrix out;
  for (std::size_t j = 1; j < header.size(); ++j)
    out.task_ids.push_back(trim(header[j]));
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split(trim(line), ',');
    if (cells.size() != header.size())
      raise(ErrorCode::IoError, "ragged transfer matrix row: " + line);
    out.model_ids.push_back(std::stoull(trim(cells[0])));
    for (std::size_t j = 1; j < cells.size(); ++j)
      values.push_back(std::stod(trim(cells[j])));
  }
  out.values = Matrix(out.model_ids.size(), out.task_ids.size(), std::move(values));
  out.validate();
  return out;
}

std::string TransferMatrix::to_csv() const {
  std::ostringstream out;
  for (const std::string& task : task_ids) out << ',' << task;
  out << '\n';
  for (std::size_t i = 0; i < model_ids.size(); ++i) {
    out << model_ids[i];
    for (std::size_t j = 0; j < task_ids.size(); ++j)
      out << ',' << format_double(values.at(i, j));
    out << '\n';
  }
  return out.str();
}

double reconstruction_error(const Matrix& V, const Matrix& W, const Matrix& H) {
  if (W.rows() != V.rows() || H.rows() != V.cols() || W.cols() != H.cols())
    raise(ErrorCode::ShapeMismatch, "factor shapes do not match V");
  double err_sq = 0.0;
  for (std::size_t i = 0; i < V.rows(); ++i) {
    for (std::size_t j = 0; j < V.cols(); ++j) {
      double acc = 0.0;
      const double* wrow = W.row(i);
      const double* hrow = H.row(j);
      for (std::size_t p = 0; p < W.cols(); ++p) acc += wrow[p] * hrow[p];
      double diff = V.at(i, j) - acc;
      err_sq += diff * diff;
    }
  }
  double v_norm = V.frobenius_norm();
  double err = std::sqrt(err_sq);
  return v_norm == 0.0 ? err : err / v_norm;
}

namespace {

// One alternating sweep of exact nonnegative column updates (HALS): each
// factor column is set to the closed-form minimizer of the objective over
// the nonnegative orthant, so the error never increases.
void factor_sweep(const Matrix& V, Matrix& W, Matrix& H) {
  std::size_t M = V.rows(), N = V.cols(), k = W.cols();
  Matrix WtW = W.transposed().multiply(W);  // k x k
  Matrix VtW = V.transposed().multiply(W);  // N x k
  for (std::size_t p = 0; p < k; ++p) {
    double denom = WtW.at(p, p) + kEps;
    for (std::size_t i = 0; i < N; ++i) {
      double grad = VtW.at(i, p);
      for (std::size_t q = 0; q < k; ++q) grad -= H.at(i, q) * WtW.at(q, p);
      double v = H.at(i, p) + grad / denom;
      H.at(i, p) = v > 0 ? v : 0.0;
    }
  }
  Matrix HtH = H.transposed().multiply(H);  // k x k
  Matrix VH = V.multiply(H);                // M x k
  for (std::size_t p = 0; p < k; ++p) {
    double denom = HtH.at(p, p) + kEps;
    for (std::size_t i = 0; i < M; ++i) {
      double grad = VH.at(i, p);
      for (std::size_t q = 0; q < k; ++q) grad -= W.at(i, q) * HtH.at(q, p);
      double v = W.at(i, p) + grad / denom;
      W.at(i, p) = v > 0 ? v : 0.0;
    }
  }
}

void extrapolate(const Matrix& from, const Matrix& prev, double beta, Matrix& out) {
  out = from;
  for (std::size_t i = 0; i < out.values().size(); ++i) {
    double v = from.values()[i] + beta * (from.values()[i] - prev.values()[i]);
    out.values()[i] = v > 0 ? v : 0.0;
  }
}

}  // namespace

EmbeddingSpace factorize(const TransferMatrix& Vm, std::size_t k,
                         std::size_t max_iters, double tol, std::uint64_t seed) {
  Vm.validate();
  const Matrix& V = Vm.values;
  std::size_t M = V.rows();
  std::size_t N = V.cols();
  if (k < 1 || k > std::min(M, N))
    raise(ErrorCode::RankTooLarge, "k=" + std::to_string(k) + " exceeds min(M,N)=" +
                                       std::to_string(std::min(M, N)));
  if (max_iters < 1) raise(ErrorCode::InvalidArgument, "max_iters must be >= 1");
  if (!(tol > 0)) raise(ErrorCode::InvalidArgument, "tol must be > 0");

  Rng rng(seed);
  Matrix W(M, k);
  Matrix H(N, k);
  for (double& v : W.values()) v = rng.uniform_pos();
  for (double& v : H.values()) v = rng.uniform_pos();

  EmbeddingSpace space;
  space.k = k;
  double err = reconstruction_error(V, W, H);
  space.error_history.push_back(err);

  // Alternating nonnegative sweeps with a safeguarded extrapolation step:
  // an extrapolated candidate is kept only when it does not increase the
  // error, otherwise a plain sweep runs, so the sequence stays monotone.
  Matrix prev_w = W, prev_h = H;
  Matrix cand_w, cand_h;
  double beta = 0.5;
  std::size_t used = 0;
  while (used < max_iters) {
    extrapolate(W, prev_w, beta, cand_w);
    extrapolate(H, prev_h, beta, cand_h);
    factor_sweep(V, cand_w, cand_h);
    ++used;
    double cand_err = reconstruction_error(V, cand_w, cand_h);
    double next_err;
    if (cand_err <= err) {
      prev_w = std::move(W);
      prev_h = std::move(H);
      W = std::move(cand_w);
      H = std::move(cand_h);
      next_err = cand_err;
      beta = std::min(0.95, beta * 1.05);
    } else if (used < max_iters) {
      Matrix plain_w = W, plain_h = H;
      factor_sweep(V, plain_w, plain_h);
      ++used;
      prev_w = std::move(W);
      prev_h = std::move(H);
      W = std::move(plain_w);
      H = std::move(plain_h);
      next_err = reconstruction_error(V, W, H);
      beta = std::max(0.1, beta * 0.5);
    } else {
      break;  // budget spent on a rejected candidate
    }
    space.error_history.push_back(next_err);
    space.iterations = used;
    double improvement = err - next_err;
    err = next_err;
    if (improvement < tol) break;
  }

  space.W = std::move(W);
  space.H = std::move(H);
  space.final_error = err;
  return space;
}

KnnRegressor::KnnRegressor(std::vector<std::vector<double>> features, Matrix targets,
                           std::size_t neighbors)
    : features_(std::move(features)), targets_(std::move(targets)),
      neighbors_(neighbors) {
  if (features_.size() < 2)
    raise(ErrorCode::FewerThanTwoSamples,
          "regressor needs at least 2 training samples, got " +
              std::to_string(features_.size()));
  if (features_.size() != targets_.rows())
    raise(ErrorCode::DimensionMismatch, "feature count does not match target rows");
  feature_dim_ = features_.front().size();
  for (const auto& f : features_)
    if (f.size() != feature_dim_)
      raise(ErrorCode::DimensionMismatch, "training feature vectors differ in length");
}

std::vector<double> KnnRegressor::predict(const std::vector<double>& f) const {
  if (f.size() != feature_dim_)
    raise(ErrorCode::DimensionMismatch,
          "feature vector has length " + std::to_string(f.size()) + ", trained on " +
              std::to_string(feature_dim_));
  std::vector<std::pair<double, std::size_t>> dist(features_.size());
  for (std::size_t i = 0; i < features_.size(); ++i) {
    double acc = 0.0;
    for (std::size_t d = 0; d < feature_dim_; ++d) {
      double diff = f[d] - features_[i][d];
      acc += diff * diff;
    }
    dist[i] = {std::sqrt(acc), i};
  }
  std::sort(dist.begin(), dist.end());

  // Exact match dominates: return that task's embedding as-is.
  if (dist.front().first == 0.0) {
    const double* row = targets_.row(dist.front().second);
    return std::vector<double>(row, row + targets_.cols());
  }

  std::size_t use = std::min(neighbors_, dist.size());
  double weight_sum = 0.0;
  std::vector<double> out(targets_.cols(), 0.0);
  for (std::size_t n = 0; n < use; ++n) {
    double w = 1.0 / dist[n].first;
    weight_sum += w;
    const double* row = targets_.row(dist[n].second);
    for (std::size_t c = 0; c < targets_.cols(); ++c) out[c] += w * row[c];
  }
  for (double& v : out) v /= weight_sum;
  return out;
}

std::unique_ptr<Regressor> fit_regressor(const std::vector<TaskFeatures>& features,
                                         const Matrix& H) {
  if (features.size() < 2)
    raise(ErrorCode::FewerThanTwoSamples,
          "need at least 2 historical tasks, got " + std::to_string(features.size()));
  if (features.size() != H.rows())
    raise(ErrorCode::DimensionMismatch, "feature count does not match H rows");
  std::vector<std::vector<double>> vecs;
  vecs.reserve(features.size());
  for (const TaskFeatures& f : features) vecs.push_back(f.vector);
  return std::make_unique<KnnRegressor>(std::move(vecs), H);
}

TaskEmbedding project_task(const Regressor& r, const TaskFeatures& f) {
  TaskEmbedding t;
  t.vector = r.predict(f.vector);
  for (double& v : t.vector) v = std::max(v, 0.0);
  return t;
}

std::vector<double> transfer_scores(const Matrix& W, const TaskEmbedding& t) {
  if (t.vector.size() != W.cols())
    raise(ErrorCode::DimensionMismatch,
          "embedding length " + std::to_string(t.vector.size()) + " vs k=" +
              std::to_string(W.cols()));
  std::vector<double> scores(W.rows(), 0.0);
  for (std::size_t i = 0; i < W.rows(); ++i) {
    const double* row = W.row(i);
    double acc = 0.0;
    for (std::size_t p = 0; p < W.cols(); ++p) acc += row[p] * t.vector[p];
    scores[i] = acc;
  }
  return scores;
}

std::uint64_t select_model(const std::vector<double>& scores,
                           const std::vector<std::uint64_t>& model_ids) {
  if (scores.empty()) raise(ErrorCode::EmptyScoreList, "no scores to rank");
  if (scores.size() != model_ids.size())
    raise(ErrorCode::DimensionMismatch, "scores and model ids differ in length");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best] ||
        (scores[i] == scores[best] && model_ids[i] < model_ids[best]))
      best = i;
  }
  return model_ids[best];
}

RegretReport evaluate_selection(
    const TransferMatrix& V_holdout,
    const std::vector<std::pair<std::string, std::uint64_t>>& predicted) {
  RegretReport report;
  if (predicted.empty()) return report;
  V_holdout.validate();
  double regret_sum = 0.0;
  std::size_t agreements = 0;
  for (const auto& [task_id, chosen_model] : predicted) {
    auto task_it =
        std::find(V_holdout.task_ids.begin(), V_holdout.task_ids.end(), task_id);
    if (task_it == V_holdout.task_ids.end())
      raise(ErrorCode::UnknownTask, "holdout matrix has no task '" + task_id + "'");
    std::size_t j = std::size_t(task_it - V_holdout.task_ids.begin());
    auto model_it =
        std::find(V_holdout.model_ids.begin(), V_holdout.model_ids.end(), chosen_model);
    if (model_it == V_holdout.model_ids.end())
      raise(ErrorCode::UnknownModel,
            "holdout matrix has no model " + std::to_string(chosen_model));
    std::size_t chosen_row = std::size_t(model_it - V_holdout.model_ids.begin());

    double best = V_holdout.values.at(0, j);
    std::size_t best_row = 0;
    for (std::size_t i = 1; i < V_holdout.values.rows(); ++i) {
      if (V_holdout.values.at(i, j) > best) {
        best = V_holdout.values.at(i, j);
        best_row = i;
      }
    }
    double regret = best - V_holdout.values.at(chosen_row, j);
    report.per_task_regret.push_back(regret);
    regret_sum += regret;
    report.max_regret = std::max(report.max_regret, regret);
    if (chosen_row == best_row || regret == 0.0) ++agreements;
  }
  report.tasks = predicted.size();
  report.mean_regret = regret_sum / double(report.tasks);
  report.agreement_rate = double(agreements) / double(report.tasks);
  return report;
}

void SelectorBundle::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  Mvec w({space.W.rows(), space.W.cols()}, space.W.values());
  Mvec h({space.H.rows(), space.H.cols()}, space.H.values());
  write_binary_file(dir / "W.mvec", w.serialize());
  write_binary_file(dir / "H.mvec", h.serialize());

  std::vector<std::uint8_t> feat_bytes;
  for (const TaskFeatures& f : features)
    Mvec({f.vector.size()}, f.vector).serialize_into(feat_bytes);
  write_binary_file(dir / "features.mvecs", feat_bytes);

  std::ostringstream meta;
  meta << "k=" << space.k << "\n";
  meta << "seed=" << seed << "\n";
  meta << "final_error=" << format_double(space.final_error) << "\n";
  meta << "iterations=" << space.iterations << "\n";
  meta << "extractor=" << (features.empty() ? "" : encode_field(features[0].extractor_id))
       << "\n";
  meta << "model_ids=";
  for (std::size_t i = 0; i < model_ids.size(); ++i)
    meta << (i ? "," : "") << model_ids[i];
  meta << "\n";
  meta << "task_ids=";
  for (std::size_t i = 0; i < task_ids.size(); ++i)
    meta << (i ? "," : "") << encode_field(task_ids[i]);
  meta << "\n";
  write_text_file(dir / "meta.txt", meta.str());
}

SelectorBundle SelectorBundle::load(const std::filesystem::path& dir) {
  SelectorBundle bundle;
  Mvec w = Mvec::deserialize(read_binary_file(dir / "W.mvec"));
  Mvec h = Mvec::deserialize(read_binary_file(dir / "H.mvec"));
  if (w.rank() != 2 || h.rank() != 2)
    raise(ErrorCode::CorruptFrame, "selector factors must be rank-2");
  bundle.space.W = Matrix(w.shape()[0], w.shape()[1], w.data());
  bundle.space.H = Matrix(h.shape()[0], h.shape()[1], h.data());
  bundle.space.k = w.shape()[1];

  std::string extractor_id;
  for (const std::string& line : split(read_text_file(dir / "meta.txt"), '\n')) {
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string raw = trim(line.substr(eq + 1));
    if (key == "k") bundle.space.k = std::stoul(raw);
    else if (key == "seed") bundle.seed = std::stoull(raw);
    else if (key == "final_error") bundle.space.final_error = std::stod(raw);
    else if (key == "iterations") bundle.space.iterations = std::stoul(raw);
    else if (key == "extractor") extractor_id = decode_field(raw);
    else if (key == "model_ids" && !raw.empty())
      for (const std::string& id : split(raw, ','))
        bundle.model_ids.push_back(std::stoull(id));
    else if (key == "task_ids" && !raw.empty())
      for (const std::string& id : split(raw, ','))
        bundle.task_ids.push_back(decode_field(id));
  }

  auto feat_bytes = read_binary_file(dir / "features.mvecs");
  std::size_t offset = 0;
  while (offset < feat_bytes.size()) {
    Mvec f = Mvec::read_frame(feat_bytes, &offset);
    bundle.features.push_back(TaskFeatures{f.data(), extractor_id});
  }
  return bundle;
}

}  // namespace taskdb
