#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <thread>

#include "exec_internal.hpp"
#include "taskdb/executor.hpp"

namespace taskdb {

namespace {

// Single-producer single-consumer bounded queue; push blocks when full
// (backpressure), pop blocks until an item or close.
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

  void push(RowBatch batch) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return;  // consumer gave up; drop
    items_.push_back(std::move(batch));
    not_empty_.notify_one();
  }

  std::optional<RowBatch> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    RowBatch batch = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return batch;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::mutex mutex_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<RowBatch> items_;
  std::size_t capacity_;
  bool closed_ = false;
};

struct Stage {
  std::size_t index = 0;
  std::vector<std::uint32_t> nodes;  // in execution order
  bool has_predict = false;
  bool blocking = false;  // contains JOIN / GROUPBY / AGGREGATE
  std::string device;     // predict stages gate on their device timeline
};

// One stage per PREDICT (with its WINDOW) plus one stage per maximal chain
// of relational operators between them.
std::vector<Stage> partition_stages(const PlanDag& g,
                                    const std::vector<std::uint32_t>& order) {
  std::vector<int> stage_of(g.nodes.size(), -1);
  std::vector<Stage> stages;

  auto new_stage = [&](std::uint32_t id) -> Stage& {
    Stage s;
    s.index = stages.size();
    s.nodes.push_back(id);
    stage_of[id] = int(s.index);
    stages.push_back(std::move(s));
    return stages.back();
  };

  for (std::uint32_t id : order) {
    const OperatorNode& node = g.node(id);
    auto parents = g.parents(id);
    if (node.kind == NodeKind::WINDOW) {
      new_stage(id);
      continue;
    }
    if (node.kind == NodeKind::PREDICT) {
      // Joins its WINDOW's stage when present.
      int target = -1;
      for (std::uint32_t p : parents)
        if (g.node(p).kind == NodeKind::WINDOW) target = stage_of[p];
      Stage& s = target >= 0 ? stages[target] : new_stage(id);
      if (target >= 0) {
        s.nodes.push_back(id);
        stage_of[id] = target;
      }
      s.has_predict = true;
      s.device = node.device_name.value_or("cpu0");
      continue;
    }
    // Relational operator: extend the parent's relational chain when it is
    // the sole parent, has no other children, and is not a predict stage.
    int target = -1;
    if (parents.size() == 1) {
      std::uint32_t p = parents[0];
      if (!stages[stage_of[p]].has_predict && g.children(p).size() == 1)
        target = stage_of[p];
    }
    if (target >= 0) {
      stages[target].nodes.push_back(id);
      stage_of[id] = target;
    } else {
      new_stage(id);
    }
    if (node.kind == NodeKind::JOIN || node.kind == NodeKind::GROUPBY ||
        node.kind == NodeKind::AGGREGATE)
      stages[stage_of[id]].blocking = true;
  }
  return stages;
}

struct StageIo {
  // Cross-stage edges: (producer node, consumer node) -> queue.
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::shared_ptr<BoundedQueue>> queues;
};

}  // namespace

RowBatch pipeline_run(const PlanDag& g, const std::vector<std::uint32_t>& order,
                      ExecEnv& env, RunMetrics* metrics) {
  // Load kernels and clients up front so stage threads never mutate the
  // shared caches concurrently.
  for (const OperatorNode& node : g.nodes) {
    if (node.kind != NodeKind::PREDICT) continue;
    if (node.predict.remote)
      env.remote(node.predict.model_id);
    else
      env.stub(node.predict.model_id);
  }

  std::vector<Stage> stages = partition_stages(g, order);
  std::vector<int> stage_of(g.nodes.size(), -1);
  for (const Stage& s : stages)
    for (std::uint32_t id : s.nodes) stage_of[id] = int(s.index);

  StageIo io;
  for (const PlanEdge& e : g.edges) {
    if (stage_of[e.from] != stage_of[e.to] && e.label != EdgeLabel::ControlDependency)
      io.queues[{e.from, e.to}] =
          std::make_shared<BoundedQueue>(env.options.queue_capacity);
  }

  // Per-node metrics gathered by the stage threads.
  std::vector<NodeMetrics> node_metrics(g.nodes.size());
  for (std::uint32_t id = 0; id < g.nodes.size(); ++id) {
    node_metrics[id].node_id = id;
    node_metrics[id].kind = g.node(id).kind;
    node_metrics[id].device = g.node(id).device_name.value_or("cpu0");
  }

  RowBatch final_result;
  std::mutex result_mutex;
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto record_failure = [&](std::exception_ptr e) {
    std::lock_guard lock(failure_mutex);
    if (!failure) failure = e;
  };

  auto run_stage = [&](const Stage& stage) {
    detail::NodeEvaluator eval(g, env);
    try {
      // Gather input queues per entry node of this stage.
      std::map<std::uint32_t, std::vector<std::shared_ptr<BoundedQueue>>> inputs;
      for (auto& [key, queue] : io.queues)
        if (stage_of[key.second] == int(stage.index))
          inputs[key.second].push_back(queue);
      std::vector<std::shared_ptr<BoundedQueue>> outputs;
      for (auto& [key, queue] : io.queues)
        if (stage_of[key.first] == int(stage.index)) outputs.push_back(queue);

      auto drain = [&](BoundedQueue& q) {
        RowBatch all;
        bool first = true;
        while (auto chunk = q.pop()) {
          if (first) {
            all = chunk->empty_like();
            first = false;
          }
          for (std::size_t r = 0; r < chunk->row_count; ++r) all.append_row(*chunk, r);
        }
        return all;
      };

      auto emit = [&](RowBatch batch) {
        for (std::size_t i = 0; i < outputs.size(); ++i) {
          if (i + 1 < outputs.size())
            outputs[i]->push(batch);
          else
            outputs[i]->push(std::move(batch));
        }
      };

      auto close_outputs = [&] {
        for (auto& q : outputs) q->close();
      };

      if (stage.blocking || !stage.has_predict) {
        bool streaming_chain =
            !stage.blocking &&
            (g.parents(stage.nodes.front()).empty() ||
             inputs.count(stage.nodes.front()));
        if (streaming_chain && !g.parents(stage.nodes.front()).empty()) {
          // Chunk-wise relational chain fed by a single upstream queue.
          auto& queue = inputs.at(stage.nodes.front()).front();
          while (auto chunk = queue->pop()) {
            RowBatch batch = std::move(*chunk);
            for (std::uint32_t id : stage.nodes) {
              const OperatorNode& node = g.node(id);
              switch (node.kind) {
                case NodeKind::FILTER:
                  batch = eval.filter(node, batch, node_metrics[id]);
                  break;
                case NodeKind::PROJECT:
                case NodeKind::OUTPUT:
                  batch = eval.project(node, batch, node_metrics[id]);
                  break;
                case NodeKind::WINDOW:
                  break;
                default:
                  raise(ErrorCode::InvalidArgument, "unexpected node in chain stage");
              }
              node_metrics[id].rows_out += batch.row_count;
            }
            if (g.node(stage.nodes.back()).kind == NodeKind::OUTPUT) {
              std::lock_guard lock(result_mutex);
              if (final_result.columns.empty())
                final_result = batch.empty_like();
              for (std::size_t r = 0; r < batch.row_count; ++r)
                final_result.append_row(batch, r);
            } else if (batch.row_count > 0) {
              emit(std::move(batch));
            }
          }
          close_outputs();
          return;
        }

        // Materializing stage: sources, joins, grouping.
        std::map<std::uint32_t, RowBatch> ready;
        for (std::uint32_t id : stage.nodes) {
          const OperatorNode& node = g.node(id);
          auto node_parents = g.parents(id);
          std::vector<RowBatch*> in_batches;
          std::vector<RowBatch> drained;
          drained.reserve(node_parents.size());
          for (std::uint32_t p : node_parents) {
            if (stage_of[p] == int(stage.index)) {
              in_batches.push_back(&ready.at(p));
            } else {
              auto key = std::make_pair(p, id);
              drained.push_back(drain(*io.queues.at(key)));
              in_batches.push_back(&drained.back());
            }
          }
          NodeMetrics& m = node_metrics[id];
          RowBatch out;
          switch (node.kind) {
            case NodeKind::SCAN: out = eval.scan(node, m); break;
            case NodeKind::FILTER: out = eval.filter(node, *in_batches.at(0), m); break;
            case NodeKind::JOIN:
              out = eval.join(node, *in_batches.at(0), *in_batches.at(1), m);
              break;
            case NodeKind::GROUPBY:
            case NodeKind::AGGREGATE:
              out = eval.group(node, *in_batches.at(0), m);
              break;
            case NodeKind::PROJECT:
            case NodeKind::OUTPUT:
              out = eval.project(node, *in_batches.at(0), m);
              break;
            case NodeKind::WINDOW:
              out = *in_batches.at(0);
              break;
            case NodeKind::PREDICT:
              out = eval.predict(node, *in_batches.at(0), m);
              break;
          }
          m.rows_out += out.row_count;
          ready[id] = std::move(out);
        }
        RowBatch& last = ready.at(stage.nodes.back());
        if (g.node(stage.nodes.back()).kind == NodeKind::OUTPUT) {
          std::lock_guard lock(result_mutex);
          final_result = std::move(last);
        } else {
          // Emit in stream chunks so downstream stages overlap.
          while (last.row_count > 0)
            emit(last.take_prefix(env.options.stream_chunk));
        }
        close_outputs();
        return;
      }

      // Predict stage: WINDOW + PREDICT over streamed chunks.
      std::uint32_t window_id = stage.nodes.front();
      std::uint32_t predict_id = stage.nodes.back();
      const OperatorNode& predict_node = g.node(predict_id);
      auto& queue = inputs.at(window_id).front();
      while (auto chunk = queue->pop()) {
        if (chunk->row_count == 0) continue;
        RowBatch out = eval.predict(predict_node, *chunk, node_metrics[predict_id]);
        node_metrics[window_id].rows_out += chunk->row_count;
        node_metrics[predict_id].rows_out += out.row_count;
        emit(std::move(out));
      }
      close_outputs();
    } catch (...) {
      record_failure(std::current_exception());
      // Unblock neighbors.
      for (auto& [key, queue] : io.queues) queue->close();
    }
  };

  std::vector<std::thread> workers;
  workers.reserve(stages.size());
  for (const Stage& stage : stages)
    workers.emplace_back([&, stage_index = stage.index] { run_stage(stages[stage_index]); });
  for (std::thread& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);

  // Deterministic makespan model over the stage graph: streaming stages
  // overlap chunk-by-chunk, blocking stages gate on their final input, and
  // stages sharing a predict device serialize on its timeline.
  RunMetrics local;
  local.mode = "pipeline";
  for (const NodeMetrics& m : node_metrics) {
    local.sim_total += m.sim_seconds;
    local.batches += m.batches;
    local.cache_hits += m.cache_hits;
    local.cache_misses += m.cache_misses;
  }

  struct StageTiming {
    std::vector<std::pair<std::uint64_t, double>> emits;  // cumulative rows, time
    double done = 0.0;
    std::uint64_t rows_out = 0;
  };
  std::vector<StageTiming> timing(stages.size());
  std::map<std::string, double> device_free;

  auto emitted_at = [&](const StageTiming& t, std::uint64_t rows) {
    if (rows == 0) return 0.0;
    for (const auto& [cum, time] : t.emits)
      if (cum >= rows) return time;
    return t.done;
  };

  for (const Stage& stage : stages) {
    StageTiming& t = timing[stage.index];
    double stage_seconds = 0.0;
    for (std::uint32_t id : stage.nodes) stage_seconds += node_metrics[id].sim_seconds;
    std::uint64_t rows_in = 0;
    std::vector<const StageTiming*> upstream;
    for (auto& [key, queue] : io.queues) {
      if (stage_of[key.second] == int(stage.index)) {
        upstream.push_back(&timing[stage_of[key.first]]);
        rows_in += node_metrics[key.first].rows_out;
      }
    }
    std::uint64_t rows_out = node_metrics[stage.nodes.back()].rows_out;
    t.rows_out = rows_out;

    if (stage.blocking || upstream.empty()) {
      double start = 0.0;
      for (const StageTiming* u : upstream) start = std::max(start, u->done);
      t.done = start + stage_seconds;
      t.emits.push_back({rows_out, t.done});
      continue;
    }

    // Streaming: split the stage's work across its input chunks.
    std::uint64_t chunk = stage.has_predict
                              ? env.options.batch_override.value_or(
                                    g.node(stage.nodes.back()).batch_size.value_or(1))
                              : env.options.stream_chunk;
    if (chunk == 0) chunk = 1;
    std::uint64_t items = rows_in == 0 ? 0 : (rows_in + chunk - 1) / chunk;
    double per_item = items == 0 ? 0.0 : stage_seconds / double(items);
    double clock = 0.0;
    double* dev_free =
        stage.has_predict ? &device_free[stage.device] : nullptr;
    for (std::uint64_t k = 0; k < items; ++k) {
      std::uint64_t need = std::min(rows_in, (k + 1) * chunk);
      double ready = 0.0;
      for (const StageTiming* u : upstream)
        ready = std::max(ready, emitted_at(*u, need));
      double start = std::max(clock, ready);
      if (dev_free) start = std::max(start, *dev_free);
      clock = start + per_item;
      if (dev_free) *dev_free = clock;
      std::uint64_t emitted =
          std::uint64_t(double(rows_out) * double(k + 1) / double(items));
      t.emits.push_back({emitted, clock});
    }
    t.done = clock;
  }

  double makespan = 0.0;
  for (const StageTiming& t : timing) makespan = std::max(makespan, t.done);
  local.sim_makespan = makespan;
  local.nodes = std::move(node_metrics);
  local.rows_out = final_result.row_count;
  if (env.extractor) local.extractor_calls = env.extractor->invocations();
  if (metrics) *metrics = std::move(local);
  return final_result;
}

}  // namespace taskdb
