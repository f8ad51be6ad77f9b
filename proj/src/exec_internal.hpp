#pragma once

// Shared node evaluation logic between the sequential interpreter and the
// pipeline stages. Internal to the executor translation units.

#include <unordered_map>

#include "taskdb/executor.hpp"

namespace taskdb {
namespace detail {

inline bool literal_matches(const Column& col, std::size_t row, CmpOp op, const Literal& lit) {
  int cmp;
  if (col.type == ColumnType::Num) {
    double v = col.nums[row];
    double w = lit.is_number ? lit.number : std::stod(lit.text);
    cmp = v < w ? -1 : (v > w ? 1 : 0);
  } else if (col.type == ColumnType::Text) {
    const std::string& v = col.texts[row];
    const std::string w = lit.is_number ? lit.text : lit.text;
    cmp = v.compare(w);
    cmp = cmp < 0 ? -1 : (cmp > 0 ? 1 : 0);
  } else {
    raise(ErrorCode::InvalidArgument, "cannot compare a tensor column to a literal");
  }
  switch (op) {
    case CmpOp::Eq: return cmp == 0;
    case CmpOp::Ne: return cmp != 0;
    case CmpOp::Lt: return cmp < 0;
    case CmpOp::Le: return cmp <= 0;
    case CmpOp::Gt: return cmp > 0;
    case CmpOp::Ge: return cmp >= 0;
  }
  return false;
}

struct NodeRun {
  RowBatch batch;
  NodeMetrics metrics;
};

// Per-node sequential evaluators shared by execute() and the pipeline stages.
class NodeEvaluator {
 public:
  NodeEvaluator(const PlanDag& g, ExecEnv& env) : g_(g), env_(env) {}

  RowBatch scan(const OperatorNode& node, NodeMetrics& m) {
    const RowBatch& table = env_.tables->get(node.table);
    RowBatch out;
    for (const Column& col : table.columns) {
      Column copy = col;
      copy.name = node.alias + "." + col.name;
      out.columns.push_back(std::move(copy));
    }
    out.row_count = table.row_count;
    m.sim_seconds += double(out.row_count) * env_.options.rel_row_cost;
    return out;
  }

  RowBatch filter(const OperatorNode& node, const RowBatch& in, NodeMetrics& m) {
    m.sim_seconds += double(in.row_count) * env_.options.rel_row_cost;
    const Column& col = in.at(node.filter_column);
    RowBatch out = in.empty_like();
    for (std::size_t r = 0; r < in.row_count; ++r)
      if (literal_matches(col, r, node.filter_op, node.filter_value))
        out.append_row(in, r);
    return out;
  }

  RowBatch join(const OperatorNode& node, const RowBatch& left, const RowBatch& right,
                NodeMetrics& m) {
    m.sim_seconds +=
        double(left.row_count + right.row_count) * env_.options.rel_row_cost;
    // Join keys may live on either side; detect by column presence.
    const bool left_has_left_key = left.find(node.join_left) != nullptr;
    const std::string& left_key = left_has_left_key ? node.join_left : node.join_right;
    const std::string& right_key = left_has_left_key ? node.join_right : node.join_left;
    const Column& lk = left.at(left_key);
    const Column& rk = right.at(right_key);

    std::unordered_map<std::string, std::vector<std::size_t>> build;
    for (std::size_t r = 0; r < right.row_count; ++r)
      build[rk.repr(r)].push_back(r);

    RowBatch out;
    for (const Column& c : left.columns) out.add(c.name, c.type);
    for (const Column& c : right.columns) out.add(c.name, c.type);
    for (std::size_t l = 0; l < left.row_count; ++l) {
      auto it = build.find(lk.repr(l));
      if (it == build.end()) continue;
      for (std::size_t r : it->second) {
        std::size_t ci = 0;
        for (const Column& c : left.columns) out.columns[ci++].append_from(c, l);
        for (const Column& c : right.columns) out.columns[ci++].append_from(c, r);
        ++out.row_count;
      }
    }
    return out;
  }

  RowBatch group(const OperatorNode& node, const RowBatch& in, NodeMetrics& m) {
    m.sim_seconds += double(in.row_count) * env_.options.rel_row_cost;
    struct Acc {
      std::size_t first_row = 0;
      std::vector<double> sums;
      std::vector<std::uint64_t> counts;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, Acc> groups;

    std::vector<const Column*> key_cols;
    for (const std::string& k : node.group_columns) key_cols.push_back(&in.at(k));
    std::vector<const Column*> agg_cols;
    for (const AggItem& agg : node.aggregates)
      agg_cols.push_back(agg.star ? nullptr : &in.at(agg.input_column));

    bool grouped = !node.group_columns.empty();
    if (!grouped) {
      Acc& acc = groups[""];
      acc.sums.assign(node.aggregates.size(), 0.0);
      acc.counts.assign(node.aggregates.size(), 0);
      order.push_back("");
    }
    for (std::size_t r = 0; r < in.row_count; ++r) {
      std::string key;
      for (const Column* kc : key_cols) {
        key += kc->repr(r);
        key.push_back('\x1f');
      }
      auto it = groups.find(key);
      if (it == groups.end()) {
        it = groups.emplace(key, Acc{}).first;
        it->second.first_row = r;
        it->second.sums.assign(node.aggregates.size(), 0.0);
        it->second.counts.assign(node.aggregates.size(), 0);
        order.push_back(key);
      }
      Acc& acc = it->second;
      for (std::size_t a = 0; a < node.aggregates.size(); ++a) {
        acc.counts[a] += 1;
        if (!node.aggregates[a].star) {
          const Column* col = agg_cols[a];
          if (col->type != ColumnType::Num)
            raise(ErrorCode::InvalidArgument, "aggregate over non-numeric column '" +
                                                  node.aggregates[a].input_column + "'");
          acc.sums[a] += col->nums[r];
        }
      }
    }

    RowBatch out;
    for (std::size_t k = 0; k < node.group_columns.size(); ++k)
      out.add(node.group_columns[k], key_cols[k]->type);
    for (const AggItem& agg : node.aggregates) out.add(agg.display, ColumnType::Num);

    for (const std::string& key : order) {
      const Acc& acc = groups.at(key);
      if (!grouped && in.row_count == 0) {
        // empty ungrouped input: COUNT 0, SUM 0, AVG 0 by convention
      }
      std::size_t ci = 0;
      for (std::size_t k = 0; k < node.group_columns.size(); ++k)
        out.columns[ci++].append_from(*key_cols[k], acc.first_row);
      for (std::size_t a = 0; a < node.aggregates.size(); ++a) {
        double value = 0.0;
        switch (node.aggregates[a].fn) {
          case AggFn::Count: value = double(acc.counts[a]); break;
          case AggFn::Sum: value = acc.sums[a]; break;
          case AggFn::Avg:
            value = acc.counts[a] == 0 ? 0.0 : acc.sums[a] / double(acc.counts[a]);
            break;
        }
        out.columns[ci++].nums.push_back(value);
      }
      ++out.row_count;
    }
    return out;
  }

  RowBatch project(const OperatorNode& node, const RowBatch& in, NodeMetrics& m) {
    m.sim_seconds += double(in.row_count) * env_.options.rel_row_cost;
    RowBatch out;
    for (const auto& [src, display] : node.projection) {
      Column copy = in.at(src);
      copy.name = display;
      out.columns.push_back(std::move(copy));
    }
    out.row_count = in.row_count;
    return out;
  }

  // Converts one input cell into the kernel's input tensor.
  Mvec row_tensor(const OperatorNode& node, const Column& col, std::size_t r,
                  NodeMetrics& m) {
    if (node.predict.input_type == TaskInputType::Text ||
        node.predict.input_type == TaskInputType::Image) {
      if (col.type != ColumnType::Text)
        raise(ErrorCode::InvalidArgument,
              "task '" + node.predict.task_name + "' expects raw text/image bytes in '" +
                  node.predict.input_column + "'");
      if (!env_.extractor)
        raise(ErrorCode::ExtractorFailure, "no extractor configured");
      std::uint64_t before = env_.extractor->invocations();
      Mvec v = embed_or_fetch(env_.options.use_cache ? env_.cache : nullptr,
                              *env_.extractor, col.texts[r]);
      if (env_.extractor->invocations() > before) {
        ++m.cache_misses;
        m.sim_seconds += env_.extractor->sim_cost();
      } else {
        ++m.cache_hits;
      }
      return v;
    }
    if (col.type == ColumnType::Tensor) return col.tensors[r];
    if (col.type == ColumnType::Num) return Mvec({1}, {col.nums[r]});
    raise(ErrorCode::InvalidArgument,
          "column '" + node.predict.input_column + "' cannot feed a tensor input");
  }

  RowBatch predict(const OperatorNode& node, const RowBatch& in, NodeMetrics& m) {
    std::uint64_t batch =
        env_.options.batch_override.value_or(node.batch_size.value_or(1));
    if (batch == 0) batch = 1;
    const DeviceProfile& device =
        env_.device(node.device_name.value_or(std::string("cpu0")));
    const Column& col = in.at(node.predict.input_column);

    const StubModel* stub = nullptr;
    RemoteClient* client = nullptr;
    if (node.predict.remote)
      client = &env_.remote(node.predict.model_id);
    else
      stub = &env_.stub(node.predict.model_id);

    std::vector<Mvec> outputs(in.row_count);
    WindowState state;
    state.batch_size = batch;
    std::uint64_t batches = 0;

    auto run_window = [&]() {
      if (state.pending.empty()) return;
      try {
        if (client) {
          Mvec batch_tensor = stack_batch(state.pending, state.pending_rows);
          (void)batch_tensor;  // shape check; the wire format sends rows
          auto results = client->invoke(state.pending);
          state.results.insert(state.results.end(),
                               std::make_move_iterator(results.begin()),
                               std::make_move_iterator(results.end()));
          state.result_rows = state.pending_rows;
        } else {
          window_infer(state, *stub, device);
        }
      } catch (const Error& e) {
        raise(e.code(), "node " + std::to_string(node.node_id) + " (" +
                            node.predict.task_name + "): " + e.what());
      }
      for (auto& [row, value] : window_cleanup(state))
        outputs[row] = std::move(value);
      ++batches;
    };

    for (std::size_t r = 0; r < in.row_count; ++r) {
      if (window_accumulate(state, row_tensor(node, col, r, m), r)) run_window();
    }
    run_window();  // end-of-stream flush of the partial batch

    // Simulated accounting: the model stages once per activation, then each
    // batch launch is charged at its allocated size.
    if (in.row_count > 0) {
      double per_row = node.predict.remote
                           ? device.per_row_latency
                           : exec_time(node.predict.profile, device, 1);
      double setup = node.predict.remote ? device.latency : device.dispatch;
      if (!node.predict.remote)
        m.sim_seconds += trans_cost(node.predict.profile, device);
      m.sim_seconds += double(batches) * (setup + double(batch) * per_row);
    }
    m.batches += batches;

    RowBatch out = in;
    Column& result = out.add(node.predict.output_column,
                             node.predict.output_kind == TaskKind::Classification
                                 ? ColumnType::Text
                                 : ColumnType::Num);
    for (std::size_t r = 0; r < in.row_count; ++r) {
      const Mvec& o = outputs[r];
      if (node.predict.output_kind == TaskKind::Classification) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < o.size(); ++i)
          if (o.data()[i] > o.data()[best]) best = i;
        std::size_t label = std::min(best, node.predict.labels.size() - 1);
        result.texts.push_back(node.predict.labels[label]);
      } else {
        result.nums.push_back(o.size() == 0 ? 0.0 : o.data()[0]);
      }
    }
    return out;
  }

 private:
  const PlanDag& g_;
  ExecEnv& env_;
};

}  // namespace detail
}  // namespace taskdb
