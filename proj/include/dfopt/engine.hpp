#pragma once
// In-memory execution of flows, equivalence checks across alternatives, and a
// record-count cost model.
//
// Intermediate records are global records: one slot per attribute of the flow,
// absent until produced. An operator sees its UDF inputs through the layouts it
// was declared with, so a reordered operator behaves exactly as in the original
// flow. Emitted records start from the records they were derived from (which
// keeps attributes foreign to the operator) and then take the UDF's values at
// every position of the operator's declared output.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dfopt/csv.hpp"
#include "dfopt/dataflow.hpp"
#include "dfopt/error.hpp"
#include "dfopt/interpreter.hpp"

namespace dfopt {

using Inputs = std::map<std::string, DataSet>;

struct OperatorCounts {
    std::string id;
    std::size_t input_records = 0; // per input, summed
    std::size_t invocations = 0;
    std::size_t output_records = 0;
    double cost = 0;
};

struct ExecutionReport {
    DataSet sink;
    std::vector<OperatorCounts> operators; // in execution order
    double seconds = 0;
};

struct ExecOptions {
    std::size_t step_budget = default_step_budget;
};

/// Reads every source's CSV file. Paths are taken relative to `data_dir` when given.
inline Inputs load_inputs(const FlowContext& ctx, const std::string& data_dir = "") {
    Inputs out;
    for (const auto& s : ctx.sources) {
        std::string path = s.path;
        if (!data_dir.empty()) path = (std::filesystem::path(data_dir) / std::filesystem::path(s.path).filename()).string();
        out[s.name] = DataSet{s.layout, read_csv_file(path, s.columns)};
    }
    return out;
}

/// Checks arity, column types and declared uniqueness constraints.
inline void validate_inputs(const FlowContext& ctx, const Inputs& in) {
    for (const auto& s : ctx.sources) {
        auto it = in.find(s.name);
        if (it == in.end()) throw ValidationError("no data for source '" + s.name + "'");
        const auto& ds = it->second;
        for (const auto& r : ds.records) {
            if (r.arity() != s.columns.size())
                throw ValidationError(s.name + ": record " + r.to_string() + " has arity " +
                                      std::to_string(r.arity()) + ", expected " + std::to_string(s.columns.size()));
            for (std::size_t i = 0; i < r.arity(); ++i)
                if (!r[i].is_absent() && r[i].tag() != s.columns[i].type)
                    throw ValidationError(s.name + ": value " + r[i].to_string() + " in column " +
                                          s.columns[i].name + " has type " + tag_name(r[i].tag()));
        }
        if (s.constraints.singleton && ds.records.size() != 1)
            throw ValidationError(s.name + " is declared to hold a single record but has " +
                                  std::to_string(ds.records.size()));
        for (const auto& key : s.constraints.unique_keys) {
            std::set<Record> seen;
            for (const auto& r : ds.records) {
                Record k = project(r, s.layout, key);
                if (!seen.insert(k).second)
                    throw ValidationError(s.name + ": unique key " + ctx.global.format(key) + " repeats value " +
                                          k.to_string());
            }
        }
    }
}

struct RandomInputOptions {
    std::size_t records = 16;
    std::int64_t lo = -2, hi = 2; // integer range; keys widen it when uniqueness needs room
    std::uint64_t seed = 1;
};

/// Random data for every source that honours declared unique keys, foreign keys
/// and single-record sources.
inline Inputs random_inputs(const FlowContext& ctx, const RandomInputOptions& opt = {}) {
    std::mt19937_64 rng(opt.seed);
    static const std::vector<std::string> words{"a", "b", "c", "buy", "view"};
    auto draw = [&](ValueTag t, std::int64_t lo, std::int64_t hi) -> Value {
        switch (t) {
        case ValueTag::int64: return Value(std::uniform_int_distribution<std::int64_t>(lo, hi)(rng));
        case ValueTag::float64: return Value(static_cast<double>(std::uniform_int_distribution<int>(-4, 4)(rng)) / 2);
        case ValueTag::string: return Value(words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)]);
        case ValueTag::boolean: return Value(std::uniform_int_distribution<int>(0, 1)(rng) == 1);
        default: return Value::absent();
        }
    };
    // referenced sources first so foreign keys can draw from existing key values
    std::vector<int> order;
    std::vector<int> state(ctx.sources.size(), 0);
    std::function<void(int)> visit = [&](int s) {
        if (state[s]) return;
        state[s] = 1;
        for (const auto& fk : ctx.sources[s].constraints.foreign_keys) visit(fk.ref_source);
        order.push_back(s);
    };
    for (std::size_t s = 0; s < ctx.sources.size(); ++s) visit(static_cast<int>(s));

    Inputs out;
    for (int si : order) {
        const auto& src = ctx.sources[si];
        std::size_t want = src.constraints.singleton ? 1 : opt.records;
        std::int64_t span = opt.hi - opt.lo + 1;
        std::int64_t hi = src.constraints.unique_keys.empty()
                              ? opt.hi
                              : opt.lo + std::max<std::int64_t>(span, static_cast<std::int64_t>(2 * want)) - 1;
        std::vector<std::set<Record>> seen(src.constraints.unique_keys.size());
        DataSet ds{src.layout, {}};
        for (std::size_t tries = 0; ds.records.size() < want && tries < 50 * want + 100; ++tries) {
            Record r;
            for (const auto& c : src.columns) r.values.push_back(draw(c.type, opt.lo, hi));
            for (const auto& fk : src.constraints.foreign_keys) {
                const auto& ref = out.at(ctx.sources[fk.ref_source].name);
                if (ref.records.empty()) continue;
                const auto& row = ref.records[std::uniform_int_distribution<std::size_t>(0, ref.records.size() - 1)(rng)];
                const auto& rl = ctx.sources[fk.ref_source].layout;
                for (std::size_t i = 0; i < fk.attributes.size(); ++i) {
                    auto from = std::find(rl.begin(), rl.end(), fk.ref_attributes[i]) - rl.begin();
                    auto to = std::find(src.layout.begin(), src.layout.end(), fk.attributes[i]) - src.layout.begin();
                    r.values[to] = row[from];
                }
            }
            bool ok = true;
            for (std::size_t k = 0; k < seen.size() && ok; ++k)
                ok = !seen[k].count(project(r, src.layout, src.constraints.unique_keys[k]));
            if (!ok) continue;
            for (std::size_t k = 0; k < seen.size(); ++k)
                seen[k].insert(project(r, src.layout, src.constraints.unique_keys[k]));
            ds.records.push_back(std::move(r));
        }
        out[src.name] = std::move(ds);
    }
    return out;
}

namespace engine_detail {

using GRec = std::vector<Value>;

inline Record view(const GRec& g, const Layout& l) {
    Record r;
    r.values.reserve(l.size());
    for (auto a : l) r.values.push_back(g[a.value]);
    return r;
}

inline std::vector<Value> key_values(const GRec& g, const std::vector<AttributeId>& key) {
    std::vector<Value> k;
    k.reserve(key.size());
    for (auto a : key) k.push_back(g[a.value]);
    return k;
}

inline std::string show(const std::vector<GRec>& rs, const GlobalRecord& global) {
    std::string s;
    for (std::size_t i = 0; i < rs.size() && i < 4; ++i) {
        Record r{rs[i]};
        s += (i ? ", " : "") + r.to_string();
    }
    if (rs.size() > 4) s += ", ...";
    (void)global;
    return "[" + s + "]";
}

class Executor {
public:
    Executor(const FlowContext& ctx, const Inputs& in, ExecOptions opt) : ctx_(ctx), in_(in), opt_(opt) {}

    std::vector<GRec> eval(const PlanNode& n) {
        if (n.is_source) return source(n.index);
        std::vector<std::vector<GRec>> ins;
        for (const auto& c : n.children) ins.push_back(eval(*c));
        const auto& o = ctx_.operators[n.index];
        if (!o.udf) throw Error("operator " + o.id + " has no UDF code to execute");
        OperatorCounts cnt;
        cnt.id = o.id;
        // attributes an input layout names but the actual input lacks; the UDF
        // sees them as absent, and copying that padding out is not a write
        padding_ = AttrSet{};
        for (std::size_t k = 0; k < n.children.size(); ++k)
            for (auto a : o.input_layouts[k])
                if (!n.children[k]->attrs.contains(a)) padding_.insert(a);
        for (const auto& i : ins) cnt.input_records += i.size();
        std::vector<GRec> out;
        switch (o.kind) {
        case OpKind::map:
            for (const auto& g : ins[0]) invoke(o, {{g}}, out, cnt);
            cnt.cost = static_cast<double>(ins[0].size());
            break;
        case OpKind::reduce: {
            auto groups = group(ins[0], effective_key(o, 0, *n.children[0]));
            for (auto& [k, g] : groups) invoke(o, {g}, out, cnt);
            cnt.cost = static_cast<double>(ins[0].size());
            break;
        }
        case OpKind::cross:
            for (const auto& l : ins[0])
                for (const auto& r : ins[1]) invoke(o, {{l}, {r}}, out, cnt);
            cnt.cost = static_cast<double>(ins[0].size()) * static_cast<double>(ins[1].size());
            break;
        case OpKind::match: {
            auto right = group(ins[1], o.keys[1]);
            auto left = group(ins[0], o.keys[0]);
            for (const auto& [k, ls] : left) {
                auto it = right.find(k);
                if (it == right.end()) continue;
                for (const auto& l : ls)
                    for (const auto& r : it->second) invoke(o, {{l}, {r}}, out, cnt);
            }
            cnt.cost = static_cast<double>(ins[0].size() + ins[1].size() + cnt.invocations);
            break;
        }
        case OpKind::cogroup: {
            auto left = group(ins[0], o.keys[0]);
            auto right = group(ins[1], o.keys[1]);
            std::set<std::vector<Value>> keys;
            for (const auto& [k, v] : left) keys.insert(k);
            for (const auto& [k, v] : right) keys.insert(k);
            static const std::vector<GRec> none;
            for (const auto& k : keys) {
                auto l = left.find(k);
                auto r = right.find(k);
                invoke(o, {l == left.end() ? none : l->second, r == right.end() ? none : r->second}, out, cnt);
            }
            cnt.cost = static_cast<double>(ins[0].size() + ins[1].size() + cnt.invocations);
            break;
        }
        }
        cnt.output_records = out.size();
        counts.push_back(cnt);
        return out;
    }

    std::vector<OperatorCounts> counts;

private:
    std::vector<GRec> source(int s) {
        const auto& src = ctx_.sources[s];
        auto it = in_.find(src.name);
        if (it == in_.end()) throw ValidationError("no data for source '" + src.name + "'");
        std::vector<GRec> out;
        out.reserve(it->second.records.size());
        for (const auto& r : it->second.records) {
            if (r.arity() != src.layout.size())
                throw ValidationError(src.name + ": record " + r.to_string() + " does not match the source layout");
            GRec g(ctx_.global.size(), Value::absent());
            for (std::size_t i = 0; i < r.arity(); ++i) g[src.layout[i].value] = r[i];
            out.push_back(std::move(g));
        }
        return out;
    }

    // Grouping key restricted to what the input actually carries; a grouping
    // attribute produced elsewhere is absent here and would group nothing apart.
    std::vector<AttributeId> effective_key(const Operator& o, std::size_t side, const PlanNode& input) const {
        std::vector<AttributeId> k;
        for (auto a : o.keys[side])
            if (input.attrs.contains(a)) k.push_back(a);
        return k;
    }

    std::map<std::vector<Value>, std::vector<GRec>> group(const std::vector<GRec>& rs,
                                                          const std::vector<AttributeId>& key) const {
        std::map<std::vector<Value>, std::vector<GRec>> g;
        for (const auto& r : rs) g[key_values(r, key)].push_back(r);
        for (auto& [k, v] : g) std::sort(v.begin(), v.end());
        return g;
    }

    void invoke(const Operator& o, const std::vector<std::vector<GRec>>& groups, std::vector<GRec>& out,
                OperatorCounts& cnt) {
        std::vector<std::vector<Record>> views(groups.size());
        for (std::size_t k = 0; k < groups.size(); ++k)
            for (const auto& g : groups[k]) views[k].push_back(view(g, o.input_layouts[k]));
        InvocationOptions io;
        io.step_budget = opt_.step_budget;
        for (const auto& l : o.input_layouts) io.input_arity.push_back(l.size());
        std::vector<EmittedRecord> emitted;
        try {
            emitted = run_udf(*o.udf, views, io);
        } catch (const InvocationError& e) {
            std::string recs;
            for (std::size_t k = 0; k < groups.size(); ++k) recs += (k ? " and " : "") + show(groups[k], ctx_.global);
            throw InvocationError(o.id + ": " + e.what() + " on input " + recs);
        }
        ++cnt.invocations;
        bool rat = !is_kat(o.kind);
        for (auto& e : emitted) {
            GRec g(ctx_.global.size(), Value::absent());
            auto seed = [&](const GRec& s) {
                for (std::size_t i = 0; i < s.size(); ++i)
                    if (!s[i].is_absent()) g[i] = s[i];
            };
            if (rat) {
                for (const auto& grp : groups) seed(grp.front());
            } else {
                for (auto [k, idx] : e.sources)
                    if (static_cast<std::size_t>(k) < groups.size() && idx < groups[k].size()) seed(groups[k][idx]);
            }
            for (std::size_t p = 0; p < o.output_layout.size(); ++p) {
                const Value& v = p < e.values.size() ? e.values[p] : Value::absent();
                if (v.is_absent() && padding_.contains(o.output_layout[p])) continue;
                g[o.output_layout[p].value] = v;
            }
            out.push_back(std::move(g));
        }
    }

    const FlowContext& ctx_;
    const Inputs& in_;
    ExecOptions opt_;
    AttrSet padding_;
};

} // namespace engine_detail

/// Evaluates the flow bottom-up and projects the root's records onto the sink layout.
inline ExecutionReport execute(const DataFlow& f, const Inputs& in, const ExecOptions& opt = {}) {
    auto t0 = std::chrono::steady_clock::now();
    const auto& ctx = f.context();
    engine_detail::Executor ex(ctx, in, opt);
    auto rows = ex.eval(*f.root());
    ExecutionReport rep;
    rep.sink.layout = ctx.sink_layout;
    rep.sink.records.reserve(rows.size());
    for (const auto& g : rows) rep.sink.records.push_back(engine_detail::view(g, ctx.sink_layout));
    std::sort(rep.sink.records.begin(), rep.sink.records.end());
    rep.operators = std::move(ex.counts);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

struct VerifyEntry {
    std::string canonical;
    bool equal = false;
    std::string error; // execution failure, if any
    std::size_t records = 0;
};

struct VerifyReport {
    DataSet reference;
    std::vector<VerifyEntry> entries;
    bool pass = true;
};

/// Executes every flow and compares its sink bag with that of `original`.
inline VerifyReport verify_equivalence(const DataFlow& original, const std::vector<DataFlow>& flows,
                                       const Inputs& in, const ExecOptions& opt = {}) {
    VerifyReport rep;
    rep.reference = execute(original, in, opt).sink;
    for (const auto& f : flows) {
        VerifyEntry e;
        e.canonical = f.canonical();
        try {
            auto out = execute(f, in, opt).sink;
            e.records = out.records.size();
            e.equal = datasets_equal(rep.reference, out);
        } catch (const Error& err) {
            e.error = err.what();
        }
        rep.pass = rep.pass && e.equal;
        rep.entries.push_back(std::move(e));
    }
    return rep;
}

struct CostEstimate {
    double total = 0;
    std::vector<std::pair<std::string, double>> per_operator;
};

/// Processed input records per operator, summed. Cross counts pairs; Match and
/// CoGroup count both inputs plus the pairs or groups handed to the UDF.
inline CostEstimate cost(const DataFlow& f, const Inputs& sample, const ExecOptions& opt = {}) {
    auto rep = execute(f, sample, opt);
    CostEstimate c;
    for (const auto& o : rep.operators) {
        c.per_operator.emplace_back(o.id, o.cost);
        c.total += o.cost;
    }
    return c;
}

struct RankedFlow {
    DataFlow flow;
    CostEstimate cost;
    double normalized = 1;
    std::size_t rank = 0;
};

/// Ascending by cost, ties by canonical form; normalized by the cheapest plan.
inline std::vector<RankedFlow> rank(const std::vector<DataFlow>& flows, const Inputs& sample,
                                    const ExecOptions& opt = {}) {
    std::vector<RankedFlow> out;
    for (const auto& f : flows) out.push_back({f, cost(f, sample, opt), 1, 0});
    std::sort(out.begin(), out.end(), [](const RankedFlow& a, const RankedFlow& b) {
        if (a.cost.total != b.cost.total) return a.cost.total < b.cost.total;
        return a.flow.canonical() < b.flow.canonical();
    });
    double best = out.empty() ? 0 : out.front().cost.total;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].rank = i + 1;
        if (best > 0) out[i].normalized = out[i].cost.total / best;
        else out[i].normalized = out[i].cost.total == 0 ? 1 : std::numeric_limits<double>::infinity();
    }
    return out;
}

} // namespace dfopt
