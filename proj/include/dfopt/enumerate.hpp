#pragma once
// Enumeration of all reordered alternatives of a flow.
//
// enum_alternatives works top-down: the alternatives of a flow are its root
// placed over every combination of alternatives of its inputs, closed under
// the moves that involve the root itself. A move that brings an operator s to
// the top continues with the flow below s, which is strictly smaller, so the
// recursion ends at the sources. Sub-flows over the same operators and sources
// share a memo entry.
//
// enum_by_closure is the slow reference: breadth-first search over every move
// at every position of the tree.

#include <algorithm>
#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dfopt/dataflow.hpp"
#include "dfopt/error.hpp"
#include "dfopt/reorder.hpp"

namespace dfopt {

struct EnumOptions {
    bool memo = true;
    std::size_t max_flows = 1'000'000; // across the final set and every memoized sub-result
};

struct EnumStats {
    std::size_t memo_hits = 0;
    std::size_t memo_misses = 0;
    std::size_t memo_repairs = 0; // key known, but the sub-flow lies in a class not seen yet
    std::size_t moves_applied = 0;
    double seconds = 0;
};

namespace enum_detail {

struct PlanHash {
    std::size_t operator()(const PlanNode* p) const { return static_cast<std::size_t>(p->hash); }
};
struct PlanEq {
    bool operator()(const PlanNode* a, const PlanNode* b) const { return a->hash == b->hash && a->canon == b->canon; }
};
using PlanSet = std::unordered_set<const PlanNode*, PlanHash, PlanEq>;

struct AltSet {
    std::vector<PlanPtr> items; // owns the nodes indexed by `index`
    PlanSet index;

    bool add(const PlanPtr& p) {
        if (!index.insert(p.get()).second) return false;
        items.push_back(p);
        return true;
    }
    bool contains(const PlanPtr& p) const { return index.count(p.get()) != 0; }
};

class Enumerator {
public:
    Enumerator(const FlowContext& ctx, EnumOptions opt) : ctx_(ctx), opt_(opt) {}

    using SetPtr = std::shared_ptr<AltSet>;

    SetPtr run(const PlanPtr& d) { return enumerate(d); }
    EnumStats stats;

private:

    void charge(std::size_t n) {
        produced_ += n;
        if (produced_ > opt_.max_flows)
            throw BudgetExceeded("enumeration exceeded the budget of " + std::to_string(opt_.max_flows) + " flows",
                                 produced_);
    }

    SetPtr enumerate(const PlanPtr& d) {
        if (!opt_.memo) return compute(d);
        // one key may hold several classes: arrangements of the same operators
        // that no sequence of moves connects
        auto& classes = memo_[d->memo];
        for (const auto& c : classes)
            if (c->contains(d)) {
                ++stats.memo_hits;
                return c;
            }
        if (classes.empty()) ++stats.memo_misses;
        else ++stats.memo_repairs;
        SetPtr s = compute(d);
        memo_[d->memo].push_back(s);
        return s;
    }

    SetPtr compute(const PlanPtr& d) {
        auto out = std::make_shared<AltSet>();
        if (d->is_source) {
            out->add(d);
            return out;
        }
        std::deque<PlanPtr> work{d};
        AltSet expanded;
        while (!work.empty()) {
            PlanPtr f = work.front();
            work.pop_front();
            if (out->contains(f) || !expanded.add(f)) continue;
            // the root over every combination of input alternatives
            std::vector<SetPtr> inputs;
            for (const auto& c : f->children) inputs.push_back(enumerate(c));
            std::vector<PlanPtr> fresh;
            auto emit = [&](std::vector<PlanPtr> ch) {
                PlanPtr g = make_op_node(ctx_, f->index, std::move(ch));
                if (out->add(g)) fresh.push_back(g);
            };
            if (inputs.size() == 1) {
                for (const auto& a : inputs[0]->items) emit({a});
            } else {
                for (const auto& a : inputs[0]->items)
                    for (const auto& b : inputs[1]->items) emit({a, b});
            }
            charge(fresh.size());
            // moves involving the root bring another operator to the top
            for (const auto& g : fresh) {
                auto moves = valid_moves(ctx_, *g);
                stats.moves_applied += moves.size();
                for (const auto& m : moves) {
                    PlanPtr h = apply_move(ctx_, *g, m);
                    if (!out->contains(h) && !expanded.contains(h)) work.push_back(h);
                }
            }
        }
        return out;
    }

    const FlowContext& ctx_;
    EnumOptions opt_;
    std::unordered_map<std::string, std::vector<SetPtr>> memo_;
    std::size_t produced_ = 0;
};

inline std::vector<DataFlow> to_flows(const DataFlow& f, const std::vector<PlanPtr>& items) {
    std::vector<DataFlow> out;
    out.reserve(items.size());
    for (const auto& p : items) out.push_back(f.with_root(p));
    std::sort(out.begin(), out.end(),
              [](const DataFlow& a, const DataFlow& b) { return a.canonical() < b.canonical(); });
    return out;
}

inline void require_analyzed(const DataFlow& f) {
    if (!f.context().analyzed) throw TransformError("flow has not been analyzed");
}

// Every move anywhere in the tree, paired with the resulting plan.
inline void all_moves(const FlowContext& ctx, const PlanPtr& n,
                      const std::function<void(const Move&, PlanPtr)>& sink) {
    if (n->is_source) return;
    for (const auto& m : valid_moves(ctx, *n)) sink(m, apply_move(ctx, *n, m));
    for (std::size_t i = 0; i < n->children.size(); ++i)
        all_moves(ctx, n->children[i], [&](const Move& m, PlanPtr c) {
            sink(m, reorder_detail::with_child(ctx, *n, static_cast<int>(i), std::move(c)));
        });
}

} // namespace enum_detail

/// All alternatives of `f`, sorted by canonical form; `f` itself included.
inline std::vector<DataFlow> enum_alternatives(const DataFlow& f, const EnumOptions& opt = {},
                                               EnumStats* stats = nullptr) {
    enum_detail::require_analyzed(f);
    auto t0 = std::chrono::steady_clock::now();
    enum_detail::Enumerator e(f.context(), opt);
    auto set = e.run(f.root());
    auto out = enum_detail::to_flows(f, set->items);
    if (stats) {
        *stats = e.stats;
        stats->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return out;
}

/// Reference enumeration: fixpoint of single moves applied anywhere.
inline std::vector<DataFlow> enum_by_closure(const DataFlow& f, std::size_t max_flows = 1'000'000) {
    enum_detail::require_analyzed(f);
    enum_detail::AltSet seen;
    std::deque<PlanPtr> work{f.root()};
    seen.add(f.root());
    while (!work.empty()) {
        PlanPtr p = work.front();
        work.pop_front();
        enum_detail::all_moves(f.context(), p, [&](const Move&, PlanPtr q) {
            if (seen.add(q)) {
                if (seen.items.size() > max_flows)
                    throw BudgetExceeded("closure exceeded the budget of " + std::to_string(max_flows) + " flows",
                                         max_flows);
                work.push_back(q);
            }
        });
    }
    return enum_detail::to_flows(f, seen.items);
}

/// One step of a derivation, with the flow it produces.
struct DerivationStep {
    Move move;
    DataFlow result;
};

/// Shortest sequence of approved moves turning `from` into `to`, if any.
inline std::optional<std::vector<DerivationStep>> derive(const DataFlow& from, const DataFlow& to,
                                                        std::size_t max_flows = 1'000'000) {
    enum_detail::require_analyzed(from);
    const auto& ctx = from.context();
    struct Back {
        std::string prev;
        Move move;
        PlanPtr plan;
    };
    std::unordered_map<std::string, Back> back;
    back.emplace(from.canonical(), Back{"", {}, from.root()});
    std::deque<PlanPtr> work{from.root()};
    bool found = from.canonical() == to.canonical();
    while (!work.empty() && !found) {
        PlanPtr p = work.front();
        work.pop_front();
        enum_detail::all_moves(ctx, p, [&](const Move& m, PlanPtr q) {
            if (found || back.count(q->canon)) return;
            back.emplace(q->canon, Back{p->canon, m, q});
            if (back.size() > max_flows)
                throw BudgetExceeded("derivation search exceeded the budget", back.size());
            if (q->canon == to.canonical()) found = true;
            work.push_back(q);
        });
    }
    if (!found) return std::nullopt;
    std::vector<DerivationStep> steps;
    for (std::string cur = to.canonical(); cur != from.canonical();) {
        const auto& b = back.at(cur);
        steps.push_back({b.move, from.with_root(b.plan)});
        cur = b.prev;
    }
    std::reverse(steps.begin(), steps.end());
    return steps;
}

} // namespace dfopt
