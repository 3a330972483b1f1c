#pragma once
// Pairwise reorderability and local plan rewrites.
//
// A move rewrites one parent/child pair somewhere in the tree:
//   swap    unary over unary            r(s(x))      -> s(r(x))
//   push    unary over binary, side j   r(s(x0,x1))  -> s(.., r(xj), ..)
//   pull    binary over unary, side j   r(.., s(x), ..) -> s(r(.., x, ..))
//   rotate  binary over binary          r(s(a0,a1),c) -> s(r(ai,c), a(1-i)) and mirrors
// Every move has an inverse that is approved under the same conditions, so the
// set of reachable plans does not depend on direction.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "dfopt/dataflow.hpp"
#include "dfopt/error.hpp"

namespace dfopt {

struct ReorderVerdict {
    bool allowed = false;
    std::string rule;
    std::vector<std::string> failed;
    int side = -1; // push/pull side, or rotation partner position
    bool explain = true; // collect messages; enumeration only needs the outcome

    template <class Why>
    void fail(Why&& why) {
        allowed = false;
        if (explain) failed.push_back(why());
    }
};

enum class MoveKind { swap, push, pull, rotate };

inline const char* to_string(MoveKind k) {
    switch (k) {
    case MoveKind::swap: return "swap";
    case MoveKind::push: return "push";
    case MoveKind::pull: return "pull";
    case MoveKind::rotate: return "rotate";
    }
    return "?";
}

struct Move {
    MoveKind kind = MoveKind::swap;
    int parent = -1; // operator index (upper operator before the move)
    int child = -1;  // operator index (lower operator before the move)
    int side = -1;   // push: side of child receiving parent; pull: side of parent holding child;
                     // rotate: side of parent holding child
    int partner = -1; // rotate: which input of the child pairs with the parent after the move
    ReorderVerdict verdict;
};

namespace reorder_detail {

inline std::string fmt(const FlowContext& ctx, const AttrSet& s) { return ctx.global.format(s); }

inline const Operator& opr(const FlowContext& ctx, int i) { return ctx.operators.at(i); }

// Read/write/write conflicts between two operators' properties.
inline void check_roc(const FlowContext& ctx, int a, int b, ReorderVerdict& v) {
    const auto& pa = opr(ctx, a).props;
    const auto& pb = opr(ctx, b).props;
    const auto& ia = opr(ctx, a).id;
    const auto& ib = opr(ctx, b).id;
    if (auto x = pa.read & pb.write; !x.empty())
        v.fail([&] { return std::string("read/write conflict: " + ia + " reads " + fmt(ctx, x) + " written by " + ib); });
    if (auto x = pa.write & pb.read; !x.empty())
        v.fail([&] { return std::string("read/write conflict: " + ib + " reads " + fmt(ctx, x) + " written by " + ia); });
    if (auto x = pa.write & pb.write; !x.empty())
        v.fail([&] { return std::string("write/write conflict on " + fmt(ctx, x) + " between " + ia + " and " + ib); });
}

inline bool check_pins(const FlowContext& ctx, int a, int b, ReorderVerdict& v) {
    bool ok = true;
    for (int i : {a, b}) {
        const auto& o = opr(ctx, i);
        if (o.props.pinned) {
            v.fail([&] { return std::string(o.id + " is pinned (" + o.props.pin_reason + ")"); });
            ok = false;
        }
    }
    return ok;
}

// Key-group preservation of a key-at-a-time UDF: it emits exactly one record
// per consumed record of `side`.
inline bool kat_kgp(const Operator& o, int side, const AttrSet& key) {
    return o.props.is_per_record(side) || (o.props.manual && o.props.kgp(key));
}

// KGP of a record-at-a-time operator, with a join's keys folded into its decision.
inline bool rat_kgp(const Operator& o, const AttrSet& key) {
    if (!o.props.kgp(key)) return false;
    if (o.kind == OpKind::match) return o.key_set().subset_of(key);
    return true;
}

inline AttrSet key_of(const Operator& o, std::size_t side) {
    AttrSet s;
    if (side < o.keys.size())
        for (auto a : o.keys[side]) s.insert(a);
    return s;
}

inline AttrSet created_of(const Operator& o) {
    AttrSet s;
    for (auto a : o.created) s.insert(a);
    return s;
}

} // namespace reorder_detail

inline bool roc(const OperatorProperties& a, const OperatorProperties& b) {
    return !a.read.intersects(b.write) && !a.write.intersects(b.read) && !a.write.intersects(b.write);
}

/// Unary r directly above unary s.
inline ReorderVerdict unary_pair_verdict(const FlowContext& ctx, int r, int s, bool explain = true) {
    using namespace reorder_detail;
    ReorderVerdict v;
    v.explain = explain;
    v.allowed = true;
    check_pins(ctx, r, s, v);
    const auto& R = opr(ctx, r);
    const auto& S = opr(ctx, s);
    check_roc(ctx, r, s, v);
    bool rm = R.kind == OpKind::map, sm = S.kind == OpKind::map;
    if (rm && sm) {
        v.rule = "map-map";
    } else if (rm != sm) {
        const auto& m = rm ? R : S;
        const auto& red = rm ? S : R;
        v.rule = "map-reduce";
        AttrSet key = key_of(red, 0);
        if (!rat_kgp(m, key))
            v.fail([&] { return std::string("key group preservation fails: " + m.id + " may split or alter groups of key " + fmt(ctx, key)); });
    } else {
        v.rule = "reduce-reduce";
        if (!kat_kgp(R, 0, key_of(S, 0)))
            v.fail([&] { return std::string("key group preservation fails: " + R.id + " does not emit exactly one record per input record"); });
        if (!kat_kgp(S, 0, key_of(R, 0)))
            v.fail([&] { return std::string("key group preservation fails: " + S.id + " does not emit exactly one record per input record"); });
    }
    return v;
}

/// Unary u directly above binary b, moved into input `side` of b (x: that input, y: the other).
inline ReorderVerdict push_verdict(const FlowContext& ctx, int u, int b, int side, const PlanNode& x,
                                   const PlanNode& y, bool explain = true) {
    using namespace reorder_detail;
    (void)x;
    ReorderVerdict v;
    v.explain = explain;
    v.allowed = true;
    v.side = side;
    check_pins(ctx, u, b, v);
    const auto& U = opr(ctx, u);
    const auto& B = opr(ctx, b);
    const AttrSet& ya = y.attrs;
    check_roc(ctx, u, b, v);
    AttrSet touched = (U.kind == OpKind::map ? U.props.read : U.props.udf_read) | U.props.write;
    if (auto t = touched & ya; !t.empty())
        v.fail([&] { return std::string(U.id + " uses attributes " + fmt(ctx, t) + " of the other input of " + B.id); });

    if (B.kind == OpKind::cross || B.kind == OpKind::match) {
        if (U.kind == OpKind::map) {
            v.rule = "map-join";
        } else {
            v.rule = "reduce-join";
            AttrSet g = key_of(U, 0);
            AttrSet kx = key_of(B, side), ky = key_of(B, 1 - side);
            if (!kx.subset_of(g))
                v.fail([&] { return std::string("join key " + fmt(ctx, kx) + " of " + B.id + " is not part of grouping key " + fmt(ctx, g)); });
            if (!rat_kgp(B, g | ya))
                v.fail([&] { return std::string("key group preservation fails for " + B.id + " with key " + fmt(ctx, g | ya)); });
            // every group must meet the same records of the other input
            std::string coverage;
            if (!y.is_source) {
                v.fail([&] { return std::string("other input of " + B.id + " is not a base data set; grouping cannot be shown invariant"); });
            } else {
                const auto& c = ctx.sources[y.index].constraints;
                bool unique_by_join_key = B.kind == OpKind::match &&
                    std::any_of(c.unique_keys.begin(), c.unique_keys.end(),
                                [&](const AttrSet& k) { return !k.empty() && k.subset_of(ky); });
                if (c.singleton)
                    coverage = "single-record input";
                else if (unique_by_join_key)
                    coverage = "invariant grouping";
                else if (ya.subset_of(g) && !c.unique_keys.empty())
                    coverage = "grouping key covers input";
                else
                    v.fail([&] { return std::string("grouping key " + fmt(ctx, g) + " does not determine the records of " +
                           ctx.sources[y.index].name + " (no singleton, unique join key, or full-key cover)"); });
            }
            if (!coverage.empty()) v.rule += " (" + coverage + ")";
        }
    } else if (B.kind == OpKind::cogroup) {
        AttrSet kx = key_of(B, side);
        if (B.props.exclusive_side != side)
            v.fail([&] { return std::string(B.id + " does not emit only copies of records from input " + std::to_string(side)); });
        if (U.kind == OpKind::map) {
            v.rule = "map-cogroup";
            if (!rat_kgp(U, kx))
                v.fail([&] { return std::string("key group preservation fails: " + U.id + " may split groups of key " + fmt(ctx, kx)); });
        } else {
            v.rule = "reduce-cogroup";
            if (!kat_kgp(U, 0, kx))
                v.fail([&] { return std::string("key group preservation fails: " + U.id + " does not emit exactly one record per input record"); });
            if (!B.props.is_per_record(side))
                v.fail([&] { return std::string("key group preservation fails: " + B.id + " does not emit exactly one record per record of input " +
                       std::to_string(side)); });
        }
    } else {
        v.rule = "unsupported";
        v.fail([&] { return std::string("no rule for " + std::string(to_string(U.kind)) + " over " + to_string(B.kind)); });
    }
    return v;
}

/// Binary r holding binary s on input `side`; `partner` selects which input of s ends up with r.
inline ReorderVerdict rotate_verdict(const FlowContext& ctx, int r, int s, int side, int partner,
                                     const PlanNode& s_node, const PlanNode& c, bool explain = true) {
    using namespace reorder_detail;
    ReorderVerdict v;
    v.explain = explain;
    v.allowed = true;
    v.side = partner;
    v.rule = "join-rotation";
    check_pins(ctx, r, s, v);
    const auto& R = opr(ctx, r);
    const auto& S = opr(ctx, s);
    auto join = [](OpKind k) { return k == OpKind::cross || k == OpKind::match; };
    if (!join(R.kind) || !join(S.kind)) {
        v.rule = "unsupported";
        v.fail([&] { return std::string("no rule for " + std::string(to_string(R.kind)) + " over " + to_string(S.kind)); });
        v.allowed = false;
        return v;
    }
    const auto& keep = *s_node.children[partner];
    const auto& other = *s_node.children[1 - partner];
    AttrSet kr = key_of(R, side);
    if (!kr.subset_of(keep.attrs))
        v.fail([&] { return std::string("key " + fmt(ctx, kr) + " of " + R.id + " is not available in the input it would join"); });
    check_roc(ctx, r, s, v);
    if (auto t = (R.props.read | R.props.write) & other.attrs; !t.empty())
        v.fail([&] { return std::string(R.id + " uses attributes " + fmt(ctx, t) + " of an input it would no longer see"); });
    if (auto t = (S.props.read | S.props.write) & c.attrs; !t.empty())
        v.fail([&] { return std::string(S.id + " uses attributes " + fmt(ctx, t) + " of the other input of " + R.id); });
    return v;
}

namespace reorder_detail {

inline PlanPtr with_child(const FlowContext& ctx, const PlanNode& n, int side, PlanPtr c) {
    auto ch = n.children;
    ch[side] = std::move(c);
    return make_op_node(ctx, n.index, std::move(ch));
}

} // namespace reorder_detail

/// Result of applying a move at node `n`.
inline PlanPtr apply_move(const FlowContext& ctx, const PlanNode& n, const Move& m) {
    using namespace reorder_detail;
    switch (m.kind) {
    case MoveKind::swap: {
        const auto& s = *n.children[0];
        return make_op_node(ctx, s.index, {make_op_node(ctx, n.index, {s.children[0]})});
    }
    case MoveKind::push: {
        const auto& s = *n.children[0];
        return with_child(ctx, s, m.side, make_op_node(ctx, n.index, {s.children[m.side]}));
    }
    case MoveKind::pull: {
        const auto& s = *n.children[m.side];
        return make_op_node(ctx, s.index, {with_child(ctx, n, m.side, s.children[0])});
    }
    case MoveKind::rotate: {
        const auto& s = *n.children[m.side];
        PlanPtr inner = with_child(ctx, n, m.side, s.children[m.partner]);
        return with_child(ctx, s, m.partner, inner);
    }
    }
    throw TransformError("unknown move");
}

/// All moves between node `n` and its direct children, approved or not.
inline std::vector<Move> candidate_moves(const FlowContext& ctx, const PlanNode& n, bool explain = true) {
    std::vector<Move> out;
    if (n.is_source) return out;
    const auto& r = ctx.operators[n.index];
    for (std::size_t j = 0; j < n.children.size(); ++j) {
        const auto& c = *n.children[j];
        if (c.is_source) continue;
        const auto& s = ctx.operators[c.index];
        if (is_unary(r.kind) && is_unary(s.kind)) {
            out.push_back(Move{MoveKind::swap, n.index, c.index, -1, -1, unary_pair_verdict(ctx, n.index, c.index, explain)});
        } else if (is_unary(r.kind)) {
            for (int side = 0; side < 2; ++side)
                out.push_back(Move{MoveKind::push, n.index, c.index, side, -1,
                                   push_verdict(ctx, n.index, c.index, side, *c.children[side],
                                                *c.children[1 - side], explain)});
        } else if (is_unary(s.kind)) {
            int side = static_cast<int>(j);
            out.push_back(Move{MoveKind::pull, n.index, c.index, side, -1,
                               push_verdict(ctx, c.index, n.index, side, *c.children[0], *n.children[1 - side],
                                            explain)});
        } else {
            int side = static_cast<int>(j);
            for (int partner = 0; partner < 2; ++partner)
                out.push_back(Move{MoveKind::rotate, n.index, c.index, side, partner,
                                   rotate_verdict(ctx, n.index, c.index, side, partner, c, *n.children[1 - side],
                                                  explain)});
        }
    }
    return out;
}

inline std::vector<Move> valid_moves(const FlowContext& ctx, const PlanNode& n) {
    auto all = candidate_moves(ctx, n, false);
    std::vector<Move> out;
    for (auto& m : all)
        if (m.verdict.allowed) out.push_back(std::move(m));
    return out;
}

inline std::string describe(const FlowContext& ctx, const Move& m) {
    const auto& p = ctx.operators[m.parent].id;
    const auto& c = ctx.operators[m.child].id;
    switch (m.kind) {
    case MoveKind::swap: return "swap " + p + " below " + c;
    case MoveKind::push: return "push " + p + " into input " + std::to_string(m.side) + " of " + c;
    case MoveKind::pull: return "pull " + c + " above " + p;
    case MoveKind::rotate: return "rotate " + p + " below " + c + " next to its input " + std::to_string(m.partner);
    }
    return "?";
}

namespace reorder_detail {

// Path of child indices from the root to the node of operator `op`.
inline std::optional<std::vector<int>> path_to(const PlanNode& n, int op) {
    if (!n.is_source && n.index == op) return std::vector<int>{};
    for (std::size_t i = 0; i < n.children.size(); ++i)
        if (auto p = path_to(*n.children[i], op)) {
            p->insert(p->begin(), static_cast<int>(i));
            return p;
        }
    return std::nullopt;
}

inline const PlanNode& at(const PlanNode& root, const std::vector<int>& path) {
    const PlanNode* n = &root;
    for (int i : path) n = n->children[i].get();
    return *n;
}

inline PlanPtr replace_at(const FlowContext& ctx, const PlanPtr& root, const std::vector<int>& path, std::size_t depth,
                          PlanPtr repl) {
    if (depth == path.size()) return repl;
    return with_child(ctx, *root, path[depth], replace_at(ctx, root->children[path[depth]], path, depth + 1, repl));
}

inline std::optional<std::vector<int>> parent_path(const DataFlow& f, int a, int b, int& parent, int& child) {
    const auto& root = *f.root();
    for (auto [p, c] : {std::pair{a, b}, std::pair{b, a}}) {
        auto path = path_to(root, p);
        if (!path) continue;
        const auto& n = at(root, *path);
        for (const auto& ch : n.children)
            if (!ch->is_source && ch->index == c) {
                parent = p;
                child = c;
                return path;
            }
    }
    return std::nullopt;
}

} // namespace reorder_detail

/// Verdict for two adjacent operators (either may be the parent). Several
/// moves may exist for a binary pair; the verdict allows if any does.
inline ReorderVerdict reorderable(const DataFlow& f, const std::string& a, const std::string& b) {
    using namespace reorder_detail;
    const auto& ctx = f.context();
    int ia = ctx.op_index(a), ib = ctx.op_index(b), parent = -1, child = -1;
    auto path = parent_path(f, ia, ib, parent, child);
    if (!path) {
        ReorderVerdict v;
        v.rule = "not-adjacent";
        v.fail([&] { return std::string(a + " and " + b + " are not parent and child in this flow"); });
        return v;
    }
    ReorderVerdict merged;
    for (const auto& m : candidate_moves(ctx, at(*f.root(), *path))) {
        if (m.child != child) continue;
        if (m.verdict.allowed) return m.verdict;
        if (merged.rule.empty()) merged.rule = m.verdict.rule;
        for (const auto& why : m.verdict.failed)
            if (std::find(merged.failed.begin(), merged.failed.end(), why) == merged.failed.end())
                merged.failed.push_back(why);
    }
    return merged;
}

/// Applies `m` at the node of its parent operator.
inline DataFlow apply_move(const DataFlow& f, const Move& m) {
    using namespace reorder_detail;
    auto path = path_to(*f.root(), m.parent);
    if (!path) throw TransformError("operator not in flow");
    const auto& n = at(*f.root(), *path);
    return f.with_root(replace_at(f.context(), f.root(), *path, 0, apply_move(f.context(), n, m)));
}

/// Exchanges two adjacent operators. For binary pairs, `option` picks among the
/// approved alternatives (push side or rotation partner) in candidate order.
inline DataFlow swap(const DataFlow& f, const std::string& a, const std::string& b, std::size_t option = 0) {
    using namespace reorder_detail;
    const auto& ctx = f.context();
    int parent = -1, child = -1;
    auto path = parent_path(f, ctx.op_index(a), ctx.op_index(b), parent, child);
    if (!path) throw TransformError(a + " and " + b + " are not adjacent");
    std::vector<Move> ok;
    ReorderVerdict why;
    for (auto& m : candidate_moves(ctx, at(*f.root(), *path))) {
        if (m.child != child) continue;
        if (m.verdict.allowed) ok.push_back(m);
        else why = m.verdict;
    }
    if (option >= ok.size()) {
        std::string msg = "cannot reorder " + a + " and " + b;
        for (const auto& w : why.failed) msg += "; " + w;
        throw TransformError(msg);
    }
    return apply_move(f, ok[option]);
}

/// Exchanges two adjacent unary operators without checking any condition.
/// Used to demonstrate what an unsafe reordering does.
inline DataFlow force_swap(const DataFlow& f, const std::string& a, const std::string& b) {
    using namespace reorder_detail;
    const auto& ctx = f.context();
    int parent = -1, child = -1;
    auto path = parent_path(f, ctx.op_index(a), ctx.op_index(b), parent, child);
    if (!path) throw TransformError(a + " and " + b + " are not adjacent");
    if (!is_unary(ctx.operators[parent].kind) || !is_unary(ctx.operators[child].kind))
        throw TransformError("forced exchange is only defined for two unary operators");
    Move m{MoveKind::swap, parent, child, -1, -1, {}};
    return apply_move(f, m);
}

} // namespace dfopt
