#pragma once
// Static estimation of UDF properties: read/write sets, implicit operation,
// emit-cardinality bounds and the evidence needed for key-group preservation.
//
// Results are first computed over positions (input, field) / output position and
// then mapped to global attributes through the operator's layouts.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dfopt/cfg.hpp"
#include "dfopt/udf_ir.hpp"
#include "dfopt/value.hpp"

namespace dfopt {

struct EmitBounds {
    static constexpr std::size_t inf = std::numeric_limits<std::size_t>::max();
    std::size_t lower = 0;
    std::size_t upper = inf;

    bool exactly_one() const { return lower == 1 && upper == 1; }
    bool at_most_one() const { return upper <= 1; }
    bool brackets(std::size_t n) const { return lower <= n && n <= upper; }
    bool operator==(const EmitBounds&) const = default;
    std::string to_string() const {
        return "[" + std::to_string(lower) + "," + (upper == inf ? std::string("inf") : std::to_string(upper)) + "]";
    }
};

enum class ImplicitOp { copy, projection };

inline const char* to_string(ImplicitOp op) { return op == ImplicitOp::copy ? "copy" : "projection"; }

enum class SetFieldClass { explicit_copy, explicit_projection, modification, addition };

inline const char* to_string(SetFieldClass c) {
    switch (c) {
    case SetFieldClass::explicit_copy: return "explicit-copy";
    case SetFieldClass::explicit_projection: return "explicit-projection";
    case SetFieldClass::modification: return "modification";
    case SetFieldClass::addition: return "addition";
    }
    return "?";
}

using FieldRef = std::pair<int, std::size_t>; // (input, field)

/// Shape of the inputs a UDF runs on.
struct UdfShape {
    std::vector<std::size_t> arity;                   // per input
    std::vector<std::set<std::size_t>> key_positions; // per input; KAT only

    std::size_t total() const {
        std::size_t t = 0;
        for (auto a : arity) t += a;
        return t;
    }
    std::size_t offset(int k) const {
        std::size_t o = 0;
        for (int i = 0; i < k; ++i) o += arity[i];
        return o;
    }
    bool is_key(int k, std::size_t n) const {
        return static_cast<std::size_t>(k) < key_positions.size() && key_positions[k].count(n);
    }
};

/// Position-level analysis result.
struct UdfAnalysis {
    bool ok = true;
    std::string failure;

    std::set<FieldRef> reads;
    std::set<std::size_t> writes; // output positions (concatenated input space, then additions)
    ImplicitOp implicit_op = ImplicitOp::copy;
    EmitBounds bounds;
    std::size_t output_arity = 0; // max(#I, highest setField position + 1)

    // RAT: input fields every branch condition depends on; nullopt when some
    // condition depends on something other than fields and constants.
    std::optional<std::set<FieldRef>> branch_fields;
    // KAT: per input k, true when the UDF emits exactly one record per record
    // consumed from k and nothing otherwise.
    std::vector<bool> per_record;
    // KAT: input whose records every emitted record is copied from.
    std::optional<int> exclusive_side;
};

inline SetFieldClass classify_setfield(const UdfProgram& p, const DefUseInfo& du, std::size_t at,
                                       const UdfShape& shape) {
    const Instruction& s = p.code.at(at);
    std::size_t total = shape.total();
    if (s.field >= total) return SetFieldClass::addition;
    if (!s.a.is_var()) return s.a.constant.is_absent() ? SetFieldClass::explicit_projection : SetFieldClass::modification;
    const auto& defs = du.defs_reaching(at, s.a.var);
    if (defs.empty()) return SetFieldClass::modification;
    for (auto d : defs) {
        const Instruction& g = p.code[d];
        if (g.op != OpCode::get_field || g.dynamic_index) return SetFieldClass::modification;
        int k = p.var_input[g.rec];
        if (shape.offset(k) + g.field != s.field) return SetFieldClass::modification;
        // in a key group, only key fields are guaranteed equal across records
        if (p.is_kat() && !shape.is_key(k, g.field)) return SetFieldClass::modification;
    }
    return SetFieldClass::explicit_copy;
}

inline std::set<FieldRef> estimate_read_positions(const UdfProgram& p, const DefUseInfo& du) {
    std::set<FieldRef> out;
    for (std::size_t i = 0; i < p.code.size(); ++i) {
        const auto& ins = p.code[i];
        if (ins.op == OpCode::get_field && !du.uses_reached(i, ins.dst).empty())
            out.emplace(p.var_input[ins.rec], ins.field);
    }
    return out;
}

namespace sca_detail {

// Acyclic block paths; upper is infinite when an emitting block is on a cycle.
inline EmitBounds emit_bounds(const ControlFlowGraph& g, std::size_t path_cap = 200000) {
    const auto& p = *g.program;
    std::size_t nb = g.blocks.size();
    std::vector<std::size_t> emits(nb, 0);
    for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t i = g.blocks[b].first; i <= g.blocks[b].last; ++i)
            if (p.code[i].op == OpCode::emit) ++emits[b];
    auto cyc = g.blocks_on_cycle();
    bool unbounded = false;
    for (std::size_t b = 0; b < nb; ++b)
        if (cyc[b] && emits[b]) unbounded = true;

    EmitBounds out{EmitBounds::inf, 0};
    std::size_t paths = 0;
    bool capped = false;
    std::vector<bool> on_path(nb, false);
    std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t b, std::size_t count) {
        if (capped) return;
        count += emits[b];
        if (g.blocks[b].succ.empty()) {
            out.lower = std::min(out.lower, count);
            out.upper = std::max(out.upper, count);
            if (++paths > path_cap) capped = true;
            return;
        }
        on_path[b] = true;
        for (auto s : g.blocks[b].succ)
            if (!on_path[s]) dfs(s, count);
        on_path[b] = false;
    };
    dfs(g.entry, 0);
    if (capped || out.lower == EmitBounds::inf) return EmitBounds{0, EmitBounds::inf};
    if (unbounded) out.upper = EmitBounds::inf;
    return out;
}

struct Preserved {
    bool top = true;        // not constructed on some path yet
    std::vector<bool> keep; // positions guaranteed to hold an input value
    bool operator==(const Preserved&) const = default;
};

inline Preserved meet(const Preserved& a, const Preserved& b) {
    if (a.top) return b;
    if (b.top) return a;
    Preserved r{false, a.keep};
    for (std::size_t i = 0; i < r.keep.size(); ++i) r.keep[i] = a.keep[i] && b.keep[i];
    return r;
}

// USE-DEF closure of a value variable down to getField positions and constants.
inline bool value_origins(const UdfProgram& p, const DefUseInfo& du, std::size_t at, VarId v,
                          std::set<FieldRef>& out, std::set<std::pair<std::size_t, VarId>>& seen) {
    if (!seen.insert({at, v}).second) return true;
    const auto& defs = du.defs_reaching(at, v);
    if (defs.empty()) return false;
    for (auto d : defs) {
        const auto& ins = p.code[d];
        switch (ins.op) {
        case OpCode::get_field:
            if (ins.dynamic_index) return false;
            out.emplace(p.var_input[ins.rec], ins.field);
            break;
        case OpCode::assign_const: break;
        case OpCode::assign_var:
        case OpCode::arith:
            for (const Operand* o : {&ins.a, &ins.b})
                if (o->is_var() && !value_origins(p, du, d, o->var, out, seen)) return false;
            break;
        default: return false;
        }
    }
    return true;
}

struct Segment {
    std::size_t min = EmitBounds::inf, max = 0;
    std::set<std::size_t> emits;
    std::uint32_t undrained = 0; // inputs some path returns without having exhausted
    std::uint32_t partial = 0;   // ... after having taken records from them
    bool ok = true;
};

// Emit counts along paths from `start` until the next `next` or a return.
inline Segment segment_from(const UdfProgram& p, const ControlFlowGraph& g, std::size_t start,
                            std::uint32_t consumed = 0) {
    Segment seg;
    std::size_t steps = 0;
    const std::uint32_t all = (1u << p.arity()) - 1;
    std::vector<int> on_path(p.code.size(), -1); // emit count when first entered on current path
    std::vector<std::uint32_t> mask_at(p.code.size(), 0);
    std::function<void(std::size_t, std::size_t, std::uint32_t)> dfs = [&](std::size_t pc, std::size_t count,
                                                                           std::uint32_t exhausted) {
        if (!seg.ok) return;
        if (++steps > 200000) {
            seg.ok = false;
            return;
        }
        const auto& ins = p.code[pc];
        if (ins.op == OpCode::next || ins.op == OpCode::ret) {
            seg.min = std::min(seg.min, count);
            seg.max = std::max(seg.max, count);
            if (ins.op == OpCode::ret) {
                seg.undrained |= all & ~exhausted;
                seg.partial |= consumed & ~exhausted;
            }
            return;
        }
        if (on_path[pc] >= 0) {
            if (count > static_cast<std::size_t>(on_path[pc])) seg.max = EmitBounds::inf; // emitting cycle
            if (exhausted != mask_at[pc]) seg.ok = false;
            return;
        }
        on_path[pc] = static_cast<int>(count);
        mask_at[pc] = exhausted;
        if (ins.op == OpCode::emit) {
            ++count;
            seg.emits.insert(pc);
        }
        if (ins.op == OpCode::rewind) {
            exhausted &= ~(1u << p.var_input[ins.rec]);
            consumed &= ~(1u << p.var_input[ins.rec]);
        }
        if (ins.op == OpCode::has_next_branch && p.target_index(ins) != pc + 1) {
            // the negated test jumps when the list is empty, the plain one falls through
            std::uint32_t bit = 1u << p.var_input[ins.rec];
            std::size_t empty = ins.negated ? p.target_index(ins) : pc + 1;
            std::size_t more = ins.negated ? pc + 1 : p.target_index(ins);
            dfs(empty, count, exhausted | bit);
            dfs(more, count, exhausted);
        } else {
            for (auto s : g.instr_successors(pc)) dfs(s, count, exhausted);
        }
        on_path[pc] = -1;
    };
    dfs(start, 0, 0);
    if (seg.min == EmitBounds::inf) seg.min = 0; // no terminating path
    if (!seg.ok) seg.undrained = seg.partial = all;
    return seg;
}

} // namespace sca_detail

inline EmitBounds estimate_emit_bounds(const ControlFlowGraph& g) { return sca_detail::emit_bounds(g); }

/// Full position-level analysis. Never throws for well-formed programs; failures are reported in `ok`.
inline UdfAnalysis analyze_udf(const UdfProgram& p, const UdfShape& shape) {
    UdfAnalysis a;
    auto fail = [&](std::string why) {
        a.ok = false;
        a.failure = std::move(why);
        return a;
    };
    if (shape.arity.size() != p.arity())
        return fail("UDF takes " + std::to_string(p.arity()) + " inputs, operator has " +
                    std::to_string(shape.arity.size()));
    if (has_dynamic_index(p)) return fail("field index is not statically computable");
    for (const auto& ins : p.code)
        if (ins.op == OpCode::get_field && ins.field >= shape.arity[p.var_input[ins.rec]])
            return fail("getField position " + std::to_string(ins.field) + " exceeds input arity");

    auto g = build_cfg(p);
    auto du = compute_def_use(g);
    const std::size_t total = shape.total();
    const std::size_t n = p.code.size();

    a.reads = estimate_read_positions(p, du);
    a.bounds = sca_detail::emit_bounds(g);
    a.output_arity = total;
    for (const auto& ins : p.code)
        if (ins.op == OpCode::set_field) a.output_arity = std::max(a.output_arity, ins.field + 1);

    std::vector<bool> reachable(n, false);
    {
        std::vector<std::size_t> stack{0};
        while (!stack.empty()) {
            auto i = stack.back();
            stack.pop_back();
            if (reachable[i]) continue;
            reachable[i] = true;
            for (auto s : g.instr_successors(i)) stack.push_back(s);
        }
    }

    // constructors reaching each emit decide the implicit operation
    bool any_projection_ctor = false;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ins = p.code[i];
        if (ins.op != OpCode::emit || !reachable[i]) continue;
        const auto& ctors = du.defs_reaching(i, ins.rec);
        if (ctors.empty()) return fail("emit at label " + std::to_string(ins.label) + " has no reaching constructor");
        for (auto c : ctors) {
            auto op = p.code[c].op;
            if (op == OpCode::empty_ctor) any_projection_ctor = true;
            else if (op != OpCode::copy_ctor && op != OpCode::concat_ctor)
                return fail("emitted record at label " + std::to_string(ins.label) + " has unknown origin");
        }
    }
    a.implicit_op = any_projection_ctor ? ImplicitOp::projection : ImplicitOp::copy;

    // each emit needs a constructor on every path from the entry, not just on some
    auto bypasses_ctor = [&](std::size_t at, VarId v) {
        std::vector<bool> seen(n, false);
        std::vector<std::size_t> stack{0};
        while (!stack.empty()) {
            auto i = stack.back();
            stack.pop_back();
            if (seen[i]) continue;
            seen[i] = true;
            if (i == at) return true;
            const auto& ins = p.code[i];
            bool ctor = ins.op == OpCode::copy_ctor || ins.op == OpCode::empty_ctor || ins.op == OpCode::concat_ctor;
            if (ctor && ins.dst == v) continue;
            for (auto s : g.instr_successors(i)) stack.push_back(s);
        }
        return false;
    };
    for (std::size_t i = 0; i < n; ++i)
        if (p.code[i].op == OpCode::emit && reachable[i] && bypasses_ctor(i, p.code[i].rec))
            return fail("emit at label " + std::to_string(p.code[i].label) + " may precede its constructor");

    // write set: forward must-analysis of preserved positions per output variable
    std::vector<SetFieldClass> cls(n, SetFieldClass::modification);
    for (std::size_t i = 0; i < n; ++i)
        if (p.code[i].op == OpCode::set_field) {
            cls[i] = classify_setfield(p, du, i, shape);
            if (cls[i] != SetFieldClass::explicit_copy) a.writes.insert(p.code[i].field);
        }
    std::size_t nv = p.var_names.size();
    using State = std::vector<sca_detail::Preserved>;
    std::vector<State> in(n, State(nv)), out(n, State(nv));
    std::vector<std::vector<std::size_t>> preds(n);
    for (std::size_t i = 0; i < n; ++i)
        for (auto s : g.instr_successors(i)) preds[s].push_back(i);
    auto transfer = [&](std::size_t i, State st) {
        const auto& ins = p.code[i];
        auto full_range = [&](std::size_t lo, std::size_t hi) {
            sca_detail::Preserved r{false, std::vector<bool>(total, false)};
            for (std::size_t q = lo; q < hi; ++q) r.keep[q] = true;
            return r;
        };
        switch (ins.op) {
        case OpCode::copy_ctor: {
            int k = p.var_input[ins.rec];
            st[ins.dst] = full_range(shape.offset(k), shape.offset(k) + shape.arity[k]);
            break;
        }
        case OpCode::concat_ctor: st[ins.dst] = full_range(0, total); break;
        case OpCode::empty_ctor: st[ins.dst] = full_range(0, 0); break;
        case OpCode::set_field: {
            auto& pr = st[ins.rec];
            if (!pr.top && ins.field < total) pr.keep[ins.field] = cls[i] == SetFieldClass::explicit_copy;
            break;
        }
        default: break;
        }
        return st;
    };
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            State s(nv);
            for (auto q : preds[i])
                for (std::size_t v = 0; v < nv; ++v) s[v] = sca_detail::meet(s[v], out[q][v]);
            State o = transfer(i, s);
            if (s != in[i] || o != out[i]) {
                in[i] = std::move(s);
                out[i] = std::move(o);
                changed = true;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ins = p.code[i];
        if (ins.op != OpCode::emit || !reachable[i]) continue;
        const auto& pr = in[i][ins.rec];
        if (pr.top) return fail("emit at label " + std::to_string(ins.label) + " may precede its constructor");
        for (std::size_t q = 0; q < total; ++q)
            if (!pr.keep[q]) a.writes.insert(q);
    }

    if (!p.is_kat()) {
        std::set<FieldRef> fields;
        bool known = true;
        for (std::size_t i = 0; i < n && known; ++i) {
            const auto& ins = p.code[i];
            if (ins.op != OpCode::branch) continue;
            std::set<std::pair<std::size_t, VarId>> seen;
            for (const Operand* o : {&ins.a, &ins.b})
                if (o->is_var() && !sca_detail::value_origins(p, du, i, o->var, fields, seen)) known = false;
        }
        if (known) a.branch_fields = std::move(fields);
        return a;
    }

    // KAT: segments between record consumptions
    a.per_record.assign(p.arity(), true);
    auto entry = sca_detail::segment_from(p, g, 1);
    if (!entry.ok || entry.max != 0) a.per_record.assign(p.arity(), false);
    // returning with records left over drops them; having taken only some of
    // them, which ones depends on the order of the group, i.e. on every field
    std::uint32_t partial = 0;
    auto drop_undrained = [&](const sca_detail::Segment& s) {
        partial |= s.partial;
        for (std::size_t j = 0; j < p.arity(); ++j)
            if (s.undrained & (1u << j)) a.per_record[j] = false;
    };
    drop_undrained(entry);
    std::uint32_t taken = 0; // inputs some earlier segment may have taken records from
    for (std::size_t i = 0; i < n; ++i)
        if (p.code[i].op == OpCode::next) taken |= 1u << p.var_input[p.code[i].rec];
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ins = p.code[i];
        if (ins.op != OpCode::next) continue;
        int k = p.var_input[ins.rec];
        auto seg = sca_detail::segment_from(p, g, i + 1, taken);
        if (!seg.ok) {
            a.per_record.assign(p.arity(), false);
            continue;
        }
        drop_undrained(seg);
        for (std::size_t j = 0; j < p.arity(); ++j) {
            bool want_one = static_cast<int>(j) == k;
            if (want_one ? !(seg.min == 1 && seg.max == 1) : seg.max != 0) a.per_record[j] = false;
        }
        // the emitted record must be built from the record just consumed (or from scratch)
        for (auto e : seg.emits)
            for (auto c : du.defs_reaching(e, p.code[e].rec)) {
                const auto& ctor = p.code[c];
                if (ctor.op == OpCode::empty_ctor) continue;
                if (ctor.op != OpCode::copy_ctor || du.defs_reaching(c, ctor.rec) != std::set<std::size_t>{i})
                    a.per_record[k] = false;
            }
    }
    for (std::size_t j = 0; j < p.arity(); ++j)
        if (partial & (1u << j))
            for (std::size_t q = 0; q < shape.arity[j]; ++q) a.reads.insert({static_cast<int>(j), q});
    std::optional<int> side;
    bool exclusive = true, any_emit = false;
    for (std::size_t i = 0; i < n && exclusive; ++i) {
        const auto& ins = p.code[i];
        if (ins.op != OpCode::emit || !reachable[i]) continue;
        any_emit = true;
        for (auto c : du.defs_reaching(i, ins.rec)) {
            const auto& ctor = p.code[c];
            if (ctor.op != OpCode::copy_ctor) {
                exclusive = false;
                break;
            }
            for (auto d : du.defs_reaching(c, ctor.rec)) {
                if (p.code[d].op != OpCode::next) {
                    exclusive = false;
                    break;
                }
                int k = p.var_input[p.code[d].rec];
                if (side && *side != k) exclusive = false;
                side = k;
            }
        }
    }
    if (exclusive && any_emit) a.exclusive_side = side;
    if (!any_emit) a.exclusive_side = std::nullopt;
    return a;
}

/// RAT key-group preservation for fields `key` (positions in the inputs).
inline bool kgp_holds(const UdfAnalysis& a, const std::set<FieldRef>& key) {
    if (!a.ok) return false;
    if (a.bounds.exactly_one() || a.bounds.upper == 0) return true;
    if (!a.bounds.at_most_one() || !a.branch_fields) return false;
    return std::includes(key.begin(), key.end(), a.branch_fields->begin(), a.branch_fields->end());
}

} // namespace dfopt
