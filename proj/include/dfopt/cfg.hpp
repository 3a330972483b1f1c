#pragma once
// Basic blocks, reaching definitions, USE-DEF / DEF-USE chains.

#include <algorithm>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "dfopt/udf_ir.hpp"

namespace dfopt {

struct BasicBlock {
    std::size_t first = 0; // instruction indices, inclusive
    std::size_t last = 0;
    std::vector<std::size_t> succ;
    std::vector<std::size_t> pred;
};

struct ControlFlowGraph {
    const UdfProgram* program = nullptr;
    std::vector<BasicBlock> blocks;
    std::vector<std::size_t> block_of; // instruction index -> block
    std::size_t entry = 0;
    std::vector<std::size_t> exits;

    std::vector<std::size_t> instr_successors(std::size_t i) const {
        const auto& p = *program;
        const auto& ins = p.code[i];
        switch (ins.op) {
        case OpCode::ret: return {};
        case OpCode::jump: return {p.target_index(ins)};
        case OpCode::branch:
        case OpCode::has_next_branch: {
            std::size_t t = p.target_index(ins);
            if (t == i + 1) return {i + 1};
            return {i + 1, t};
        }
        default: return {i + 1};
        }
    }

    /// Blocks that lie on some cycle (including self loops).
    std::vector<bool> blocks_on_cycle() const {
        std::size_t n = blocks.size();
        // reach[a][b]: b reachable from a by >= 1 edge
        std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
        for (std::size_t a = 0; a < n; ++a) {
            std::vector<std::size_t> stack(blocks[a].succ.begin(), blocks[a].succ.end());
            while (!stack.empty()) {
                std::size_t b = stack.back();
                stack.pop_back();
                if (reach[a][b]) continue;
                reach[a][b] = true;
                for (auto s : blocks[b].succ) stack.push_back(s);
            }
        }
        std::vector<bool> out(n);
        for (std::size_t a = 0; a < n; ++a) out[a] = reach[a][a];
        return out;
    }

    bool has_cycle() const {
        auto c = blocks_on_cycle();
        return std::find(c.begin(), c.end(), true) != c.end();
    }
};

inline ControlFlowGraph build_cfg(const UdfProgram& p) {
    ControlFlowGraph g;
    g.program = &p;
    std::size_t n = p.code.size();
    std::vector<bool> leader(n, false);
    leader[0] = true;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ins = p.code[i];
        if (ins.has_target()) leader[p.target_index(ins)] = true;
        if (ins.is_terminator() && i + 1 < n) leader[i + 1] = true;
    }
    g.block_of.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (leader[i]) g.blocks.push_back(BasicBlock{i, i, {}, {}});
        g.blocks.back().last = i;
        g.block_of[i] = g.blocks.size() - 1;
    }
    for (std::size_t b = 0; b < g.blocks.size(); ++b) {
        for (auto s : g.instr_successors(g.blocks[b].last)) {
            std::size_t sb = g.block_of[s];
            auto& succ = g.blocks[b].succ;
            if (std::find(succ.begin(), succ.end(), sb) == succ.end()) {
                succ.push_back(sb);
                g.blocks[sb].pred.push_back(b);
            }
        }
        if (g.blocks[b].succ.empty()) g.exits.push_back(b);
    }
    return g;
}

/// Variables read by an instruction.
inline std::vector<VarId> uses_of(const Instruction& ins) {
    std::vector<VarId> u;
    auto add = [&](VarId v) {
        if (v != no_var && std::find(u.begin(), u.end(), v) == u.end()) u.push_back(v);
    };
    switch (ins.op) {
    case OpCode::header:
    case OpCode::ret:
    case OpCode::jump:
    case OpCode::empty_ctor:
    case OpCode::assign_const: break;
    case OpCode::set_field:
        add(ins.rec);
        add(ins.a.var);
        break;
    case OpCode::assign_var:
        add(ins.a.var);
        break;
    case OpCode::arith:
    case OpCode::branch:
        add(ins.a.var);
        add(ins.b.var);
        break;
    default:
        add(ins.rec);
        add(ins.rec2);
        break;
    }
    return u;
}

/// Variables defined by an instruction; the header defines the parameters.
inline std::vector<VarId> defs_of(const UdfProgram& p, const Instruction& ins) {
    if (ins.op == OpCode::header) {
        std::vector<VarId> d;
        for (const auto& in : p.inputs) d.push_back(in.var);
        return d;
    }
    if (ins.dst != no_var) return {ins.dst};
    return {};
}

/// Chains keyed by (instruction index, variable). Values are instruction indices.
struct DefUseInfo {
    const UdfProgram* program = nullptr;
    std::map<std::pair<std::size_t, VarId>, std::set<std::size_t>> use_def;
    std::map<std::pair<std::size_t, VarId>, std::set<std::size_t>> def_use;

    const std::set<std::size_t>& defs_reaching(std::size_t use, VarId v) const {
        auto it = use_def.find({use, v});
        return it == use_def.end() ? empty_ : it->second;
    }
    const std::set<std::size_t>& uses_reached(std::size_t def, VarId v) const {
        auto it = def_use.find({def, v});
        return it == def_use.end() ? empty_ : it->second;
    }

    // Label-addressed views, e.g. def_use_labels(21, "$a") == {22} for f2.
    std::set<std::uint32_t> def_use_labels(std::uint32_t label, const std::string& var) const {
        return labels(uses_reached(*program->index_of(label), find_var(var)));
    }
    std::set<std::uint32_t> use_def_labels(std::uint32_t label, const std::string& var) const {
        return labels(defs_reaching(*program->index_of(label), find_var(var)));
    }

private:
    inline static const std::set<std::size_t> empty_{};

    VarId find_var(const std::string& name) const {
        for (std::size_t i = 0; i < program->var_names.size(); ++i)
            if (program->var_names[i] == name) return static_cast<VarId>(i);
        return no_var;
    }
    std::set<std::uint32_t> labels(const std::set<std::size_t>& idx) const {
        std::set<std::uint32_t> out;
        for (auto i : idx) out.insert(program->code[i].label);
        return out;
    }
};

inline DefUseInfo compute_def_use(const ControlFlowGraph& g) {
    const auto& p = *g.program;
    std::size_t n = p.code.size();
    // reaching definitions at instruction granularity; a definition is an instruction index
    std::vector<std::vector<VarId>> defs(n);
    for (std::size_t i = 0; i < n; ++i) defs[i] = defs_of(p, p.code[i]);
    std::vector<std::vector<std::size_t>> preds(n);
    for (std::size_t i = 0; i < n; ++i)
        for (auto s : g.instr_successors(i)) preds[s].push_back(i);

    using DefSet = std::vector<bool>;
    std::vector<DefSet> in(n, DefSet(n, false)), out(n, DefSet(n, false));
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            DefSet new_in(n, false);
            for (auto q : preds[i])
                for (std::size_t d = 0; d < n; ++d)
                    if (out[q][d]) new_in[d] = true;
            DefSet new_out = new_in;
            if (!defs[i].empty()) {
                for (std::size_t d = 0; d < n; ++d) {
                    if (!new_out[d]) continue;
                    for (auto v : defs[d])
                        if (std::find(defs[i].begin(), defs[i].end(), v) != defs[i].end() && defs[d].size() == 1)
                            new_out[d] = false;
                }
                new_out[i] = true;
            }
            if (new_in != in[i] || new_out != out[i]) {
                in[i] = std::move(new_in);
                out[i] = std::move(new_out);
                changed = true;
            }
        }
    }
    DefUseInfo info;
    info.program = &p;
    for (std::size_t i = 0; i < n; ++i) {
        for (auto v : uses_of(p.code[i])) {
            auto& ud = info.use_def[{i, v}];
            for (std::size_t d = 0; d < n; ++d)
                if (in[i][d] && std::find(defs[d].begin(), defs[d].end(), v) != defs[d].end()) {
                    ud.insert(d);
                    info.def_use[{d, v}].insert(i);
                }
        }
    }
    return info;
}

} // namespace dfopt
