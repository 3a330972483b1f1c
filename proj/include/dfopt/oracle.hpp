#pragma once
// Exhaustive read/write-set and key-group-preservation oracles over a finite
// value domain. Used to validate the static estimates.
//
// Read set: field q is read if changing only q can change the output bag, where
// an output value at q that merely passes the input value through is compared
// as a placeholder (otherwise copying alone would count as reading).
// Write set: output position q is written if some output differs from its input
// at q, or q lies beyond the inputs (a created attribute).
// Key-at-a-time UDFs are probed with key groups of one or two records.

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dfopt/error.hpp"
#include "dfopt/interpreter.hpp"
#include "dfopt/sca.hpp"

namespace dfopt {

class DomainTooLarge : public Error {
public:
    using Error::Error;
};

struct OracleDomain {
    std::vector<Value> values;
    std::size_t cap = 2'000'000; // maximum number of instances

    static OracleDomain ints(std::int64_t lo, std::int64_t hi) {
        OracleDomain d;
        for (auto v = lo; v <= hi; ++v) d.values.emplace_back(v);
        return d;
    }
};

namespace oracle_detail {

using Outcome = std::optional<std::vector<Record>>; // nullopt: invocation failed

inline std::vector<Record> canonical(std::vector<Record> rs) {
    std::sort(rs.begin(), rs.end());
    return rs;
}

// Whether changing an input field from `from` to `to` can explain the difference
// between two outcomes: output records pair up one-to-one, equal everywhere
// except at q, where they either agree or carry `from` and `to` respectively.
inline bool same_up_to_passthrough(const Outcome& a, const Outcome& b, std::size_t q, const Value& from,
                                   const Value& to) {
    if (!a || !b) return !a && !b;
    if (a->size() != b->size()) return false;
    auto related = [&](const Record& r, const Record& s) {
        if (r.arity() != s.arity()) return false;
        for (std::size_t i = 0; i < r.arity(); ++i)
            if (r[i] != s[i] && !(i == q && r[i] == from && s[i] == to)) return false;
        return true;
    };
    std::vector<bool> used(b->size(), false);
    std::function<bool(std::size_t)> match = [&](std::size_t i) {
        if (i == a->size()) return true;
        for (std::size_t j = 0; j < b->size(); ++j) {
            if (used[j] || !related((*a)[i], (*b)[j])) continue;
            used[j] = true;
            if (match(i + 1)) return true;
            used[j] = false;
        }
        return false;
    };
    return match(0);
}

inline std::size_t checked_count(std::size_t base, std::size_t exp, std::size_t cap) {
    std::size_t n = 1;
    for (std::size_t i = 0; i < exp; ++i) {
        if (base != 0 && n > cap / base) throw DomainTooLarge("oracle domain exceeds cap of " + std::to_string(cap));
        n *= base;
    }
    if (n > cap) throw DomainTooLarge("oracle domain exceeds cap of " + std::to_string(cap));
    return n;
}

inline Record decode(std::size_t idx, std::size_t arity, const std::vector<Value>& dom) {
    Record r;
    r.values.resize(arity);
    for (std::size_t i = arity; i-- > 0;) {
        r.values[i] = dom[idx % dom.size()];
        idx /= dom.size();
    }
    return r;
}

inline std::vector<std::vector<Record>> split(const Record& whole, const UdfShape& shape) {
    std::vector<std::vector<Record>> in;
    std::size_t off = 0;
    for (auto a : shape.arity) {
        Record r;
        r.values.assign(whole.values.begin() + off, whole.values.begin() + off + a);
        in.push_back({std::move(r)});
        off += a;
    }
    return in;
}

inline Outcome run(const UdfProgram& p, const std::vector<std::vector<Record>>& in, const UdfShape& shape) {
    InvocationOptions opt;
    opt.input_arity = shape.arity;
    opt.step_budget = 100'000;
    try {
        return canonical(interpret(p, in, opt));
    } catch (const InvocationError&) {
        return std::nullopt;
    }
}

// All concatenated RAT instances and their outcomes.
struct RatTable {
    std::size_t total = 0;
    std::vector<Record> inputs;
    std::vector<Outcome> outputs;
};

inline RatTable rat_table(const UdfProgram& p, const UdfShape& shape, const OracleDomain& dom) {
    RatTable t;
    t.total = shape.total();
    std::size_t n = checked_count(dom.values.size(), t.total, dom.cap);
    t.inputs.reserve(n);
    t.outputs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.inputs.push_back(decode(i, t.total, dom.values));
        t.outputs.push_back(run(p, split(t.inputs.back(), shape), shape));
    }
    return t;
}

// Key groups of one or two records (sorted, as the engine presents them).
inline std::vector<std::vector<Record>> kat_groups(const UdfShape& shape, const OracleDomain& dom) {
    std::size_t a = shape.arity.at(0);
    std::size_t n = checked_count(dom.values.size(), a, dom.cap);
    checked_count(n, 2, dom.cap);
    std::vector<Record> all;
    for (std::size_t i = 0; i < n; ++i) all.push_back(decode(i, a, dom.values));
    const auto& key = shape.key_positions.empty() ? std::set<std::size_t>{} : shape.key_positions[0];
    std::vector<std::vector<Record>> groups;
    for (std::size_t i = 0; i < n; ++i) {
        groups.push_back({all[i]});
        for (std::size_t j = i; j < n; ++j) {
            bool same = std::all_of(key.begin(), key.end(), [&](std::size_t k) { return all[i][k] == all[j][k]; });
            if (same) groups.push_back({all[i], all[j]});
        }
    }
    return groups;
}

inline void require_supported(const UdfProgram& p) {
    if (p.is_kat() && p.arity() != 1) throw Error("oracles support key-at-a-time UDFs with one input only");
}

} // namespace oracle_detail

/// Exact read set over the domain, as input fields.
inline std::set<FieldRef> oracle_read_set(const UdfProgram& p, const UdfShape& shape, const OracleDomain& dom) {
    using namespace oracle_detail;
    require_supported(p);
    std::set<FieldRef> out;
    auto field_of = [&](std::size_t q) {
        int k = 0;
        while (q >= shape.arity[k]) q -= shape.arity[k++];
        return FieldRef{k, q};
    };
    if (!p.is_kat()) {
        auto t = rat_table(p, shape, dom);
        std::size_t D = dom.values.size();
        for (std::size_t q = 0; q < t.total; ++q) {
            std::size_t stride = 1;
            for (std::size_t i = q + 1; i < t.total; ++i) stride *= D;
            bool found = false;
            for (std::size_t i = 0; i < t.inputs.size() && !found; ++i) {
                std::size_t digit = (i / stride) % D;
                for (std::size_t v = digit + 1; v < D && !found; ++v) {
                    std::size_t j = i + (v - digit) * stride;
                    if (!same_up_to_passthrough(t.outputs[i], t.outputs[j], q, t.inputs[i][q], t.inputs[j][q]))
                        found = true;
                }
            }
            if (found) out.insert(field_of(q));
        }
        return out;
    }
    std::size_t a = shape.arity[0];
    const auto& key = shape.key_positions.empty() ? std::set<std::size_t>{} : shape.key_positions[0];
    auto groups = kat_groups(shape, dom);
    for (std::size_t q = 0; q < a; ++q) {
        bool found = false;
        for (const auto& g : groups) {
            if (found) break;
            auto base = run(p, {g}, shape);
            for (const auto& alt : dom.values) {
                if (found) break;
                // (variant, value replaced) pairs
                std::vector<std::pair<std::vector<Record>, Value>> variants;
                if (key.count(q)) {
                    auto h = g;
                    for (auto& r : h) r.values[q] = alt;
                    variants.emplace_back(std::move(h), g[0][q]);
                } else {
                    for (std::size_t j = 0; j < g.size(); ++j) {
                        auto h = g;
                        h[j].values[q] = alt;
                        std::sort(h.begin(), h.end());
                        variants.emplace_back(std::move(h), g[j][q]);
                    }
                }
                for (const auto& [h, from] : variants)
                    if (!same_up_to_passthrough(base, run(p, {h}, shape), q, from, alt)) found = true;
            }
        }
        if (found) out.insert({0, q});
    }
    return out;
}

/// Exact write set over the domain, as output positions (created positions included).
inline std::set<std::size_t> oracle_write_set(const UdfProgram& p, const UdfShape& shape, const OracleDomain& dom) {
    using namespace oracle_detail;
    require_supported(p);
    std::set<std::size_t> out;
    auto note = [&](const std::vector<Record>& outputs, const std::vector<std::vector<Value>>& allowed) {
        for (const auto& o : outputs) {
            for (std::size_t q = 0; q < allowed.size(); ++q) {
                const Value& v = q < o.arity() ? o[q] : Value::absent();
                if (std::find(allowed[q].begin(), allowed[q].end(), v) == allowed[q].end()) out.insert(q);
            }
            for (std::size_t q = allowed.size(); q < o.arity(); ++q) out.insert(q);
        }
    };
    if (!p.is_kat()) {
        auto t = rat_table(p, shape, dom);
        for (std::size_t i = 0; i < t.inputs.size(); ++i) {
            if (!t.outputs[i]) continue;
            std::vector<std::vector<Value>> allowed;
            for (const auto& v : t.inputs[i].values) allowed.push_back({v});
            note(*t.outputs[i], allowed);
        }
        return out;
    }
    for (const auto& g : kat_groups(shape, dom)) {
        auto o = run(p, {g}, shape);
        if (!o) continue;
        std::vector<std::vector<Value>> allowed(shape.arity[0]);
        for (const auto& r : g)
            for (std::size_t q = 0; q < r.arity(); ++q) allowed[q].push_back(r[q]);
        note(*o, allowed);
    }
    return out;
}

/// Records agreeing on the key fields receive the same emit cardinality (RAT).
inline bool oracle_kgp(const UdfProgram& p, const UdfShape& shape, const std::set<FieldRef>& key,
                       const OracleDomain& dom) {
    using namespace oracle_detail;
    if (p.is_kat()) throw Error("KGP oracle applies to record-at-a-time UDFs");
    auto t = rat_table(p, shape, dom);
    std::vector<std::size_t> qs;
    for (auto [k, n] : key) qs.push_back(shape.offset(k) + n);
    std::map<std::vector<Value>, long> seen;
    for (std::size_t i = 0; i < t.inputs.size(); ++i) {
        std::vector<Value> proj;
        for (auto q : qs) proj.push_back(t.inputs[i][q]);
        long card = t.outputs[i] ? static_cast<long>(t.outputs[i]->size()) : -1;
        auto [it, inserted] = seen.emplace(std::move(proj), card);
        if (!inserted && it->second != card) return false;
    }
    return true;
}

/// Observed emit counts of every instance lie within `b`.
inline bool oracle_bounds_bracket(const UdfProgram& p, const UdfShape& shape, const EmitBounds& b,
                                  const OracleDomain& dom) {
    using namespace oracle_detail;
    if (p.is_kat()) {
        for (const auto& g : kat_groups(shape, dom)) {
            auto o = run(p, {g}, shape);
            if (o && !b.brackets(o->size())) return false;
        }
        return true;
    }
    auto t = rat_table(p, shape, dom);
    for (const auto& o : t.outputs)
        if (o && !b.brackets(o->size())) return false;
    return true;
}

} // namespace dfopt
