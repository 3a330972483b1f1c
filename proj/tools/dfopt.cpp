// dfopt: analyze, reorder and run data flows of user-defined functions.
//
// Exit codes: 0 success, 1 other failure, 2 invalid input, 3 verification
// failed, 4 budget exceeded.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dfopt/dataflow.hpp"
#include "dfopt/engine.hpp"
#include "dfopt/enumerate.hpp"
#include "dfopt/reorder.hpp"

using namespace dfopt;
using nlohmann::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_other = 1;
constexpr int exit_invalid = 2;
constexpr int exit_verify = 3;
constexpr int exit_budget = 4;

struct Session {
    std::string flow_path;
    std::string mode = "sca";
    std::string data_dir;
    std::uint64_t seed = 1;
    std::size_t limit = 1'000'000;
    std::size_t step_budget = default_step_budget;
    bool no_memo = false;
    bool trace = false;
    bool verify = false;
    bool as_json = false;
    std::size_t top = 0;
    std::size_t every = 0;
    std::size_t random_sets = 0;
    std::size_t random_records = 16;
    std::string out_path;
    std::string op_a, op_b;
};

DataFlow load(const Session& s, AnalysisMode mode) { return analyze_flow(load_flow(s.flow_path), mode); }

std::string set_str(const DataFlow& f, const AttrSet& s) { return f.global().format(s); }

std::string kgp_str(const DataFlow& f, const Operator& o, const OperatorProperties& p) {
    if (is_kat(o.kind)) {
        std::string s = "per-record=";
        for (std::size_t i = 0; i < o.arity(); ++i) s += std::string(i ? "," : "") + (p.is_per_record(static_cast<int>(i)) ? "yes" : "no");
        if (p.exclusive_side) s += " emits-only-input=" + std::to_string(*p.exclusive_side);
        return s;
    }
    if (p.kgp_bases.empty()) return "kgp=none";
    std::string s = "kgp=";
    for (std::size_t i = 0; i < p.kgp_bases.size(); ++i)
        s += (i ? "|" : "") + (p.kgp_bases[i].empty() ? std::string("any") : set_str(f, p.kgp_bases[i]));
    return s;
}

json props_json(const DataFlow& f, const OperatorProperties& p) {
    json j;
    j["read"] = set_str(f, p.udf_read);
    j["read_with_keys"] = set_str(f, p.read);
    j["write"] = set_str(f, p.write);
    j["emit"] = p.emit.to_string();
    j["implicit"] = p.implicit_op == ImplicitOp::copy ? "copy" : "projection";
    j["pinned"] = p.pinned;
    if (p.pinned) j["pin_reason"] = p.pin_reason;
    return j;
}

int cmd_analyze(const Session& s) {
    auto mode = parse_mode(s.mode);
    auto f = load(s, mode);
    json out = json::array();
    std::ostringstream txt;
    txt << "flow " << f.context().name << " (mode " << s.mode << ")\n";
    for (const auto& o : f.context().operators) {
        json j{{"id", o.id}, {"kind", to_string(o.kind)}};
        auto line = [&](const char* label, const OperatorProperties& p) {
            txt << "  " << std::left << std::setw(8) << label << "R=" << set_str(f, p.udf_read) << "  W=" << set_str(f, p.write)
                << "  emit=" << p.emit.to_string() << "  " << (p.implicit_op == ImplicitOp::copy ? "copy" : "projection")
                << "  " << kgp_str(f, o, p);
            if (p.pinned) txt << "  pinned: " << p.pin_reason;
            txt << "\n";
        };
        txt << o.id << " [" << to_string(o.kind) << "]\n";
        if (mode == AnalysisMode::both) {
            if (o.sca_props) {
                line("sca", *o.sca_props);
                j["sca"] = props_json(f, *o.sca_props);
            } else {
                txt << "  sca     no UDF code\n";
            }
            if (o.manual_props) {
                line("manual", *o.manual_props);
                j["manual"] = props_json(f, *o.manual_props);
            }
            if (o.sca_props && o.manual_props) {
                bool r = o.manual_props->udf_read.subset_of(o.sca_props->udf_read);
                bool w = o.manual_props->write.subset_of(o.sca_props->write);
                txt << "  manual within sca: read " << (r ? "yes" : "NO") << ", write " << (w ? "yes" : "NO") << "\n";
                j["manual_within_sca"] = r && w;
            }
        } else {
            line("", o.props);
            j["properties"] = props_json(f, o.props);
        }
        out.push_back(j);
    }
    if (s.as_json) std::cout << out.dump(2) << "\n";
    else std::cout << txt.str();
    return exit_ok;
}

Inputs inputs_for(const Session& s, const DataFlow& f) {
    auto in = load_inputs(f.context(), s.data_dir);
    validate_inputs(f.context(), in);
    return in;
}

std::vector<DataFlow> alternatives(const Session& s, const DataFlow& f, EnumStats* st = nullptr) {
    EnumOptions opt;
    opt.memo = !s.no_memo;
    opt.max_flows = s.limit;
    return enum_alternatives(f, opt, st);
}

int verify_on(const Session& s, const DataFlow& f, const std::vector<DataFlow>& alts, bool print_each) {
    ExecOptions eo{s.step_budget};
    bool pass = true;
    auto report = [&](const std::string& label, const Inputs& in) {
        auto rep = verify_equivalence(f, alts, in, eo);
        std::size_t bad = 0;
        for (const auto& e : rep.entries) {
            if (!e.equal) ++bad;
            if (print_each || !e.equal)
                std::cout << (e.equal ? "PASS " : "FAIL ") << e.canonical << (e.error.empty() ? "" : "  (" + e.error + ")")
                          << "\n";
        }
        std::cout << label << ": " << (alts.size() - bad) << "/" << alts.size() << " alternatives match the original ("
                  << rep.reference.records.size() << " sink records)\n";
        pass = pass && rep.pass;
    };
    if (s.random_sets == 0 || !s.data_dir.empty()) report("sample data", inputs_for(s, f));
    for (std::size_t i = 0; i < s.random_sets; ++i) {
        RandomInputOptions ro;
        ro.records = s.random_records;
        ro.seed = s.seed + i;
        report("random data set " + std::to_string(i + 1), random_inputs(f.context(), ro));
    }
    return pass ? exit_ok : exit_verify;
}

int cmd_enumerate(const Session& s) {
    auto mode = parse_mode(s.mode);
    std::vector<AnalysisMode> modes;
    if (mode == AnalysisMode::both) modes = {AnalysisMode::sca, AnalysisMode::manual};
    else modes = {mode};
    json out = json::object();
    int rc = exit_ok;
    for (auto m : modes) {
        auto f = load(s, m);
        const char* label = m == AnalysisMode::sca ? "sca" : "manual";
        EnumStats st;
        std::vector<DataFlow> alts;
        try {
            alts = alternatives(s, f, &st);
        } catch (const BudgetExceeded& e) {
            std::cout << "mode " << label << ": PARTIAL, " << e.what() << " (" << e.partial_count()
                      << " flows produced before stopping)\n";
            out[label] = {{"partial", true}, {"produced", e.partial_count()}};
            rc = exit_budget;
            continue;
        }
        if (s.as_json) {
            json list = json::array();
            for (const auto& a : alts) list.push_back(a.canonical());
            out[label] = {{"count", alts.size()}, {"seconds", st.seconds}, {"alternatives", list}};
        } else {
            std::cout << "mode " << label << ": " << alts.size() << " alternatives (" << std::fixed << std::setprecision(3)
                      << st.seconds * 1000 << " ms)\n";
            for (const auto& a : alts) {
                std::cout << "  " << a.pretty() << "\n";
                if (s.trace) {
                    auto steps = derive(f, a);
                    if (!steps) std::cout << "      (no derivation found)\n";
                    else
                        for (const auto& step : *steps)
                            std::cout << "      " << describe(f.context(), step.move) << " [" << step.move.verdict.rule
                                      << "]\n";
                }
            }
        }
        if (s.verify) {
            int v = verify_on(s, f, alts, false);
            if (v != exit_ok) rc = v;
        }
    }
    if (s.as_json) std::cout << out.dump(2) << "\n";
    return rc;
}

int cmd_execute(const Session& s) {
    auto f = load(s, parse_mode(s.mode));
    auto in = inputs_for(s, f);
    auto rep = execute(f, in, ExecOptions{s.step_budget});
    std::string path = s.out_path.empty() ? f.context().sink_path : s.out_path;
    std::vector<std::string> header;
    for (auto a : rep.sink.layout) header.push_back(f.global().name(a));
    if (path == "-") {
        write_csv(std::cout, header, rep.sink.records);
    } else {
        std::ofstream os(path);
        if (!os) throw ValidationError("cannot write '" + path + "'");
        write_csv(os, header, rep.sink.records);
        std::cout << "wrote " << rep.sink.records.size() << " records to " << path << "\n";
    }
    for (const auto& o : rep.operators)
        std::cerr << "  " << o.id << ": " << o.input_records << " in, " << o.invocations << " calls, "
                  << o.output_records << " out\n";
    return exit_ok;
}

int cmd_verify(const Session& s) {
    auto f = load(s, parse_mode(s.mode == "both" ? "sca" : s.mode));
    auto alts = alternatives(s, f);
    return verify_on(s, f, alts, true);
}

int cmd_rank(const Session& s) {
    auto f = load(s, parse_mode(s.mode == "both" ? "sca" : s.mode));
    auto alts = alternatives(s, f);
    auto ranked = rank(alts, inputs_for(s, f), ExecOptions{s.step_budget});
    std::vector<const RankedFlow*> shown;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (s.every > 1 && i % s.every != 0 && i + 1 != ranked.size()) continue;
        shown.push_back(&ranked[i]);
        if (s.top && shown.size() >= s.top) break;
    }
    if (s.as_json) {
        json out = json::array();
        for (auto* r : shown)
            out.push_back({{"rank", r->rank}, {"cost", r->cost.total}, {"normalized", r->normalized},
                           {"plan", r->flow.canonical()}});
        std::cout << out.dump(2) << "\n";
        return exit_ok;
    }
    std::cout << std::left << std::setw(6) << "rank" << std::setw(12) << "cost" << std::setw(12) << "normalized"
              << "plan\n";
    for (auto* r : shown) {
        std::ostringstream c, n;
        c << r->cost.total;
        n << std::fixed << std::setprecision(3) << r->normalized;
        std::cout << std::left << std::setw(6) << r->rank << std::setw(12) << c.str() << std::setw(12) << n.str()
                  << r->flow.pretty() << "\n";
    }
    return exit_ok;
}

int cmd_why(const Session& s) {
    auto f = load(s, parse_mode(s.mode == "both" ? "sca" : s.mode));
    auto v = reorderable(f, s.op_a, s.op_b);
    if (s.as_json) {
        std::cout << json{{"allowed", v.allowed}, {"rule", v.rule}, {"failed", v.failed}}.dump(2) << "\n";
        return exit_ok;
    }
    std::cout << s.op_a << " / " << s.op_b << ": " << (v.allowed ? "reorderable" : "not reorderable") << " (rule "
              << v.rule << ")\n";
    for (const auto& w : v.failed) std::cout << "  - " << w << "\n";
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reorders data flows of user-defined functions by analyzing the functions' code"};
    app.require_subcommand(1);
    Session s;

    auto common = [&](CLI::App* c) {
        c->add_option("flow", s.flow_path, "flow document (JSON)")->required()->check(CLI::ExistingFile);
        c->add_option("--mode", s.mode, "property source: sca, manual or both")
            ->check(CLI::IsMember({"sca", "manual", "both"}));
        c->add_flag("--json", s.as_json, "machine-readable output");
    };
    auto data = [&](CLI::App* c) {
        c->add_option("--data", s.data_dir, "directory holding the source CSV files (default: paths in the flow)");
        c->add_option("--step-budget", s.step_budget, "instruction budget per UDF invocation")
            ->check(CLI::PositiveNumber);
    };
    auto enumeration = [&](CLI::App* c) {
        c->add_option("--limit", s.limit, "stop after producing this many flows")->check(CLI::PositiveNumber);
        c->add_flag("--no-memo", s.no_memo, "disable the memo table");
    };
    auto randomized = [&](CLI::App* c) {
        c->add_option("--seed", s.seed, "seed for generated data");
        c->add_option("--random", s.random_sets, "also verify on this many generated data sets");
        c->add_option("--records", s.random_records, "records per source in generated data sets");
    };

    auto* analyze = app.add_subcommand("analyze", "print read/write sets and cardinality properties");
    common(analyze);

    auto* enumerate = app.add_subcommand("enumerate", "list all valid reorderings");
    common(enumerate);
    enumeration(enumerate);
    data(enumerate);
    randomized(enumerate);
    enumerate->add_flag("--trace", s.trace, "show the moves deriving each alternative");
    enumerate->add_flag("--verify", s.verify, "execute all alternatives and compare results");

    auto* exec = app.add_subcommand("execute", "run the flow and write the sink CSV");
    common(exec);
    data(exec);
    exec->add_option("--out", s.out_path, "output file ('-' for stdout)");

    auto* verify = app.add_subcommand("verify", "check that all alternatives produce the original result");
    common(verify);
    enumeration(verify);
    data(verify);
    randomized(verify);

    auto* rank_cmd = app.add_subcommand("rank", "rank alternatives by processed record count");
    common(rank_cmd);
    enumeration(rank_cmd);
    data(rank_cmd);
    rank_cmd->add_option("--top", s.top, "show only the best N plans");
    rank_cmd->add_option("--every", s.every, "show every K-th rank (plus the last)");

    auto* why = app.add_subcommand("why", "explain whether two adjacent operators can be exchanged");
    common(why);
    why->add_option("a", s.op_a, "operator id")->required();
    why->add_option("b", s.op_b, "operator id")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_invalid;
    }

    try {
        if (*analyze) return cmd_analyze(s);
        if (*enumerate) return cmd_enumerate(s);
        if (*exec) return cmd_execute(s);
        if (*verify) return cmd_verify(s);
        if (*rank_cmd) return cmd_rank(s);
        if (*why) return cmd_why(s);
    } catch (const BudgetExceeded& e) {
        std::cerr << "budget exceeded: " << e.what() << " (" << e.partial_count() << " flows produced)\n";
        return exit_budget;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return exit_invalid;
    } catch (const ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return exit_invalid;
    } catch (const LayoutMismatch& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return exit_invalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_other;
    }
    return exit_other;
}
