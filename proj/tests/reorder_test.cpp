#include <gtest/gtest.h>

#include "dfopt/reorder.hpp"
#include "support/builder.hpp"
#include "support/paths.hpp"

using namespace dfopt;
using namespace dfopt::test;

namespace {

DataFlow sample(const char* name, AnalysisMode m = AnalysisMode::sca) { return analyze_flow(load_flow(flow_path(name)), m); }

bool mentions(const ReorderVerdict& v, const std::string& text) {
    for (const auto& f : v.failed)
        if (f.find(text) != std::string::npos) return true;
    return false;
}

// S(a,b) joined with T(c,d) on a = c
SpecBuilder joined(bool unique_c = false) {
    SpecBuilder b;
    b.source("S", {"a", "b"}).source("T", {"c", "d"});
    if (unique_c) b.unique({"c"});
    b.match("J", "S", "T", {"a"}, {"c"});
    return b;
}

} // namespace

TEST(Unary, MapMapWithoutConflict) {
    auto f = sample("three_maps");
    auto v = reorderable(f, "Map1", "Map2");
    EXPECT_TRUE(v.allowed);
    EXPECT_EQ(v.rule, "map-map");
    EXPECT_TRUE(reorderable(f, "Map2", "Map1").allowed);
}

TEST(Unary, MapMapWithConflict) {
    auto f = sample("three_maps");
    auto v = reorderable(f, "Map2", "Map3");
    EXPECT_FALSE(v.allowed);
    EXPECT_EQ(v.rule, "map-map");
    EXPECT_TRUE(mentions(v, "read/write conflict"));
}

TEST(Unary, NotAdjacent) {
    auto f = sample("three_maps");
    auto v = reorderable(f, "Map1", "Map3");
    EXPECT_FALSE(v.allowed);
    EXPECT_EQ(v.rule, "not-adjacent");
    EXPECT_THROW(swap(f, "Map1", "Map3"), TransformError);
}

TEST(Unary, MapReduceNeedsKeyGroupPreservation) {
    auto f = sample("odd_filter_sum");
    auto v = reorderable(f, "Map_f", "Reduce_g");
    EXPECT_FALSE(v.allowed);
    EXPECT_EQ(v.rule, "map-reduce");
    EXPECT_TRUE(mentions(v, "key group preservation"));
    EXPECT_EQ(v.failed.size(), 1u);
}

TEST(Unary, MapReduceOnGroupingKey) {
    auto f = SpecBuilder()
                 .source("S", {"a", "b"})
                 .map("F", "S", udfs::positive(0))
                 .reduce("R", "F", {"a"}, udfs::count(0, 2), {"n"})
                 .analyzed();
    auto v = reorderable(f, "F", "R");
    EXPECT_TRUE(v.allowed) << (v.failed.empty() ? "" : v.failed[0]);
    EXPECT_EQ(v.rule, "map-reduce");
    auto g = swap(f, "F", "R");
    EXPECT_EQ(g.canonical(), "F(R(S))");
}

TEST(Unary, ReduceReduceNeedsPerRecordOnBoth) {
    auto per_record = SpecBuilder()
                          .source("S", {"a", "b"})
                          .reduce("R1", "S", {"a"}, udfs::forward)
                          .reduce("R2", "R1", {"b"}, udfs::forward)
                          .analyzed();
    auto v = reorderable(per_record, "R1", "R2");
    EXPECT_TRUE(v.allowed);
    EXPECT_EQ(v.rule, "reduce-reduce");

    auto condensing = SpecBuilder()
                          .source("S", {"a", "b"})
                          .reduce("R1", "S", {"a"}, udfs::forward)
                          .reduce("R2", "R1", {"a"}, udfs::count(0, 2), {"n"})
                          .analyzed();
    auto w = reorderable(condensing, "R1", "R2");
    EXPECT_FALSE(w.allowed);
    EXPECT_TRUE(mentions(w, "R2 does not emit exactly one record"));
}

TEST(Unary, ForceSwapIgnoresConditions) {
    auto f = sample("three_maps");
    EXPECT_THROW(swap(f, "Map2", "Map3"), TransformError);
    auto g = force_swap(f, "Map2", "Map3");
    EXPECT_EQ(g.canonical(), "Map2(Map3(Map1(I)))");
}

TEST(Push, MapIntoTheSideItReads) {
    auto f = joined().map("F", "J", udfs::positive(1)).analyzed();
    auto moves = candidate_moves(f.context(), *f.root());
    ASSERT_EQ(moves.size(), 2u);
    EXPECT_EQ(moves[0].kind, MoveKind::push);
    EXPECT_TRUE(moves[0].verdict.allowed);
    EXPECT_EQ(moves[0].verdict.rule, "map-join");
    EXPECT_FALSE(moves[1].verdict.allowed);
    EXPECT_TRUE(mentions(moves[1].verdict, "other input"));
    EXPECT_EQ(swap(f, "F", "J").canonical(), "J(F(S),T)");
    EXPECT_EQ(describe(f.context(), moves[0]), "push F into input 0 of J");
}

TEST(Push, MapOnTheRightSide) {
    auto f = joined().map("F", "J", udfs::positive(3)).analyzed();
    EXPECT_EQ(swap(f, "F", "J").canonical(), "J(S,F(T))");
}

TEST(Push, PullIsTheInverseOfPush) {
    auto f = joined().map("F", "J", udfs::positive(1)).analyzed();
    auto pushed = swap(f, "F", "J");
    auto v = reorderable(pushed, "J", "F");
    EXPECT_TRUE(v.allowed);
    EXPECT_EQ(swap(pushed, "J", "F").canonical(), f.canonical());
}

TEST(Push, ReduceIntoJoinNeedsInvariantGrouping) {
    auto f = joined(true).reduce("R", "J", {"a"}, udfs::forward).analyzed();
    auto v = reorderable(f, "R", "J");
    EXPECT_TRUE(v.allowed) << (v.failed.empty() ? "" : v.failed[0]);
    EXPECT_EQ(v.rule, "reduce-join (invariant grouping)");
    EXPECT_EQ(swap(f, "R", "J").canonical(), "J(R(S),T)");

    auto g = joined(false).reduce("R", "J", {"a"}, udfs::forward).analyzed();
    auto w = reorderable(g, "R", "J");
    EXPECT_FALSE(w.allowed);
    EXPECT_TRUE(mentions(w, "does not determine the records of T"));
}

TEST(Push, ReduceIntoJoinWithSingleRecordInput) {
    auto f = SpecBuilder()
                 .source("S", {"a", "b"})
                 .source("T", {"c", "d"})
                 .singleton()
                 .cross("X", "S", "T")
                 .reduce("R", "X", {"a"}, udfs::forward)
                 .analyzed();
    auto v = reorderable(f, "R", "X");
    EXPECT_TRUE(v.allowed) << (v.failed.empty() ? "" : v.failed[0]);
    EXPECT_EQ(v.rule, "reduce-join (single-record input)");
}

TEST(Push, ReduceNeedsJoinKeyInsideGroupingKey) {
    auto f = joined(true).reduce("R", "J", {"b"}, udfs::forward).analyzed();
    auto v = reorderable(f, "R", "J");
    EXPECT_FALSE(v.allowed);
    EXPECT_TRUE(mentions(v, "is not part of grouping key"));
}

TEST(Push, MapIntoCoGroup) {
    auto key_filter = SpecBuilder()
                          .source("S", {"a", "b"})
                          .source("T", {"c", "d"})
                          .cogroup("C", "S", "T", {"a"}, {"c"}, udfs::left_all)
                          .map("F", "C", udfs::positive(0))
                          .analyzed();
    auto moves = candidate_moves(key_filter.context(), *key_filter.root());
    ASSERT_EQ(moves.size(), 2u);
    EXPECT_TRUE(moves[0].verdict.allowed);
    EXPECT_EQ(moves[0].verdict.rule, "map-cogroup");
    EXPECT_FALSE(moves[1].verdict.allowed);

    auto other_filter = SpecBuilder()
                            .source("S", {"a", "b"})
                            .source("T", {"c", "d"})
                            .cogroup("C", "S", "T", {"a"}, {"c"}, udfs::left_all)
                            .map("F", "C", udfs::positive(1))
                            .analyzed();
    auto v = reorderable(other_filter, "F", "C");
    EXPECT_FALSE(v.allowed);
    EXPECT_TRUE(mentions(v, "key group preservation"));
}

TEST(Push, ReduceIntoCoGroup) {
    auto f = SpecBuilder()
                 .source("S", {"a", "b"})
                 .source("T", {"c", "d"})
                 .cogroup("C", "S", "T", {"a"}, {"c"}, udfs::left_all)
                 .reduce("R", "C", {"a"}, udfs::forward)
                 .analyzed();
    auto v = reorderable(f, "R", "C");
    EXPECT_TRUE(v.allowed) << (v.failed.empty() ? "" : v.failed[0]);
    EXPECT_EQ(v.rule, "reduce-cogroup");

    // the semi-join drops a left group when the right one is empty: not one record per record
    auto g = SpecBuilder()
                 .source("S", {"a", "b"})
                 .source("T", {"c", "d"})
                 .cogroup("C", "S", "T", {"a"}, {"c"}, udfs::semi)
                 .reduce("R", "C", {"a"}, udfs::forward)
                 .analyzed();
    auto w = reorderable(g, "R", "C");
    EXPECT_FALSE(w.allowed);
    EXPECT_EQ(w.rule, "reduce-cogroup");
}

TEST(Rotate, JoinOrder) {
    // (S join T on a=c) join U on d=e  ->  S join (T join U)
    auto f = joined()
                 .source("U", {"e", "f"})
                 .match("J2", "J", "U", {"d"}, {"e"})
                 .analyzed();
    auto v = reorderable(f, "J2", "J");
    EXPECT_TRUE(v.allowed) << (v.failed.empty() ? "" : v.failed[0]);
    EXPECT_EQ(v.rule, "join-rotation");
    EXPECT_EQ(swap(f, "J2", "J").canonical(), "J(S,J2(T,U))");
}

TEST(Rotate, KeyMustStayAvailable) {
    auto f = joined()
                 .source("U", {"e", "f"})
                 .match("J2", "J", "U", {"b"}, {"e"})
                 .analyzed();
    auto moves = candidate_moves(f.context(), *f.root());
    ASSERT_EQ(moves.size(), 2u);
    EXPECT_TRUE(moves[0].verdict.allowed);  // keeps S
    EXPECT_FALSE(moves[1].verdict.allowed); // would lose b
    EXPECT_TRUE(mentions(moves[1].verdict, "is not available"));
    EXPECT_EQ(swap(f, "J2", "J").canonical(), "J(J2(S,U),T)");
}

TEST(Rotate, CoGroupIsNotRotated) {
    auto f = SpecBuilder()
                 .source("S", {"a", "b"})
                 .source("T", {"c", "d"})
                 .cogroup("C", "S", "T", {"a"}, {"c"}, udfs::left_all)
                 .source("U", {"e", "f"})
                 .match("J", "C", "U", {"a"}, {"e"})
                 .analyzed();
    auto v = reorderable(f, "J", "C");
    EXPECT_FALSE(v.allowed);
    EXPECT_EQ(v.rule, "unsupported");
}

TEST(Pins, PinnedOperatorsStayPut) {
    auto f = SpecBuilder()
                 .source("S", {"a", "b"})
                 .map("F", "S", udfs::positive(0))
                 .map("G", "F", "10: m(InputRecord $ir)\n11: $a:=getField($ir,1)\n12: if($a>0) goto 14\n"
                                "13: $or:=copy($ir)\n14: emit($or)\n15: return\n")
                 .analyzed();
    auto v = reorderable(f, "F", "G");
    EXPECT_FALSE(v.allowed);
    EXPECT_TRUE(mentions(v, "G is pinned"));
}

TEST(Moves, ValidMovesAreTheApprovedCandidates) {
    auto f = sample("clickstream", AnalysisMode::manual);
    std::function<void(const PlanNode&)> walk = [&](const PlanNode& n) {
        auto all = candidate_moves(f.context(), n);
        auto ok = valid_moves(f.context(), n);
        std::size_t approved = 0;
        for (const auto& m : all) approved += m.verdict.allowed;
        EXPECT_EQ(ok.size(), approved);
        for (const auto& c : n.children) walk(*c);
    };
    walk(*f.root());
}

TEST(Moves, ClickstreamVerdicts) {
    auto f = sample("clickstream", AnalysisMode::manual);
    auto v = reorderable(f, "CondenseSessions", "FilterLoggedIn");
    EXPECT_TRUE(v.allowed) << (v.failed.empty() ? "" : v.failed[0]);
    EXPECT_EQ(v.rule, "reduce-join (invariant grouping)");
    EXPECT_TRUE(reorderable(f, "FilterLoggedIn", "AddUserInfo").allowed);
    EXPECT_FALSE(reorderable(f, "FilterBuySessions", "CondenseSessions").allowed);
}
