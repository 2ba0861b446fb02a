#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "colreg/graph.hpp"
#include "support/oracles.hpp"

using namespace colreg;
using namespace colreg::oracle;

namespace {

const char* kEightVertex =
    "X2 -> X1\nX2 -> X3\nX1 -> Y\nX3 -> Y\nY -> X6\nX4 -> X6\nX5 -> X6\nX3 -> X5\nX6 -> X7\n";
const char* kGeneralBoundary = "X2 -> X1\nY -> X1\nX3 -> Y\nX3 -> X1\nX3 -> X2\n";

VertexSet names(const Dag& d, std::initializer_list<std::string_view> n) { return d.indices_of(n); }

}  // namespace

TEST(ParseDag, Examples) {
  const Dag d3 = parse_dag("Y -> X1\nX2 -> X1");
  EXPECT_EQ(d3.size(), 3u);
  EXPECT_EQ(d3.edges().size(), 2u);
  EXPECT_EQ(d3.name(0), "Y");
  const Dag d2 = parse_dag(kEightVertex);
  EXPECT_EQ(d2.size(), 8u);
  EXPECT_EQ(d2.edges().size(), 9u);
  EXPECT_EQ(parse_dag(format_dag(d2)).edges(), d2.edges());
  EXPECT_EQ(parse_dag("# comment\n\nA -> B  # trailing\n").size(), 2u);
}

TEST(ParseDag, Errors) {
  const auto code = [](const char* text) {
    try {
      parse_dag(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::io;
  };
  EXPECT_EQ(code("A -> B\nB -> A"), ErrorCode::cycle);
  EXPECT_EQ(code("A -> A"), ErrorCode::cycle);
  EXPECT_EQ(code("A -> B\nA -> B"), ErrorCode::duplicate_edge);
  EXPECT_EQ(code("A B"), ErrorCode::malformed_input);
  EXPECT_EQ(code("A -> "), ErrorCode::malformed_input);
}

TEST(EightVertexDag, MarkovBoundaryAndSeparations) {
  const Dag d = parse_dag(kEightVertex);
  const Vertex y = d.index_of("Y");
  EXPECT_EQ(markov_boundary(d, y), names(d, {"X1", "X3", "X4", "X5", "X6"}));
  EXPECT_TRUE(d_separated(d, {y}, names(d, {"X4"}), {}));
  EXPECT_FALSE(d_separated(d, {y}, names(d, {"X4"}), names(d, {"X6"})));
  EXPECT_TRUE(d_separated(d, {y}, names(d, {"X5"}), names(d, {"X3"})));
  EXPECT_TRUE(contains(boundary_colliders(d, y), d.index_of("X6")));
  EXPECT_THROW(markov_boundary(d, 99), Error);
}

TEST(Graph, SmallCases) {
  const Dag iso({"A", "B", "Y"}, {{0, 1}});
  EXPECT_TRUE(markov_boundary(iso, iso.index_of("Y")).empty());
  const Dag chain = parse_dag("A -> Y\nY -> B");
  EXPECT_TRUE(boundary_colliders(chain, chain.index_of("Y")).empty());
  try {
    collider_partition(iso, iso.index_of("Y"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_boundary);
  }
  try {
    d_separated(chain, {0}, {0}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::overlapping_sets);
  }
}

TEST(ColliderPartition, SimpleAndGeneralBoundaries) {
  const Dag d3 = parse_dag("Y -> X1\nX2 -> X1");
  const auto p3 = collider_partition(d3, d3.index_of("Y"));
  EXPECT_EQ(p3.children, names(d3, {"X1"}));
  EXPECT_EQ(p3.others, names(d3, {"X2"}));
  EXPECT_TRUE(p3.parents.empty());
  const Dag d4 = parse_dag(kGeneralBoundary);
  const auto p4 = collider_partition(d4, d4.index_of("Y"));
  EXPECT_EQ(p4.children, names(d4, {"X1"}));
  EXPECT_EQ(p4.others, names(d4, {"X2"}));
  EXPECT_EQ(p4.parents, names(d4, {"X3"}));
}

TEST(ColliderPartition, ChildToOtherEdgeIsRejected) {
  // The graph already has X2 -> X1, so adding X1 -> X2 closes a cycle.
  try {
    parse_dag(std::string(kGeneralBoundary) + "X1 -> X2\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::cycle);
  }
  // Acyclic variant: a second child X4 of Y that points into X2.
  const Dag d = parse_dag(std::string(kGeneralBoundary) + "Y -> X4\nX4 -> X2\n");
  try {
    collider_partition(d, d.index_of("Y"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::partition_invalid);
  }
}

TEST(GraphExhaustive, AllDagsUpToFiveVertices) {
  std::size_t dags = 0;
  EXPECT_EQ(exhaustive_graph_failures(5, &dags), 0);
  EXPECT_EQ(dags, 29281u);
}

TEST(GraphExhaustive, RandomDagsSixAndSevenVertices) { EXPECT_EQ(random_graph_failures(200, 2024), 0); }
