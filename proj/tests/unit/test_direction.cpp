#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "moralprobe/linalg.hpp"
#include "moralprobe/scoring/direction.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace moralprobe;

namespace {

Eigen::MatrixXd rows_of(const std::vector<SeedEmbedding>& seeds) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(seeds.size()), seeds.front().vector.size());
  for (std::size_t i = 0; i < seeds.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = seeds[i].vector.transpose();
  return m;
}

}  // namespace

TEST(PowerIteration, MatchesEigenSolverOnRandomMatrix) {
  const auto planted = moralprobe::testing::planted_embeddings(60, 6, 4.0, 3);
  Eigen::MatrixXd x = rows_of(planted.seeds);
  x.rowwise() -= x.colwise().mean();
  const auto pc = top_principal_component(x, 1e-12, 100000);
  ASSERT_TRUE(pc);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(x.transpose() * x);
  EXPECT_NEAR(pc->eigenvalue, solver.eigenvalues()(5), 1e-8 * solver.eigenvalues()(5));
  EXPECT_NEAR(std::abs(pc->eigenvector.normalized().dot(solver.eigenvectors().col(5))), 1.0,
              1e-10);
}

TEST(PowerIteration, ZeroMatrixHasNoComponent) {
  EXPECT_FALSE(top_principal_component(Eigen::MatrixXd::Zero(4, 3), 1e-10, 1000));
}

TEST(MoralDirection, RecoversPlantedAxis) {
  const auto planted = moralprobe::testing::planted_embeddings(200, 8, 20.0, 11);
  const auto dir = fit_moral_direction(planted.seeds);
  EXPECT_NEAR(dir.direction.norm(), 1.0, 1e-12);
  EXPECT_GE(std::abs(dir.direction.dot(planted.axis)), 0.99);
  const auto ref = oracle::leading_axis(rows_of(planted.seeds));
  EXPECT_NEAR(std::abs(dir.direction.dot(ref)), 1.0, 1e-6);
  EXPECT_LE((dir.direction - (dir.direction.dot(ref) > 0 ? ref : Eigen::VectorXd(-ref))).norm(),
            1e-6);
}

TEST(MoralDirection, SignFollowsAnchor) {
  const auto planted = moralprobe::testing::planted_embeddings(50, 5, 10.0, 4, 3.0);
  const auto dir = fit_moral_direction(planted.seeds);
  const SeedEmbedding* anchor = nullptr;
  for (const auto& s : planted.seeds)
    if (s.polarity == Polarity::kPositive) {
      anchor = &s;
      break;
    }
  ASSERT_NE(anchor, nullptr);
  EXPECT_EQ(dir.sign_anchor, anchor->label);
  EXPECT_GE(embedding_score(dir, anchor->vector), 0.0);
}

TEST(MoralDirection, Errors) {
  std::vector<SeedEmbedding> one{{"a", Eigen::VectorXd::Ones(3), Polarity::kPositive}};
  EXPECT_THROW(fit_moral_direction(one), ValidationError);
  std::vector<SeedEmbedding> same{{"a", Eigen::VectorXd::Ones(3), Polarity::kPositive},
                                  {"b", Eigen::VectorXd::Ones(3), Polarity::kNegative}};
  EXPECT_THROW(fit_moral_direction(same), DegeneracyError);
  std::vector<SeedEmbedding> ragged{{"a", Eigen::VectorXd::Ones(3), Polarity::kPositive},
                                    {"b", Eigen::VectorXd::Ones(2), Polarity::kNegative}};
  EXPECT_THROW(fit_moral_direction(ragged), ValidationError);
  std::vector<SeedEmbedding> no_pos{{"a", Eigen::VectorXd::Ones(2), Polarity::kNegative},
                                    {"b", Eigen::VectorXd::Zero(2), Polarity::kNegative}};
  EXPECT_THROW(fit_moral_direction(no_pos), ValidationError);
}

TEST(EmbeddingScore, DimensionMismatch) {
  MoralDirection d{Eigen::Vector3d(1, 0, 0), "a"};
  EXPECT_DOUBLE_EQ(embedding_score(d, Eigen::Vector3d(2, 5, 7)), 2.0);
  EXPECT_THROW(embedding_score(d, Eigen::Vector2d(1, 1)), ValidationError);
}

TEST(EmbeddingFiles, ParseTables) {
  const auto t = EmbeddingTable::parse("label,dim_0,dim_1\nlying in Chad.,0.5,1\nlying.,2,3\n");
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.dimension(), 2);
  EXPECT_EQ((*t.find("lying."))[1], 3.0);
  EXPECT_EQ(t.find("other"), nullptr);
  const auto seeds =
      parse_seed_embeddings("label,polarity,dim_0,dim_1\ngood,+,1,0\nbad,negative,-1,0\n");
  ASSERT_EQ(seeds.size(), 2u);
  EXPECT_EQ(seeds[1].polarity, Polarity::kNegative);
  EXPECT_THROW(parse_seed_embeddings("label,polarity,dim_0\nx,maybe,1\n"), Error);
}
