#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "moralprobe/error.hpp"
#include "moralprobe/prompt_factory.hpp"

namespace moralprobe {

/// Unit vector onto which statement embeddings are projected. The sign is
/// fixed so that `sign_anchor` (the first positive seed) projects to >= 0.
struct MoralDirection {
  Eigen::VectorXd direction;
  std::string sign_anchor;
};

struct SeedEmbedding {
  std::string label;
  Eigen::VectorXd vector;
  Polarity polarity = Polarity::kPositive;
};

struct PowerIterationOptions {
  double tolerance = 1e-10;
  int max_iterations = 100'000;
};

/// Top principal component of the mean-centered seeds.
MoralDirection fit_moral_direction(std::span<const SeedEmbedding> seeds,
                                   PowerIterationOptions options = {});

template <class Derived>
double embedding_score(const MoralDirection& direction, const Eigen::MatrixBase<Derived>& embedding) {
  if (embedding.size() != direction.direction.size())
    throw ValidationError("embedding has dimension " + std::to_string(embedding.size()) +
                          ", direction has " + std::to_string(direction.direction.size()));
  return direction.direction.dot(embedding.derived().template cast<double>());
}

/// Label -> vector, read from CSV `label,dim_0,...,dim_n`.
class EmbeddingTable {
 public:
  static EmbeddingTable read(const std::filesystem::path& path);
  static EmbeddingTable parse(std::string_view text, std::string source = "<memory>");

  void add(std::string label, Eigen::VectorXd v);
  const Eigen::VectorXd* find(const std::string& label) const;
  Eigen::Index dimension() const { return dimension_; }
  std::size_t size() const { return vectors_.size(); }

 private:
  std::map<std::string, Eigen::VectorXd> vectors_;
  Eigen::Index dimension_ = 0;
};

/// Seed CSV `label,polarity,dim_0,...,dim_n`; polarity is `+`/`-` or
/// `positive`/`negative`.
std::vector<SeedEmbedding> read_seed_embeddings(const std::filesystem::path& path);
std::vector<SeedEmbedding> parse_seed_embeddings(std::string_view text,
                                                 std::string source = "<memory>");

}  // namespace moralprobe
