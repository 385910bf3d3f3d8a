#include "moralprobe/scoring/direction.hpp"

#include "moralprobe/csv.hpp"
#include "moralprobe/linalg.hpp"

namespace moralprobe {

MoralDirection fit_moral_direction(std::span<const SeedEmbedding> seeds,
                                   PowerIterationOptions options) {
  if (seeds.size() < 2) throw ValidationError("fit_moral_direction: need at least 2 seeds");
  const Eigen::Index dim = seeds.front().vector.size();
  if (dim == 0) throw ValidationError("fit_moral_direction: empty seed vectors");
  for (const auto& s : seeds)
    if (s.vector.size() != dim)
      throw ValidationError("fit_moral_direction: seed '" + s.label + "' has dimension " +
                            std::to_string(s.vector.size()) + ", expected " + std::to_string(dim));

  const SeedEmbedding* anchor = nullptr;
  for (const auto& s : seeds) {
    if (s.polarity == Polarity::kPositive) {
      anchor = &s;
      break;
    }
  }
  if (anchor == nullptr) throw ValidationError("fit_moral_direction: no positive seed to anchor the sign");

  Eigen::MatrixXd x(static_cast<Eigen::Index>(seeds.size()), dim);
  for (std::size_t i = 0; i < seeds.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = seeds[i].vector.transpose();
  x.rowwise() -= x.colwise().mean();
  if (x.squaredNorm() == 0.0) throw DegeneracyError("fit_moral_direction: seeds have zero variance");

  const auto pc = top_principal_component(x, options.tolerance, options.max_iterations);
  if (!pc)
    throw DegeneracyError("fit_moral_direction: power iteration did not converge "
                          "(leading eigenvalues too close)");

  MoralDirection out{pc->eigenvector.normalized(), anchor->label};
  if (out.direction.dot(anchor->vector) < 0.0) out.direction = -out.direction;
  return out;
}

void EmbeddingTable::add(std::string label, Eigen::VectorXd v) {
  if (vectors_.empty()) dimension_ = v.size();
  if (v.size() != dimension_)
    throw ValidationError("embedding '" + label + "' has dimension " + std::to_string(v.size()) +
                          ", expected " + std::to_string(dimension_));
  if (!vectors_.emplace(std::move(label), std::move(v)).second)
    throw ValidationError("duplicate embedding label");
}

const Eigen::VectorXd* EmbeddingTable::find(const std::string& label) const {
  auto it = vectors_.find(label);
  return it == vectors_.end() ? nullptr : &it->second;
}

namespace {

Eigen::VectorXd read_dims(const csv::Table& t, const csv::Row& row, std::size_t first) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(row.fields.size() - first));
  for (std::size_t c = first; c < row.fields.size(); ++c)
    v[static_cast<Eigen::Index>(c - first)] = csv::to_double(t, row, c);
  return v;
}

EmbeddingTable embeddings_from(const csv::Table& t) {
  if (t.header().size() < 2 || t.header()[0] != "label" || t.header()[1] != "dim_0")
    throw ParseError(t.source(), 1, "expected header 'label,dim_0,...'");
  EmbeddingTable table;
  for (const auto& row : t.rows()) {
    try {
      table.add(row.fields[0], read_dims(t, row, 1));
    } catch (const ValidationError& e) {
      throw ParseError(t.source(), row.line, e.what());
    }
  }
  return table;
}

std::vector<SeedEmbedding> seeds_from(const csv::Table& t) {
  if (t.header().size() < 3 || t.header()[0] != "label" || t.header()[1] != "polarity" ||
      t.header()[2] != "dim_0")
    throw ParseError(t.source(), 1, "expected header 'label,polarity,dim_0,...'");
  std::vector<SeedEmbedding> seeds;
  for (const auto& row : t.rows()) {
    const std::string& p = row.fields[1];
    Polarity polarity;
    if (p == "+" || p == "positive")
      polarity = Polarity::kPositive;
    else if (p == "-" || p == "negative")
      polarity = Polarity::kNegative;
    else
      throw ParseError(t.source(), row.line, "polarity must be +, -, positive or negative");
    seeds.push_back({row.fields[0], read_dims(t, row, 2), polarity});
  }
  return seeds;
}

}  // namespace

EmbeddingTable EmbeddingTable::read(const std::filesystem::path& path) {
  return embeddings_from(csv::Table::read(path));
}

EmbeddingTable EmbeddingTable::parse(std::string_view text, std::string source) {
  return embeddings_from(csv::Table::parse(text, std::move(source)));
}

std::vector<SeedEmbedding> read_seed_embeddings(const std::filesystem::path& path) {
  return seeds_from(csv::Table::read(path));
}

std::vector<SeedEmbedding> parse_seed_embeddings(std::string_view text, std::string source) {
  return seeds_from(csv::Table::parse(text, std::move(source)));
}

}  // namespace moralprobe
