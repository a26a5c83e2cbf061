#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace apeg::nn {

using Mat = Eigen::MatrixXd;
using MatMap = Eigen::Map<Mat>;

struct ParamBlock {
  std::string name;
  std::vector<int> dims;  // first dim is the matrix row count
  Eigen::VectorXd value;
  Eigen::VectorXd grad;

  Eigen::Index rows() const { return dims.empty() ? 0 : dims.front(); }
  Eigen::Index cols() const { return rows() == 0 ? 0 : value.size() / rows(); }
};

// Named parameter blocks, each paired with a gradient slot of the same shape.
// Iteration order is registration order.
class ParamStore {
 public:
  int add(const std::string& name, const std::vector<int>& dims);

  int size() const { return static_cast<int>(blocks_.size()); }
  ParamBlock& block(int id) { return blocks_.at(static_cast<std::size_t>(id)); }
  const ParamBlock& block(int id) const { return blocks_.at(static_cast<std::size_t>(id)); }
  int find(const std::string& name) const;  // -1 when absent

  // Matrix views (rows = dims[0]). Re-fetch after add(); blocks may move.
  MatMap value(int id);
  MatMap grad(int id);

  std::size_t total() const;
  void zero_grad();

  Eigen::VectorXd flat_values() const;
  Eigen::VectorXd flat_grads() const;
  void set_flat_values(const Eigen::VectorXd& v);

  // Rounds every value to the nearest float, matching what a checkpoint holds.
  void round_to_float();

 private:
  std::vector<ParamBlock> blocks_;
};

}  // namespace apeg::nn
