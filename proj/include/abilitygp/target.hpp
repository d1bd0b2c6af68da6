#pragma once

#include <Eigen/Dense>
#include <functional>

namespace abilitygp {

struct TargetEval {
    double value = 0.0;
    Eigen::VectorXd grad;
};

using ValueFn = std::function<double(const Eigen::VectorXd&)>;
using ValueGradFn = std::function<TargetEval(const Eigen::VectorXd&)>;

}  // namespace abilitygp
