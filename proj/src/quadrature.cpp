#include "rfmag/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rfmag {

NormalRule normal_rule(int panels, double half_range) {
  if (panels < 1 || !(half_range > 0.0)) {
    throw std::invalid_argument("normal_rule: need panels >= 1 and half_range > 0");
  }
  using rule = boost::math::quadrature::gauss<double, 20>;
  const auto& abscissa = rule::abscissa();
  const auto& weight = rule::weights();
  const double width = 2.0 * half_range / panels;
  NormalRule out;
  out.nodes.reserve(20 * static_cast<std::size_t>(panels));
  out.weights.reserve(out.nodes.capacity());
  for (int p = 0; p < panels; ++p) {
    const double mid = -half_range + (p + 0.5) * width;
    for (std::size_t i = 0; i < abscissa.size(); ++i) {
      for (double sign : {-1.0, 1.0}) {
        const double z = mid + sign * 0.5 * width * abscissa[i];
        out.nodes.push_back(z);
        out.weights.push_back(0.5 * width * weight[i] * std::exp(-0.5 * z * z));
      }
    }
  }
  const double mass = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
  for (double& w : out.weights) w /= mass;
  return out;
}

}  // namespace rfmag
