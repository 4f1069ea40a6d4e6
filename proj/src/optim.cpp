#include "compemb/optim.hpp"

namespace compemb {

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adagrad: return "adagrad";
    case OptimizerKind::amsgrad: return "amsgrad";
  }
  return "?";
}

OptimizerKind optimizer_kind_from_string(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adagrad") return OptimizerKind::adagrad;
  if (name == "amsgrad") return OptimizerKind::amsgrad;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

}  // namespace compemb
