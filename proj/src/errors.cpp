#include "cega/errors.hpp"

#include <sstream>

namespace cega {

NumericalError::NumericalError(const std::string& what, double residual)
    : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

namespace {
std::string divergence_message(int epoch, double loss) {
    std::ostringstream os;
    os << "training diverged at epoch " << epoch << ": loss = " << loss;
    return os.str();
}
}  // namespace

TrainingDivergence::TrainingDivergence(int epoch, double loss)
    : Error(divergence_message(epoch, loss)), epoch_(epoch) {}

LoadError::LoadError(const std::string& file, std::size_t line, const std::string& what)
    : Error(file + ":" + std::to_string(line) + ": " + what) {}

}  // namespace cega
