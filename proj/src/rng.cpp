#include "sinddm/rng.hpp"

#include <sstream>

#include "sinddm/error.hpp"

namespace sinddm {

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_ << ' ' << normal_;
  return out.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream in(s);
  in >> engine_ >> normal_;
  if (!in) throw IntegrityError("unreadable rng state");
}

}  // namespace sinddm
