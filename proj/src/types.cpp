#include "figforge/types.hpp"

#include <cmath>

namespace figforge {

const char* to_string(Modality m) {
  switch (m) {
    case Modality::radiology: return "radiology";
    case Modality::histopathology: return "histopathology";
    case Modality::dermatology: return "dermatology";
    case Modality::retina: return "retina";
    case Modality::plot: return "plot";
  }
  return "radiology";
}

Modality modality_from_string(const std::string& s) {
  for (Modality m : {Modality::radiology, Modality::histopathology,
                     Modality::dermatology, Modality::retina, Modality::plot}) {
    if (s == to_string(m)) return m;
  }
  throw ValidationError("unknown modality: " + s);
}

void validate(const EmbeddingMatrix& m) {
  if (m.ids.size() != m.n)
    throw ValidationError(
        "embedding id count does not match row count",
        {{"ids", std::to_string(m.ids.size())}, {"n", std::to_string(m.n)}});
  if (m.data.size() != std::size_t(m.n) * m.d)
    throw ValidationError(
        "embedding data size does not match n*d",
        {{"size", std::to_string(m.data.size())},
         {"expected", std::to_string(std::size_t(m.n) * m.d)}});
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    if (!std::isfinite(m.data[i]))
      throw ValidationError("non-finite embedding value",
                            {{"row", std::to_string(i / m.d)},
                             {"col", std::to_string(i % m.d)}});
  }
}

}  // namespace figforge
