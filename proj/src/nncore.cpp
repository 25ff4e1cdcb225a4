#include "stgl/embeddings.hpp"
#include "stgl/tape.hpp"

namespace stgl {

Act act_from_string(const std::string& s) {
  if (s == "identity") return Act::identity;
  if (s == "elu") return Act::elu;
  if (s == "relu") return Act::relu;
  if (s == "tanh") return Act::tanh_act;
  throw std::invalid_argument("unknown activation: " + s);
}

std::string to_string(Act a) {
  switch (a) {
    case Act::identity: return "identity";
    case Act::elu: return "elu";
    case Act::relu: return "relu";
    case Act::tanh_act: return "tanh";
  }
  return "?";
}

EmbMode emb_mode_from_string(const std::string& s) {
  if (s == "plain") return EmbMode::plain;
  if (s == "variational") return EmbMode::variational;
  if (s == "clustered") return EmbMode::clustered;
  throw std::invalid_argument("unknown embedding mode: " + s);
}

std::string to_string(EmbMode m) {
  switch (m) {
    case EmbMode::plain: return "plain";
    case EmbMode::variational: return "variational";
    case EmbMode::clustered: return "clustered";
  }
  return "?";
}

}  // namespace stgl
