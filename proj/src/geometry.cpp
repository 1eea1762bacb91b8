#include "mvsf/geometry.hpp"

namespace mvsf {

std::string_view toString(Frame frame) {
  switch (frame) {
    case Frame::Unspecified: return "unspecified";
    case Frame::A_t0: return "A_t0";
    case Frame::A_t1: return "A_t1";
    case Frame::B_t0: return "B_t0";
    case Frame::B_t1: return "B_t1";
    case Frame::World: return "world";
  }
  return "unknown";
}

}  // namespace mvsf
