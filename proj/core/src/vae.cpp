#include "chordtex/vae.hpp"

namespace chordtex {

template class VaeModel<float>;
template class VaeModel<double>;

}  // namespace chordtex
