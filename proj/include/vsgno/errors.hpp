#pragma once

#include <stdexcept>
#include <string>

namespace vsgno {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define VSGNO_DEFINE_ERROR(Name)            \
  class Name : public Error {               \
   public:                                  \
    explicit Name(const std::string& what)  \
        : Error(#Name ": " + what) {}       \
  }

// graph / spectral
VSGNO_DEFINE_ERROR(DegenerateGeometry);
VSGNO_DEFINE_ERROR(InvalidK);
VSGNO_DEFINE_ERROR(ConvergenceFailure);

// tensors / tape
VSGNO_DEFINE_ERROR(ShapeMismatch);
VSGNO_DEFINE_ERROR(NonFiniteValue);
VSGNO_DEFINE_ERROR(NotScalar);
VSGNO_DEFINE_ERROR(DisconnectedLoss);

// spiking / operator
VSGNO_DEFINE_ERROR(NoObservations);
VSGNO_DEFINE_ERROR(WrongMode);
VSGNO_DEFINE_ERROR(GateMisaligned);
VSGNO_DEFINE_ERROR(ConfigError);

// training
VSGNO_DEFINE_ERROR(ZeroNormChannel);
VSGNO_DEFINE_ERROR(MissingComponent);
VSGNO_DEFINE_ERROR(NonFiniteLoss);
VSGNO_DEFINE_ERROR(EmptyDataset);

// datagen / io
VSGNO_DEFINE_ERROR(SingularSystem);
VSGNO_DEFINE_ERROR(Disconnected);
VSGNO_DEFINE_ERROR(FormatError);
VSGNO_DEFINE_ERROR(ChecksumMismatch);
VSGNO_DEFINE_ERROR(IoError);
VSGNO_DEFINE_ERROR(Incompatible);

#undef VSGNO_DEFINE_ERROR

}  // namespace vsgno
