#pragma once

#include <stdexcept>
#include <string>

namespace dialmt {

enum class Errc {
  io,          // file not readable/writable
  parse,       // malformed input file
  align,       // src/tgt or token alignment mismatch
  input,       // bad argument to an operation
  config,      // inconsistent configuration
  format,      // malformed serialized artifact (bpe model, checkpoint, ...)
  corrupt,     // internally inconsistent data (edit records, ...)
  trunc,       // sequence exceeds a hard length limit
  annotation,  // invalid test-set annotation
  train,       // training aborted (non-finite loss, ...)
};

inline const char* errc_code(Errc c) {
  switch (c) {
    case Errc::io: return "E_IO";
    case Errc::parse: return "E_PARSE";
    case Errc::align: return "E_ALIGN";
    case Errc::input: return "E_INPUT";
    case Errc::config: return "E_CONFIG";
    case Errc::format: return "E_FORMAT";
    case Errc::corrupt: return "E_CORRUPT";
    case Errc::trunc: return "E_TRUNC";
    case Errc::annotation: return "E_ANNOT";
    case Errc::train: return "E_TRAIN";
  }
  return "E_UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(Errc c, const std::string& msg)
      : std::runtime_error(std::string(errc_code(c)) + ": " + msg), code_(c) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc c, const std::string& msg) { throw Error(c, msg); }

}  // namespace dialmt
