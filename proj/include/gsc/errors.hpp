#pragma once

#include <stdexcept>
#include <string>

namespace gsc {

// Two CLI exit classes: config_error -> exit 2, validation_error (and
// subclasses) -> exit 1.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct validation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct shape_error : validation_error {
  using validation_error::validation_error;
};

struct index_error : validation_error {
  using validation_error::validation_error;
};

struct contract_error : validation_error {
  using validation_error::validation_error;
};

struct encoding_error : validation_error {
  using validation_error::validation_error;
};

struct parse_error : validation_error {
  using validation_error::validation_error;
};

struct checkpoint_error : validation_error {
  using validation_error::validation_error;
};

struct alignment_error : validation_error {
  using validation_error::validation_error;
};

struct missing_score_error : validation_error {
  using validation_error::validation_error;
};

struct training_error : validation_error {
  using validation_error::validation_error;
};

// Infeasible generator settings are a configuration problem.
struct generation_error : config_error {
  using config_error::config_error;
};

}  // namespace gsc
