#pragma once

#include <stdexcept>
#include <string>

namespace ovlift {

/// File missing/corrupt or unreadable; message names the offending path.
class io_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Inputs that disagree with each other (manifest vs files on disk, mismatched dimensions).
class consistency_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Caller violated an operation precondition.
class argument_error : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// External model backend failed (timeout, bad protocol, missing fixture data).
class backend_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad key or value in a pipeline config file / flag set.
class config_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace ovlift
