#pragma once

#include <stdexcept>
#include <string>

namespace lpbf
{

// Bad user input: malformed files, invalid configuration, violated
// preconditions on parameters. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class ParseError : public ConfigError
{
public:
  ParseError(std::string const &source, int line, std::string const &what)
      : ConfigError(source + ":" + std::to_string(line) + ": " + what),
        _line(line)
  {
  }

  int line() const { return _line; }

private:
  int _line;
};

// Model evaluated outside its domain of validity (e.g. T_b >= T_m).
class DomainError : public std::domain_error
{
public:
  using std::domain_error::domain_error;
};

// Non-finite values or failed convergence inside a numerical kernel. Maps to
// CLI exit code 3.
class NumericError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

} // namespace lpbf
