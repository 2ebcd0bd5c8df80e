#pragma once

namespace scl {

// Command-line front end. Returns the process exit code: 0 on success,
// 2 on a configuration error, 3 when an estimator fails to produce a value.
int run_cli(int argc, char** argv);

}  // namespace scl
