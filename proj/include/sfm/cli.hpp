// Batch front end: analyze (spectral report), roundtrip (modulate ->
// decimate -> demodulate with metrics), train (toy SGD run). Reports are
// JSON, tensors SFMT, histories CSV; every artifact is written atomically.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sfm {

// Runs one command line (without the program name) and returns the process
// exit code: 0 success, 2 usage or input error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sfm
