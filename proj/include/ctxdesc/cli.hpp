#pragma once

// Command-line driver. Exit status: 0 clean, 1 ERROR diagnostics, 2 usage
// or parse errors. Reports go to `out`, diagnostics to `err`.
//
//   ctxdesc run case.scr [--check] [--dump] [--strict] [--filter] [--allow_obsolete] [--unlock]
//   ctxdesc man phymod
//   ctxdesc db init|dump|load|search|clean|jobs ...
//   ctxdesc vary DB base.scr --grid cfdpb.mach=0.5,0.6
//   ctxdesc span DB --max-jobs 4
//   ctxdesc discover --tol 1e-4 --budget 200
//   ctxdesc serve DB --port 7070
//   ctxdesc serve-ui [case.scr] --port 8080
//   ctxdesc manual skeleton|coherency

#include <ostream>
#include <string>
#include <vector>

namespace ctxdesc {

/// `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctxdesc
