#include <cstdio>

#include "acceptance.hpp"
#include "reflexgrasp/kinematics.hpp"

// Prints one line per criterion; exit status is nonzero if any fails.
int main(int argc, char** argv) {
  reflex::accept::Options opts;
  if (argc > 1) opts.filter = argv[1];
  opts.on_result = [](const reflex::accept::CriterionResult& r) {
    std::printf("%s\n", reflex::accept::format_line(r).c_str());
    std::fflush(stdout);
  };
  const auto results = reflex::accept::run(reflex::default_robot(), opts);
  int failed = 0;
  for (const auto& r : results) failed += r.pass ? 0 : 1;
  std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
  return failed == 0 ? 0 : 1;
}
