// Acceptance-suite driver: runs the criteria (optionally one group) and
// prints one pass/fail line per criterion.
#include "smp/acceptance.hpp"

#include <cstdio>
#include <cstring>
#include <string>

int main(int argc, char** argv) {
    std::string group;
    std::string out_dir = "accept-out";
    std::uint64_t seed = 20260809;
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--group") && i + 1 < argc) group = argv[++i];
        else if (!std::strcmp(argv[i], "--out") && i + 1 < argc) out_dir = argv[++i];
        else if (!std::strcmp(argv[i], "--seed") && i + 1 < argc) seed = std::strtoull(argv[++i], nullptr, 10);
        else {
            std::fprintf(stderr,
                         "usage: acceptance [--group <name>] [--out <dir>] [--seed <n>]\n"
                         "groups: rates duality adjoint-closedform second-adjoint flow\n"
                         "        final-duality mp bdg oracle determinism\n");
            return 2;
        }
    }
    try {
        const auto results = smp::run_acceptance(out_dir, seed, group);
        int failed = 0;
        for (const auto& r : results) failed += r.pass ? 0 : 1;
        if (failed) std::printf("%d criterion(s) failed\n", failed);
        return failed == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acceptance error: %s\n", e.what());
        return 2;
    }
}
