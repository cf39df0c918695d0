// Desk acceptance run: one PASS/FAIL line per criterion on stdout and in
// <work>/verdicts.txt. Exit status is 0 once every criterion has a verdict;
// with --strict it is 0 only if all pass. Trained models are cached under the
// work directory (default ./acceptance-work) and reused while their
// configuration is unchanged.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "uar/checks.hpp"

int main(int argc, char** argv) {
    uar::checks::AcceptanceOptions opt;
    opt.work_dir = "acceptance-work";
    bool strict = false;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--strict") == 0) {
            strict = true;
        } else {
            opt.work_dir = argv[i];
        }
    }
    opt.log = [](const std::string& s) { std::fprintf(stderr, "  .. %s\n", s.c_str()); };
    try {
        std::filesystem::create_directories(opt.work_dir);
        std::ofstream report(opt.work_dir / "verdicts.txt");
        std::size_t failed = 0, seen = 0;
        uar::checks::acceptance_suite(opt, [&](const uar::checks::Result& r) {
            ++seen;
            failed += !r.pass;
            const std::string line =
                std::string("[") + (r.pass ? "PASS" : "FAIL") + "] " + r.name + ": " + r.detail + "\n";
            std::fputs(line.c_str(), stdout);
            std::fflush(stdout);
            report << line << std::flush;
        });
        const std::string summary = std::to_string(failed) + " of " + std::to_string(seen) + " criteria failed\n";
        std::fputs(summary.c_str(), stdout);
        report << summary;
        if (seen != 12) return 2;
        return strict && failed > 0 ? 1 : 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
        return 2;
    }
}
