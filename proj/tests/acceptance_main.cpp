// Acceptance suite: one numbered criterion per function, each printing a
// single [PASS]/[FAIL] line. Run with no arguments for all criteria or pass
// criterion numbers. Exit status is the number of failures.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

int run_criterion(int index, std::string* detail);

namespace {

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> which;
    for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
    if (which.empty())
        for (int i = 1; i <= 10; ++i) which.push_back(i);

    int failures = 0;
    for (int idx : which) {
        Timer timer;
        std::string detail;
        int rc = 1;
        try {
            rc = run_criterion(idx, &detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %d (%.1fs): %s\n", rc == 0 ? "PASS" : "FAIL", idx,
                    timer.seconds(), detail.c_str());
        std::fflush(stdout);
        failures += rc == 0 ? 0 : 1;
    }
    return failures;
}
