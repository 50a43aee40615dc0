// simda command-line entry point. Subcommand wiring is added alongside the
// pipelines; kept minimal until those land.

#include <cstdio>

int main(int argc, char** argv) {
    (void)argc;
    (void)argv;
    std::fprintf(stderr, "error: usage error: no subcommand\n");
    return 2;
}
