#include <cstdio>

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::fprintf(stderr, "trialforge: subcommands not wired up yet\n");
  return 2;
}
