#include <cstdio>

int main() {
  std::puts("stormrisk: CLI under construction");
  return 0;
}
