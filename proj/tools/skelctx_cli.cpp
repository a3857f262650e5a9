#include <cstdio>

int main() {
  std::puts("skelctx: placeholder");
  return 0;
}
