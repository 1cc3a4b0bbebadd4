#include <cstdio>

int main() {
    std::puts("tfsolve: under construction");
    return 0;
}
