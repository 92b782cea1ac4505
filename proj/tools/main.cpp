#include <cstdio>

int main() {
    std::puts("slts: placeholder");
    return 0;
}
