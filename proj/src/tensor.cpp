#include "cavlab/tensor.hpp"

#include <string>

namespace cavlab {

std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[size_t(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

} // namespace cavlab
