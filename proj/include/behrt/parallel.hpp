#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace behrt {

// Splits [0, n) into `threads` contiguous chunks and calls fn(begin, end, chunk)
// for each, chunk 0 on the calling thread. The first exception is rethrown.
template <typename Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
    const std::size_t t = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n));
    auto bounds = [&](std::size_t c) { return std::pair{n * c / t, n * (c + 1) / t}; };
    if (t == 1) {
        fn(std::size_t{0}, n, std::size_t{0});
        return;
    }
    std::vector<std::exception_ptr> errors(t);
    std::vector<std::thread> pool;
    for (std::size_t c = 1; c < t; ++c) {
        pool.emplace_back([&, c] {
            try {
                auto [b, e] = bounds(c);
                fn(b, e, c);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    try {
        auto [b, e] = bounds(0);
        fn(b, e, std::size_t{0});
    } catch (...) {
        errors[0] = std::current_exception();
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace behrt
