#include "vlogdesk/threading.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace vlogdesk {

int thread_count() {
    static const int n = [] {
        if (const char* env = std::getenv("VLOGDESK_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return n;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
    if (n <= 0) return;
    const int workers = std::min<int64_t>(thread_count(), n);
    if (workers <= 1) {
        body(0, n);
        return;
    }
    const int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int w = 1; w < workers; ++w) {
        const int64_t b = w * chunk;
        const int64_t e = std::min<int64_t>(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&body, b, e] { body(b, e); });
    }
    body(0, std::min<int64_t>(n, chunk));
    for (auto& t : pool) t.join();
}

}  // namespace vlogdesk
