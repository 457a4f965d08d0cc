#include "sdeis/parallel.hpp"

namespace sdeis {

namespace {
std::atomic<unsigned> g_threads{0};
}

void set_default_threads(unsigned n) { g_threads.store(n); }

unsigned default_threads()
{
    unsigned n = g_threads.load();
    if (n == 0)
        n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

}  // namespace sdeis
