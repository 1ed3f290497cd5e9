#include "mobnet/parallel.hpp"

namespace mobnet {

namespace {
std::atomic<unsigned> g_jobs{0};
}

void set_default_jobs(unsigned jobs) { g_jobs.store(jobs); }

unsigned default_jobs() {
    const unsigned jobs = g_jobs.load();
    if (jobs != 0) return jobs;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace mobnet
