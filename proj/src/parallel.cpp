#include "evans/parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>

#include <omp.h>

namespace evans {

namespace {
std::atomic<int> gThreads{0};
}

void setThreadCount(int n) { gThreads = n; }

int threadCount() {
    const int n = gThreads.load();
    return n > 0 ? n : omp_get_max_threads();
}

std::vector<ScaledValue> evaluateNodes(const EvansFn& f, const std::vector<Complex>& points) {
    std::vector<ScaledValue> out(points.size());
    std::exception_ptr error;
    std::mutex errorMutex;
    const long count = static_cast<long>(points.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(threadCount())
    for (long i = 0; i < count; ++i) {
        try {
            out[i] = f(points[i]);
        } catch (...) {
            std::lock_guard<std::mutex> lock(errorMutex);
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return out;
}

std::vector<ScaledValue> evaluateNodesSerial(const EvansFn& f, const std::vector<Complex>& points) {
    std::vector<ScaledValue> out;
    out.reserve(points.size());
    for (const auto& z : points) out.push_back(f(z));
    return out;
}

}  // namespace evans
