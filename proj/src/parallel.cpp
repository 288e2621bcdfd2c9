#include "gmcnn/parallel.hpp"

#include <algorithm>

namespace gmcnn {

namespace {
int g_threads = 1;
}

void set_num_threads(int n) { g_threads = std::max(1, n); }

int num_threads() { return g_threads; }

}  // namespace gmcnn
