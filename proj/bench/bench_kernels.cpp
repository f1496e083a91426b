#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <omp.h>

#include "fedprune/kernels.hpp"
#include "fedprune/rng.hpp"
#include "fedprune/tensor.hpp"

namespace {

using namespace fedprune;
namespace kn = fedprune::kernels;

TensorBuffer random_tensor(const Shape& shape, Rng& rng) {
    TensorBuffer t = TensorBuffer::zeros(shape);
    for (double& v : t.data) v = rng.uniform() * 2.0 - 1.0;
    return t;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm-up
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto d = std::chrono::steady_clock::now() - start;
    return std::chrono::duration<double, std::milli>(d).count() / reps;
}

bool equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

struct Case {
    std::string name;
    std::size_t out_size;
    std::function<void(double*, kn::Exec)> run;
};

void report(const Case& c, int reps) {
    std::vector<double> serial_out(c.out_size), parallel_out(c.out_size);
    const double serial_ms =
        time_ms([&] { c.run(serial_out.data(), kn::Exec::serial); }, reps);
    const double parallel_ms =
        time_ms([&] { c.run(parallel_out.data(), kn::Exec::parallel); }, reps);
    std::printf("%-26s %10.3f %10.3f %9.2fx  %s\n", c.name.c_str(), serial_ms,
                parallel_ms, serial_ms / parallel_ms,
                equal(serial_out, parallel_out) ? "equal" : "DIFFER");
}

}  // namespace

int main() {
    Rng rng(7);

    const kn::ConvDims cd = kn::conv_dims(16, 16, 28, 28, 32, 5, 1, 2);
    const TensorBuffer x = random_tensor({16, 16, 28, 28}, rng);
    const TensorBuffer w = random_tensor({32, 16, 5, 5}, rng);
    const TensorBuffer b = random_tensor({32}, rng);
    const TensorBuffer dy =
        random_tensor({16, 32, cd.out_h, cd.out_w}, rng);

    constexpr std::size_t kB = 64, kF = 512, kO = 256;
    const TensorBuffer xd = random_tensor({kB, kF}, rng);
    const TensorBuffer wd = random_tensor({kF, kO}, rng);
    const TensorBuffer bd = random_tensor({kO}, rng);
    const TensorBuffer dyd = random_tensor({kB, kO}, rng);

    const std::vector<Case> cases{
        {"conv2d forward", dy.size(),
         [&](double* out, kn::Exec e) {
             kn::conv2d_forward(x.ptr(), w.ptr(), b.ptr(), out, cd, e);
         }},
        {"conv2d backward input", x.size(),
         [&](double* out, kn::Exec e) {
             kn::conv2d_backward_input(dy.ptr(), w.ptr(), out, cd, e);
         }},
        {"conv2d backward weights", w.size(),
         [&](double* out, kn::Exec e) {
             kn::conv2d_backward_weights(dy.ptr(), x.ptr(), out, cd, e);
         }},
        {"dense forward", kB * kO,
         [&](double* out, kn::Exec e) {
             kn::dense_forward(xd.ptr(), wd.ptr(), bd.ptr(), out, kB, kF, kO, e);
         }},
        {"dense backward weights", kF * kO,
         [&](double* out, kn::Exec e) {
             kn::dense_backward_weights(dyd.ptr(), xd.ptr(), out, kB, kF, kO, e);
         }},
    };

    std::printf("threads: %d\n\n", omp_get_max_threads());
    std::printf("%-26s %10s %10s %10s  %s\n", "kernel", "serial ms", "parallel",
                "speedup", "check");
    for (const Case& c : cases) report(c, 5);
    return 0;
}
