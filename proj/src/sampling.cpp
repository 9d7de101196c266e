#include "mechlin/sampling.hpp"

#include <stdexcept>

namespace mechlin {

namespace {

constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                           31, 37, 41, 43, 47, 53, 59, 61, 67, 71};

double radical_inverse(std::uint64_t index, int base) {
    double result = 0.0;
    double digit = 1.0 / base;
    while (index > 0) {
        result += digit * static_cast<double>(index % static_cast<std::uint64_t>(base));
        index /= static_cast<std::uint64_t>(base);
        digit /= base;
    }
    return result;
}

}  // namespace

std::vector<Eigen::VectorXd> sample_box(const Box& box, int count, std::uint64_t seed) {
    const int n = static_cast<int>(box.size());
    if (n == 0) throw std::invalid_argument("sample_box: empty box");
    if (n > static_cast<int>(std::size(kPrimes)))
        throw std::invalid_argument("sample_box: dimension too large");
    if (count < 0) throw std::invalid_argument("sample_box: negative count");

    // Skip the correlated low-index prefix and fold the seed into the start.
    const std::uint64_t start = 64 + seed % 65536;
    std::vector<Eigen::VectorXd> points;
    points.reserve(static_cast<std::size_t>(count));
    for (int s = 0; s < count; ++s) {
        Eigen::VectorXd x(n);
        for (int i = 0; i < n; ++i) {
            const double u = radical_inverse(start + static_cast<std::uint64_t>(s), kPrimes[i]);
            x(i) = box[static_cast<std::size_t>(i)][0] +
                   (box[static_cast<std::size_t>(i)][1] - box[static_cast<std::size_t>(i)][0]) * u;
        }
        points.push_back(std::move(x));
    }
    return points;
}

}  // namespace mechlin
