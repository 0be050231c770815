#include <doctest.h>
#include <omp.h>

#include <set>
#include <vector>

#include "hbg/errors.hpp"
#include "hbg/kernels.hpp"
#include "hbg/rng.hpp"

using namespace hbg;

TEST_CASE("rng streams are reproducible and independent of draw order") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    const Rng root(7);
    Rng s1 = root.stream(StreamPurpose::trajectory, 3);
    Rng other = root.stream(StreamPurpose::trajectory, 2);
    for (int i = 0; i < 10; ++i) other.next_u64();
    Rng s2 = root.stream(StreamPurpose::trajectory, 3);
    for (int i = 0; i < 10; ++i) CHECK(s1.next_u64() == s2.next_u64());

    CHECK(root.stream(StreamPurpose::ant, 0).key() != root.stream(StreamPurpose::trajectory, 0).key());
    CHECK(Rng(1).key() != Rng(2).key());
}

TEST_CASE("rng uniform ranges") {
    Rng r(3);
    std::set<std::int64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const auto k = r.uniform_int(2, 5);
        CHECK(k >= 2);
        CHECK(k <= 5);
        seen.insert(k);
    }
    CHECK(seen.size() == 4);
    CHECK(r.uniform_int(4, 4) == 4);
}

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    Rng r(seed);
    std::vector<double> v(n);
    for (double& x : v) x = r.uniform() * 2.0 - 1.0;
    return v;
}

}  // namespace

TEST_CASE("parallel kernels are bit-identical to serial twins") {
    const int saved = omp_get_max_threads();
    omp_set_num_threads(4);
    for (int n : {3, 700, 3000}) {
        const int k = 24, m = 17;
        const auto a = random_vec(static_cast<std::size_t>(n) * k, 1);
        const auto b = random_vec(static_cast<std::size_t>(k) * m, 2);
        const auto g = random_vec(static_cast<std::size_t>(n) * m, 3);

        std::vector<double> c1(static_cast<std::size_t>(n) * m), c2(c1.size());
        kernels::matmul(a, b, c1, n, k, m);
        kernels::matmul_serial(a, b, c2, n, k, m);
        CHECK(c1 == c2);

        std::vector<double> d1(static_cast<std::size_t>(k) * m, 0.5), d2(d1);
        kernels::matmul_at_b_acc(a, g, d1, n, k, m);
        kernels::matmul_at_b_acc_serial(a, g, d2, n, k, m);
        CHECK(d1 == d2);

        std::vector<double> e1(static_cast<std::size_t>(n) * k, -0.25), e2(e1);
        kernels::matmul_a_bt_acc(g, b, e1, n, k, m);
        kernels::matmul_a_bt_acc_serial(g, b, e2, n, k, m);
        CHECK(e1 == e2);

        std::vector<int> offsets{0};
        Rng r(9);
        while (offsets.back() < n) offsets.push_back(std::min(n, offsets.back() + static_cast<int>(r.uniform_int(0, 6))));
        std::vector<double> s1((offsets.size() - 1) * static_cast<std::size_t>(k)), s2(s1.size());
        kernels::segment_mean(a, offsets, s1, k);
        kernels::segment_mean_serial(a, offsets, s2, k);
        CHECK(s1 == s2);
    }
    omp_set_num_threads(saved);
}

TEST_CASE("matmul matches a hand product") {
    const std::vector<double> a{1, 2, 3, 4, 5, 6};  // 2x3
    const std::vector<double> b{1, 0, 0, 1, 1, 1};  // 3x2
    std::vector<double> c(4);
    kernels::matmul(a, b, c, 2, 3, 2);
    CHECK(c == std::vector<double>{4, 5, 10, 11});
}

TEST_CASE("segment_mean of an empty segment is zero") {
    const std::vector<double> x{1, 2, 3, 4};
    const std::vector<int> offsets{0, 0, 2, 4};
    std::vector<double> out(3, 9.0);
    kernels::segment_mean(x, offsets, out, 1);
    CHECK(out == std::vector<double>{0.0, 1.5, 3.5});
}
