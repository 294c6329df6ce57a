#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pbtd/tensor.hpp"
#include "test_support.hpp"

using namespace pbtd;
using test_support::random_matrix;
using test_support::random_tensor;

TEST_CASE("matricize of a 2x2x2 tensor follows the fixed unfolding order") {
    Vector v(8);
    v << 1, 2, 3, 4, 5, 6, 7, 8;
    DenseTensor x({2, 2, 2}, v);

    Matrix m0 = matricize(x, 0);
    Matrix want0(2, 4);
    want0 << 1, 3, 5, 7,
             2, 4, 6, 8;
    CHECK((m0 - want0).norm() == 0.0);

    Matrix m2 = matricize(x, 2);
    Matrix want2(2, 4);
    want2 << 1, 2, 3, 4,
             5, 6, 7, 8;
    CHECK((m2 - want2).norm() == 0.0);
}

TEST_CASE("fold inverts matricize on every mode") {
    DenseTensor x = random_tensor({3, 4, 5}, 11);
    for (int n = 0; n < 3; ++n) {
        DenseTensor back = fold(matricize(x, n), n, x.dims);
        CHECK((back.values - x.values).norm() == 0.0);
    }
}

TEST_CASE("fold scalar and zero cases") {
    Matrix one(1, 1);
    one << 4.5;
    DenseTensor t = fold(one, 0, {1, 1, 1});
    CHECK(t.values[0] == 4.5);

    DenseTensor z = fold(Matrix::Zero(2, 6), 1, {3, 2, 2});
    CHECK(z.values.norm() == 0.0);
}

TEST_CASE("matricize rejects bad modes, fold rejects bad shapes") {
    DenseTensor x = random_tensor({2, 3}, 1);
    CHECK_THROWS(matricize(x, 2));
    CHECK_THROWS(matricize(x, -1));
    CHECK_THROWS(fold(Matrix::Zero(2, 2), 0, {2, 3}));
}

TEST_CASE("mode_n_product identity and zero") {
    DenseTensor x = random_tensor({3, 4, 5}, 2);
    DenseTensor same = mode_n_product(x, Matrix::Identity(4, 4), 1);
    CHECK((same.values - x.values).norm() == 0.0);

    DenseTensor z = mode_n_product(x, Matrix::Zero(2, 5), 2);
    CHECK(z.dims == std::vector<int>{3, 4, 2});
    CHECK(z.values.norm() == 0.0);
}

TEST_CASE("mode_n_product agrees with the unfolded matrix multiply") {
    DenseTensor x = random_tensor({3, 4, 5}, 3);
    Matrix m = random_matrix(2, 4, 4);
    DenseTensor y = mode_n_product(x, m, 1);
    Matrix lhs = matricize(y, 1);
    Matrix rhs = m * matricize(x, 1);
    CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm());
}

TEST_CASE("mode products along distinct modes commute") {
    DenseTensor x = random_tensor({3, 4, 5}, 5);
    Matrix a = random_matrix(2, 3, 6);
    Matrix b = random_matrix(6, 4, 7);
    DenseTensor ab = mode_n_product(mode_n_product(x, a, 0), b, 1);
    DenseTensor ba = mode_n_product(mode_n_product(x, b, 1), a, 0);
    CHECK((ab.values - ba.values).norm() <= 1e-12 * ab.values.norm());
}

TEST_CASE("kronecker basics") {
    Matrix i6 = kronecker(Matrix::Identity(2, 2), Matrix::Identity(3, 3));
    CHECK((i6 - Matrix::Identity(6, 6)).norm() == 0.0);

    Matrix a(2, 1), b(2, 1);
    a << 1, 2;
    b << 3, 4;
    Matrix want(4, 1);
    want << 3, 4, 6, 8;
    CHECK((kronecker(a, b) - want).norm() == 0.0);
}

TEST_CASE("kronecker mixed-product property") {
    Matrix a = random_matrix(2, 3, 8);
    Matrix b = random_matrix(4, 2, 9);
    Matrix c = random_matrix(3, 2, 10);
    Matrix d = random_matrix(2, 5, 11);
    Matrix lhs = kronecker(a, b) * kronecker(c, d);
    Matrix rhs = kronecker(Matrix(a * c), Matrix(b * d));
    CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm());
}

TEST_CASE("multilinear_reconstruct trivial cases") {
    DenseTensor zero_core({2, 2, 2});
    std::vector<Matrix> fs{random_matrix(3, 2, 12), random_matrix(4, 2, 13),
                           random_matrix(5, 2, 14)};
    CHECK(multilinear_reconstruct(zero_core, fs).values.norm() == 0.0);

    DenseTensor core = random_tensor({2, 3, 4}, 15);
    std::vector<Matrix> ids{Matrix::Identity(2, 2), Matrix::Identity(3, 3),
                            Matrix::Identity(4, 4)};
    DenseTensor same = multilinear_reconstruct(core, ids);
    CHECK((same.values - core.values).norm() == 0.0);
}

TEST_CASE("multilinear_reconstruct of a scalar core is an outer product") {
    Vector c(1);
    c << 2.0;
    DenseTensor core({1, 1, 1}, c);
    Matrix u = random_matrix(3, 1, 16);
    Matrix v = random_matrix(4, 1, 17);
    Matrix w = random_matrix(5, 1, 18);
    DenseTensor r = multilinear_reconstruct(core, {u, v, w});
    for (int k = 0; k < 5; ++k)
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 3; ++i) {
                double want = 2.0 * u(i, 0) * v(j, 0) * w(k, 0);
                CHECK(r.values[i + 3 * j + 12 * k] == doctest::Approx(want).epsilon(1e-12));
            }
}

TEST_CASE("vec of reconstruction equals the Kronecker chain times vec of core") {
    DenseTensor core = random_tensor({2, 3, 2}, 19);
    std::vector<Matrix> fs{random_matrix(4, 2, 20), random_matrix(5, 3, 21),
                           random_matrix(3, 2, 22)};
    DenseTensor r = multilinear_reconstruct(core, fs);
    Matrix chain = kronecker(fs[2], kronecker(fs[1], fs[0]));
    Vector want = chain * core.values;
    CHECK((r.values - want).norm() <= 1e-12 * want.norm());
}

TEST_CASE("blkdiag_core single core is unchanged") {
    DenseTensor c = random_tensor({2, 3, 2}, 23);
    DenseTensor out = blkdiag_core({c});
    CHECK(out.dims == c.dims);
    CHECK((out.values - c.values).norm() == 0.0);
}

TEST_CASE("blkdiag_core of two scalar cores is the 2x2x2 hyper-diagonal") {
    Vector a(1), b(1);
    a << 3.0;
    b << -2.0;
    DenseTensor out = blkdiag_core({DenseTensor({1, 1, 1}, a), DenseTensor({1, 1, 1}, b)});
    CHECK(out.dims == std::vector<int>{2, 2, 2});
    for (Eigen::Index i = 0; i < 8; ++i) {
        double want = i == 0 ? 3.0 : (i == 7 ? -2.0 : 0.0);
        CHECK(out.values[i] == want);
    }
}

TEST_CASE("sum of block reconstructions equals the concatenated-factor form") {
    std::vector<DenseTensor> cores{random_tensor({2, 1, 2}, 24), random_tensor({1, 2, 1}, 25)};
    std::vector<std::vector<Matrix>> fs{
        {random_matrix(5, 2, 26), random_matrix(4, 1, 27), random_matrix(6, 2, 28)},
        {random_matrix(5, 1, 29), random_matrix(4, 2, 30), random_matrix(6, 1, 31)}};

    Vector sum = Vector::Zero(5 * 4 * 6);
    for (int t = 0; t < 2; ++t) sum += multilinear_reconstruct(cores[t], fs[t]).values;

    std::vector<Matrix> cat(3);
    for (int n = 0; n < 3; ++n) {
        cat[n].resize(fs[0][n].rows(), fs[0][n].cols() + fs[1][n].cols());
        cat[n] << fs[0][n], fs[1][n];
    }
    DenseTensor joint = multilinear_reconstruct(blkdiag_core(cores), cat);
    CHECK((joint.values - sum).norm() <= 1e-12 * sum.norm());
}

TEST_CASE("blkdiag_core rejects order mismatch") {
    CHECK_THROWS(blkdiag_core({DenseTensor({1, 1, 1}), DenseTensor({1, 1})}));
}
