#include "qpolicy/matrix.hpp"

#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace qp {

void init_blas_single_thread() {
    static bool done = false;
    if (!done) {
        openblas_set_num_threads(1);
        done = true;
    }
}

void gemm(bool trans_a, bool trans_b, double alpha, const Matrix& a, const Matrix& b, double beta,
          Matrix& c) {
    const std::size_t m = trans_a ? a.cols : a.rows;
    const std::size_t k = trans_a ? a.rows : a.cols;
    const std::size_t kb = trans_b ? b.cols : b.rows;
    const std::size_t n = trans_b ? b.rows : b.cols;
    if (k != kb || c.rows != m || c.cols != n) throw std::invalid_argument("gemm: shape mismatch");
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a.data.data(), static_cast<int>(a.cols), b.data.data(),
                static_cast<int>(b.cols), beta, c.data.data(), static_cast<int>(c.cols));
}

}  // namespace qp
