#include "mfce/models_pde.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <Eigen/SparseLU>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

namespace mfce {

namespace {

struct StreamMode {
    int kx;
    int ky;
    double amp;
};

// Deterministic wavenumber sequence (1,1), (2,1), (1,2), (2,2), ... with
// amplitudes normalized so each unit coefficient contributes a velocity of
// magnitude about 0.4.
std::vector<StreamMode> stream_modes(int count) {
    std::vector<StreamMode> modes;
    for (int total = 2; static_cast<int>(modes.size()) < count; ++total)
        for (int kx = total - 1; kx >= 1 && static_cast<int>(modes.size()) < count; --kx) {
            int ky = total - kx;
            double reach = std::numbers::pi *
                           std::max(static_cast<double>(kx), ky / ADRProblem::kHeight);
            modes.push_back({kx, ky, 0.4 / reach});
        }
    return modes;
}

double stream_value(const StreamMode& mode, double z1, double z2) {
    return mode.amp * std::sin(std::numbers::pi * mode.kx * z1) *
           std::sin(std::numbers::pi * mode.ky * z2 / ADRProblem::kHeight);
}

using Triplets = std::vector<Eigen::Triplet<double>>;

void add_skew(Triplets& t, int row, int col, double v) {
    t.emplace_back(row, col, 0.5 * v);
    t.emplace_back(col, row, -0.5 * v);
}

} // namespace

void ADRProblem::validate() const {
    if (q() < 16) throw InvalidParameterError("ADRProblem: q must be >= 16");
    if (!(kappa1 > 0.0)) throw InvalidParameterError("ADRProblem: kappa1 must be positive");
    if (!(a0 > 0.0)) throw InvalidParameterError("ADRProblem: a0 must be positive");
    if (!(kappa2 > 0.0)) throw InvalidParameterError("ADRProblem: kappa2 must be positive");
    if (p < 3) throw InvalidParameterError("ADRProblem: p must be >= 3");
}

ADRAssembly::ADRAssembly(ADRProblem problem) : problem_(problem) {
    problem_.validate();
    const int nx = problem_.nx, ny = problem_.ny, q = problem_.q();
    const double hx = ADRProblem::kWidth / nx;
    const double hy = ADRProblem::kHeight / ny;
    auto id = [nx](int i, int j) { return j * nx + i; };

    // Diffusion + reaction: finite-volume Neumann Laplacian, flux across the
    // boundary omitted, plus a0 on the diagonal.
    Triplets base;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            int c = id(i, j);
            double diag = problem_.a0;
            auto couple = [&](int n, double h2) {
                base.emplace_back(c, n, -problem_.kappa1 / h2);
                diag += problem_.kappa1 / h2;
            };
            if (i > 0) couple(id(i - 1, j), hx * hx);
            if (i + 1 < nx) couple(id(i + 1, j), hx * hx);
            if (j > 0) couple(id(i, j - 1), hy * hy);
            if (j + 1 < ny) couple(id(i, j + 1), hy * hy);
            base.emplace_back(c, c, diag);
        }
    base_.resize(q, q);
    base_.setFromTriplets(base.begin(), base.end());

    // Convection operators: conservative central fluxes on interior faces,
    // skew-symmetrized. Face-normal velocities of the stream modes come from
    // exact stream-function differences, so each mode is discretely
    // divergence-free.
    auto modes = stream_modes(problem_.velocity_mode_count());
    Triplets tx, ty;
    std::vector<Triplets> tmodes(modes.size());
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) { // x-faces
            int a = id(i, j), b = id(i + 1, j);
            double fx = (i + 1) * hx;
            add_skew(tx, a, a, 1.0 / (2.0 * hx));
            add_skew(tx, a, b, 1.0 / (2.0 * hx));
            add_skew(tx, b, a, -1.0 / (2.0 * hx));
            add_skew(tx, b, b, -1.0 / (2.0 * hx));
            for (std::size_t m = 0; m < modes.size(); ++m) {
                double v = (stream_value(modes[m], fx, (j + 1) * hy) -
                            stream_value(modes[m], fx, j * hy)) /
                           hy;
                add_skew(tmodes[m], a, a, v / (2.0 * hx));
                add_skew(tmodes[m], a, b, v / (2.0 * hx));
                add_skew(tmodes[m], b, a, -v / (2.0 * hx));
                add_skew(tmodes[m], b, b, -v / (2.0 * hx));
            }
        }
    for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i < nx; ++i) { // y-faces
            int a = id(i, j), b = id(i, j + 1);
            double fy = (j + 1) * hy;
            add_skew(ty, a, a, 1.0 / (2.0 * hy));
            add_skew(ty, a, b, 1.0 / (2.0 * hy));
            add_skew(ty, b, a, -1.0 / (2.0 * hy));
            add_skew(ty, b, b, -1.0 / (2.0 * hy));
            for (std::size_t m = 0; m < modes.size(); ++m) {
                double v = -(stream_value(modes[m], (i + 1) * hx, fy) -
                             stream_value(modes[m], i * hx, fy)) /
                           hx;
                add_skew(tmodes[m], a, a, v / (2.0 * hy));
                add_skew(tmodes[m], a, b, v / (2.0 * hy));
                add_skew(tmodes[m], b, a, -v / (2.0 * hy));
                add_skew(tmodes[m], b, b, -v / (2.0 * hy));
            }
        }
    conv_x_.resize(q, q);
    conv_x_.setFromTriplets(tx.begin(), tx.end());
    conv_y_.resize(q, q);
    conv_y_.setFromTriplets(ty.begin(), ty.end());
    conv_modes_.resize(modes.size());
    for (std::size_t m = 0; m < modes.size(); ++m) {
        conv_modes_[m].resize(q, q);
        conv_modes_[m].setFromTriplets(tmodes[m].begin(), tmodes[m].end());
    }
}

SpMat ADRAssembly::operator_matrix(const Vec& x) const {
    if (x.size() != problem_.p)
        throw InvalidParameterError("ADRAssembly: parameter dimension mismatch");
    SpMat a = base_;
    if (!problem_.zero_velocity) {
        double angle = x[ADRProblem::kAngleIndex];
        a += std::cos(angle) * conv_x_ + std::sin(angle) * conv_y_;
        for (std::size_t m = 0; m < conv_modes_.size(); ++m)
            a += x[3 + static_cast<int>(m)] * conv_modes_[m];
    }
    return a;
}

Vec ADRAssembly::apply_operator(const Vec& x, const Vec& v) const {
    Vec out = base_ * v;
    if (!problem_.zero_velocity) {
        double angle = x[ADRProblem::kAngleIndex];
        out += std::cos(angle) * (conv_x_ * v) + std::sin(angle) * (conv_y_ * v);
        for (std::size_t m = 0; m < conv_modes_.size(); ++m)
            out += x[3 + static_cast<int>(m)] * (conv_modes_[m] * v);
    }
    return out;
}

Vec ADRAssembly::rhs(const Vec& x) const {
    const int nx = problem_.nx, ny = problem_.ny;
    Vec s(problem_.q());
    switch (problem_.source_mode) {
    case ADRProblem::SourceMode::Zero:
        s.setZero();
        return s;
    case ADRProblem::SourceMode::Constant:
        s.setOnes();
        return s;
    case ADRProblem::SourceMode::Parametrized:
        break;
    }
    double k2sq = problem_.kappa2 * problem_.kappa2;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double dx = cell_x(i) - x[0];
            double dy = cell_y(j) - x[1];
            s[j * nx + i] = std::exp(-(dx * dx + dy * dy) / k2sq);
        }
    return s;
}

Vec ADRAssembly::solve_high_fidelity(const Vec& x) const {
    SpMat a = operator_matrix(x);
    Vec b = rhs(x);
    Eigen::SparseLU<SpMat> lu(a);
    if (lu.info() != Eigen::Success)
        throw SingularSystemError("solve_high_fidelity: factorization failed");
    Vec f = lu.solve(b);
    double bnorm = b.norm();
    double rnorm = (a * f - b).norm();
    if (bnorm > 0.0 && !(rnorm <= 1e-10 * bnorm))
        throw SingularSystemError("solve_high_fidelity: residual above tolerance");
    return f;
}

double ADRAssembly::smallest_singular_value(const Vec& x) const {
    SpMat a = operator_matrix(x);
    Eigen::SparseLU<SpMat> lu(a);
    if (lu.info() != Eigen::Success)
        throw SingularSystemError("smallest_singular_value: factorization failed");
    SpMat at = SpMat(a.transpose());
    Eigen::SparseLU<SpMat> lut(at);
    if (lut.info() != Eigen::Success)
        throw SingularSystemError("smallest_singular_value: transpose factorization failed");
    // Power iteration on inv(A) inv(A)^T; its largest eigenvalue is
    // 1/sigma_min^2.
    Vec v = Vec::Ones(a.rows());
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < 200; ++it) {
        Vec w = lut.solve(v);
        Vec u = lu.solve(w);
        double norm = u.norm();
        if (norm == 0.0) break;
        u /= norm;
        double next = norm;
        if (it > 10 && std::abs(next - lambda) <= 1e-12 * next) {
            lambda = next;
            break;
        }
        lambda = next;
        v = u;
    }
    return 1.0 / std::sqrt(lambda);
}

Vec solve_high_fidelity(const ADRAssembly& assembly, const Vec& x) {
    return assembly.solve_high_fidelity(x);
}

double sup_norm_score(const Vec& field) {
    if (field.size() == 0) throw InvalidParameterError("sup_norm_score: empty field");
    return field.cwiseAbs().maxCoeff();
}

// Nested bases make one d_max-sized projection per affine term enough; level
// k slices the top-left block.
void project_reduced_operators(const ADRAssembly& assembly, PODHierarchy& pod) {
    const Mat& v = pod.basis;
    pod.base_r = v.transpose() * (assembly.base_operator() * v);
    pod.conv_x_r = v.transpose() * (assembly.convection_x() * v);
    pod.conv_y_r = v.transpose() * (assembly.convection_y() * v);
    pod.modes_r.clear();
    for (const SpMat& m : assembly.convection_modes())
        pod.modes_r.push_back(v.transpose() * (m * v));
}

PODHierarchy build_pod(const ADRAssembly& assembly, const std::vector<Vec>& snapshot_params,
                       std::vector<int> dims) {
    if (dims.empty()) throw InvalidParameterError("build_pod: dims must be non-empty");
    for (std::size_t i = 1; i < dims.size(); ++i)
        if (dims[i] <= dims[i - 1])
            throw InvalidParameterError("build_pod: dims must be strictly increasing");
    int dmax = dims.back();
    if (static_cast<int>(snapshot_params.size()) < dmax)
        throw InvalidParameterError("build_pod: need at least max(dims) snapshots");

    const int q = assembly.problem().q();
    Mat snapshots(q, static_cast<int>(snapshot_params.size()));
    std::vector<double> sigma_min(snapshot_params.size());
    parallel_for(snapshot_params.size(), [&](std::size_t i) {
        snapshots.col(static_cast<int>(i)) = assembly.solve_high_fidelity(snapshot_params[i]);
        sigma_min[i] = assembly.smallest_singular_value(snapshot_params[i]);
    });

    Eigen::BDCSVD<Mat> svd(snapshots, Eigen::ComputeThinU);
    const Vec& sv = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > 1e-12 * sv[0]) ++rank;
    if (rank < dmax)
        throw RankDeficientError("build_pod: requested dimension exceeds snapshot rank");

    PODHierarchy pod;
    pod.basis = svd.matrixU().leftCols(dmax);
    pod.dims = std::move(dims);
    pod.singular_values = sv;
    double mn = sigma_min[0];
    for (double s : sigma_min) mn = std::min(mn, s);
    pod.stability_floor = 0.9 * mn;
    project_reduced_operators(assembly, pod);
    return pod;
}

RBSolution rb_solve(const ADRAssembly& assembly, const PODHierarchy& pod, const Vec& x, int k) {
    if (k < 1 || k > pod.level_count())
        throw InvalidParameterError("rb_solve: level out of range");
    int d = pod.dims[static_cast<std::size_t>(k - 1)];
    const ADRProblem& prob = assembly.problem();

    Mat ar = pod.base_r.topLeftCorner(d, d);
    if (!prob.zero_velocity) {
        double angle = x[ADRProblem::kAngleIndex];
        ar += std::cos(angle) * pod.conv_x_r.topLeftCorner(d, d) +
              std::sin(angle) * pod.conv_y_r.topLeftCorner(d, d);
        for (std::size_t m = 0; m < pod.modes_r.size(); ++m)
            ar += x[3 + static_cast<int>(m)] * pod.modes_r[m].topLeftCorner(d, d);
    }
    Vec b = assembly.rhs(x);
    Vec br = pod.basis.leftCols(d).transpose() * b;

    RBSolution sol;
    Eigen::PartialPivLU<Mat> lu(ar);
    Vec y = lu.solve(br);
    if (!y.allFinite()) {
        y = ar.colPivHouseholderQr().solve(br);
        sol.used_least_squares = true;
    }
    sol.field = pod.basis.leftCols(d) * y;
    sol.residual_norm = (assembly.apply_operator(x, sol.field) - b).norm();
    return sol;
}

double error_bound(const ADRAssembly& assembly, const PODHierarchy& pod, const Vec& x, int k,
                   BoundProvider provider) {
    if (provider == BoundProvider::ExactOracle) {
        Vec exact = assembly.solve_high_fidelity(x);
        return (exact - rb_solve(assembly, pod, x, k).field).norm();
    }
    if (!(pod.stability_floor > 0.0))
        throw InvalidParameterError("error_bound: stability floor not calibrated");
    return rb_solve(assembly, pod, x, k).residual_norm / pod.stability_floor;
}

namespace {

constexpr char kPodMagic[8] = {'M', 'F', 'C', 'E', 'P', 'O', 'D', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(out, bits);
}

double read_f64(std::istream& in) {
    std::uint64_t bits = read_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace

void save_pod(const PODHierarchy& pod, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_pod: cannot open " + path);
    out.write(kPodMagic, 8);
    write_u64(out, static_cast<std::uint64_t>(pod.basis.rows()));
    write_u64(out, static_cast<std::uint64_t>(pod.basis.cols()));
    write_u64(out, static_cast<std::uint64_t>(pod.dims.size()));
    for (int d : pod.dims) write_u64(out, static_cast<std::uint64_t>(d));
    for (int c = 0; c < pod.basis.cols(); ++c)
        for (int r = 0; r < pod.basis.rows(); ++r) write_f64(out, pod.basis(r, c));
    write_f64(out, pod.stability_floor);
    if (!out) throw Error("save_pod: write failed for " + path);
}

PODHierarchy load_pod(const std::string& path, const ADRAssembly& assembly) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_pod: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kPodMagic, 8) != 0)
        throw Error("load_pod: bad magic in " + path);
    auto q = static_cast<int>(read_u64(in));
    auto dmax = static_cast<int>(read_u64(in));
    auto nlev = static_cast<std::size_t>(read_u64(in));
    PODHierarchy pod;
    pod.dims.resize(nlev);
    for (std::size_t i = 0; i < nlev; ++i) pod.dims[i] = static_cast<int>(read_u64(in));
    if (q != assembly.problem().q())
        throw Error("load_pod: grid size mismatch with problem");
    pod.basis.resize(q, dmax);
    for (int c = 0; c < dmax; ++c)
        for (int r = 0; r < q; ++r) pod.basis(r, c) = read_f64(in);
    pod.stability_floor = read_f64(in);
    if (!in) throw Error("load_pod: truncated file " + path);
    project_reduced_operators(assembly, pod);
    return pod;
}

PdeHierarchy::PdeHierarchy(std::shared_ptr<const ADRAssembly> assembly, PODHierarchy pod)
    : assembly_(std::move(assembly)), pod_(std::move(pod)) {
    for (int c = 0; c < pod_.basis.cols(); ++c) {
        double n = pod_.basis.col(c).norm();
        if (std::abs(n - 1.0) > 1e-10)
            throw InvalidParameterError("PdeHierarchy: basis columns not orthonormal");
    }
}

ScoreBound PdeHierarchy::eval_level(const Vec& x, int level) const {
    if (level < 1 || level > level_count())
        throw InvalidParameterError("PdeHierarchy: level out of range");
    if (level == level_count())
        return {sup_norm_score(assembly_->solve_high_fidelity(x)), 0.0};
    RBSolution sol = rb_solve(*assembly_, pod_, x, level);
    return {sup_norm_score(sol.field), sol.residual_norm / pod_.stability_floor};
}

int PdeHierarchy::cost_rank(int level) const {
    if (level < 1 || level > level_count())
        throw InvalidParameterError("PdeHierarchy: level out of range");
    if (level == level_count()) return assembly_->problem().q();
    return pod_.dims[static_cast<std::size_t>(level - 1)];
}

} // namespace mfce
