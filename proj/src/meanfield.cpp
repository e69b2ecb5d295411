#include "dicke/meanfield.hpp"
#include "dicke/errors.hpp"
#include "dicke/format.hpp"

#include <cmath>
#include <string>

namespace dicke {

namespace {

void require_superradiant(double lambda, double omega, double omega0, const char* what) {
    if (!(omega > 0.0) || !(omega0 > 0.0)) throw DomainError(std::string(what) + ": frequencies must be > 0");
    const double lc = 0.5 * std::sqrt(omega * omega0);
    if (!(lambda > lc)) {
        throw DomainError(std::string(what) + ": coupling " + format_double(lambda) +
                          " is not above lambda_c = " + format_double(lc));
    }
}

} // namespace

double mf_final_energy(double li, double lf, double omega, double omega0) {
    require_superradiant(li, omega, omega0, "mf_final_energy");
    if (!(lf >= 0.0)) throw DomainError("mf_final_energy: lambda_f must be >= 0");
    return 2.0 * li * (li - 2.0 * lf) / omega + (2.0 * lf - 3.0 * li) * omega * omega0 * omega0 / (8.0 * li * li * li);
}

double mf_ground_energy(double lf, double omega, double omega0) {
    require_superradiant(lf, omega, omega0, "mf_ground_energy");
    const double l2 = lf * lf;
    return -omega0 * (omega * omega0 / (4.0 * l2)) -
           (2.0 / omega) * (16.0 * l2 * l2 - omega * omega * omega0 * omega0) / (16.0 * l2);
}

double mf_heat_general(double x, double lf, double omega, double omega0) {
    require_superradiant(lf, omega, omega0, "mf_heat");
    if (!(x >= 0.0)) throw DomainError("mf_heat: x = lambda_i - lambda_f must be >= 0");
    const double li = lf + x;
    return x * x / (8.0 * omega) *
           (16.0 + (2.0 * lf + li) * omega0 * omega0 * omega * omega / (lf * lf * li * li * li));
}

double mf_heat_unit(double x, double lf) {
    require_superradiant(lf, 1.0, 1.0, "mf_heat");
    if (!(x >= 0.0)) throw DomainError("mf_heat: x = lambda_i - lambda_f must be >= 0");
    const double s = lf + x;
    return 2.0 * x * x + x * x * (3.0 * lf + x) / (8.0 * lf * lf * s * s * s);
}

MeanFieldLedger mf_heat(double x, double lf, double omega, double omega0) {
    MeanFieldLedger l;
    l.q_over_J = mf_heat_general(x, lf, omega, omega0);
    l.e0_over_J = mf_ground_energy(lf, omega, omega0);
    l.e_final_over_J = mf_final_energy(lf + x, lf, omega, omega0);
    l.q_leading_over_J = 2.0 * x * x / omega;
    l.correction_over_J = l.q_over_J - l.q_leading_over_J;
    return l;
}

} // namespace dicke
