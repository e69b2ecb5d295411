// meanfield.hpp - closed-form mean-field energies and dissipated heat (per J)

#pragma once

namespace dicke {

struct MeanFieldLedger {
    double e_final_over_J{0.0};
    double e0_over_J{0.0};
    double q_over_J{0.0};
    double q_leading_over_J{0.0};
    double correction_over_J{0.0};
};

// Energy per J of the lambda_i coherent ground state under H(lambda_f).
// Requires lambda_i > lambda_c; throws DomainError otherwise.
double mf_final_energy(double lambda_i, double lambda_f, double omega = 1.0, double omega0 = 1.0);

// Superradiant ground energy per J; requires lambda_f > lambda_c.
double mf_ground_energy(double lambda_f, double omega = 1.0, double omega0 = 1.0);

// Heat per J for a downward quench of size x = lambda_i - lambda_f >= 0.
double mf_heat_general(double x, double lambda_f, double omega, double omega0);

// Same quantity written for omega = omega0 = 1.
double mf_heat_unit(double x, double lambda_f);

// Full ledger; q_leading is 2 x^2 / omega.
MeanFieldLedger mf_heat(double x, double lambda_f, double omega = 1.0, double omega0 = 1.0);

} // namespace dicke
