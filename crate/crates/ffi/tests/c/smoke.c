#include <math.h>
#include <stdio.h>
#include "polynorta.h"

int main(void) {
    PnModel *beta = NULL, *ln = NULL;
    if (pn_fit_pwm("beta:2,2", 11, false, &beta) != PN_OK) return 10;
    if (pn_fit_percentile("lognormal:0,1", 11, 0.001, &ln) != PN_OK) return 11;
    double rz = 0.0;
    if (pn_rho_solve(ln, ln, 0.5, &rz) != PN_OK || fabs(rz - 0.620) > 5e-3) return 12;
    if (pn_rho_solve(ln, ln, -0.9, &rz) != PN_INFEASIBLE) return 13;
    char msg[256];
    if (pn_last_error_message(msg, sizeof msg) == 0) return 14;

    const PnModel *ms[2] = {beta, ln};
    double rx[4] = {1.0, 0.4, 0.4, 1.0};
    PnVectorModel *vm = NULL;
    if (pn_vector_model_new(ms, 2, rx, false, &vm) != PN_OK) return 15;
    double out[2 * 1000];
    if (pn_generate(vm, 1000, 5, 0, out, 2 * 1000) != PN_OK) return 16;
    for (int i = 0; i < 1000; i++) {
        if (out[2 * i] < -0.1 || out[2 * i] > 1.1) return 17;
    }
    pn_vector_model_free(vm);
    pn_model_free(beta);
    pn_model_free(ln);
    printf("ok\n");
    return 0;
}
