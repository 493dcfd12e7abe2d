/* Build the static library first:
 *   cargo build --release -p hessian-lab-ffi
 *   cc -Icrates/ffi/include crates/ffi/examples/smoke.c \
 *      target/release/libhessian_lab_ffi.a -lm -lpthread -ldl -o smoke
 */
#include "hessian_lab.h"
#include <stdio.h>

int main(void) {
    HlOperator *op = NULL;
    HlBackground *bg = NULL;
    HlField *g = NULL;
    HlSolveReport *rep = NULL;
    double id[4] = {1, 0, 0, 1}, chi[4] = {2, 0, 0, 2};
    char msg[256];

    if (hl_operator_sigma_k(2, 2, &op) != HL_STATUS_OK) return 1;
    if (hl_background_constant(op, 8, id, NULL, chi, NULL, &bg) != HL_STATUS_OK) return 2;
    if (hl_field_from_expr(2, 8, "0.1*cos(2*pi*x0)*sin(2*pi*x3)", &g) != HL_STATUS_OK) return 3;
    if (hl_solve_fixed(op, bg, g, 1e-10, HL_BACKEND_FINITE_DIFFERENCE, &rep) != HL_STATUS_OK) {
        hl_last_error(msg, sizeof msg);
        fprintf(stderr, "solve failed: %s\n", msg);
        return 4;
    }
    printf("c = %.12f, newton iterations = %zu, residual = %g\n",
           hl_report_c(rep), hl_report_newton_iterations(rep), hl_report_residual(rep));

    /* k > n is rejected with a readable message */
    HlOperator *bad = NULL;
    HlStatus s = hl_operator_sigma_k(2, 5, &bad);
    hl_last_error(msg, sizeof msg);
    printf("status = %d, error = %s\n", (int)s, msg);

    hl_report_free(rep);
    hl_field_free(g);
    hl_background_free(bg);
    hl_operator_free(op);
    return 0;
}
