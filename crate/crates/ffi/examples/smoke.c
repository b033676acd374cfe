#include <stdio.h>
#include "irsbim.h"

int main(void) {
    IrsbimSchemeConfig *s = NULL;
    if (irsbim_scheme_new(IRSBIM_SCHEME_S2, 64, 2, 1, IRSBIM_FAMILY_QAM, 16, &s) != IRSBIM_STATUS_OK) {
        fprintf(stderr, "error: %s\n", irsbim_last_error());
        return 1;
    }
    uint32_t bpcu = 0;
    irsbim_bpcu(s, &bpcu);
    double p = 0.0;
    irsbim_prob_ji(1.0, 1, &p);
    printf("irsbim %s: S2 carries %u bits per channel use; Pr(beta=1, N_R=1) = %.6f\n", irsbim_version(), bpcu, p);
    irsbim_scheme_free(s);
    return 0;
}
