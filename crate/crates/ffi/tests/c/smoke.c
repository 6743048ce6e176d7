#include <math.h>
#include <stdio.h>

#include "had.h"

int main(void) {
    double d[200], dy[200];
    for (int i = 0; i < 200; i++) {
        d[i] = (i + 1) / 200.0;
        dy[i] = d[i];
    }
    HadStatus status;
    HadSample *s = had_sample_new(dy, d, 200, &status);
    if (s == NULL || status != HAD_STATUS_OK) {
        fprintf(stderr, "sample: %s\n", had_last_error());
        return 1;
    }
    HadWasResult r;
    status = had_estimate(s, HAD_MODE_QUG, HAD_KERNEL_EPANECHNIKOV, 0.05, 0.0, &r);
    had_sample_free(s);
    if (status != HAD_STATUS_OK || fabs(r.beta - 1.0) > 1e-6) {
        fprintf(stderr, "estimate failed\n");
        return 1;
    }
    double q[2] = {0.0, 1.0};
    HadQugResult qr;
    if (had_test_qug(q, 2, 0.05, &qr) != HAD_STATUS_UNTREATED_UNITS || had_last_error() == NULL) {
        return 1;
    }
    printf("beta=%.6f\n", r.beta);
    return 0;
}
