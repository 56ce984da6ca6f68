#include <math.h>
#include <stdio.h>

#include "charnet.h"

int main(void) {
    CnLexicons *lex = NULL;
    CnNetwork *net = NULL;
    CnMetrics m;
    if (cn_lexicons_bundled(&lex) != CN_STATUS_OK) {
        return 1;
    }
    CnStatus st = cn_extract_fallback(lex, "s1", "w", "Alice Moreau thanked Bob Quill.", 0.01, &net);
    cn_lexicons_free(lex);
    if (st != CN_STATUS_OK) {
        fprintf(stderr, "%s\n", cn_last_error());
        return 1;
    }
    cn_network_metrics(net, CN_SCOPE_ORIGINAL, &m);
    printf("%zu nodes, density %s\n", m.node_count, isnan(m.density) ? "undefined" : "defined");
    char *json = NULL;
    cn_network_to_json(net, &json);
    puts(json);
    cn_string_free(json);
    cn_network_free(net);

    double a[] = {1, 2, 3, 4, 5}, b[] = {2, 3, 4, 5, 6};
    CnWelch w;
    cn_welch_t_test(a, 5, b, 5, &w);
    printf("t=%.3f df=%.1f p=%.4f\n", w.t, w.df, w.p);
    return 0;
}
