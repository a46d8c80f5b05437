#include <stdio.h>
#include "spex.h"

int main(int argc, char **argv) {
    if (argc < 2) {
        fprintf(stderr, "usage: %s network.json [pipeline] [values...]\n", argv[0]);
        return 1;
    }
    SxNetwork *net = NULL;
    if (sx_network_load(argv[1], &net) != SX_STATUS_OK) {
        fprintf(stderr, "load: %s\n", sx_last_error());
        return 1;
    }
    const char *pipeline = argc > 2 ? argv[2] : "A";
    size_t n = sx_network_input_count(net);
    if ((size_t)argc < 3 + n) {
        fprintf(stderr, "need %zu feature values\n", n);
        sx_network_free(net);
        return 1;
    }
    SxExplanation *e = NULL;
    SxStatus st = sx_explain(net, (const char *const *)(argv + 3), n, pipeline, 60.0, &e);
    if (st != SX_STATUS_OK) {
        fprintf(stderr, "explain (%d): %s\n", (int)st, sx_last_error());
        sx_network_free(net);
        return 1;
    }
    char *f = sx_explanation_formula(e);
    char *cls = sx_network_class_name(net, sx_explanation_class(e));
    printf("%s: %s\n", cls, f);
    sx_string_free(cls);
    sx_string_free(f);
    sx_explanation_free(e);
    sx_network_free(net);
    return 0;
}
