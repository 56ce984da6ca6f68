#ifndef CHARNET_H
#define CHARNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CnStatus {
  CN_STATUS_OK = 0,
  CN_STATUS_NULL_POINTER = 1,
  CN_STATUS_INVALID_UTF8 = 2,
  CN_STATUS_INVALID_INPUT = 3,
  CN_STATUS_IO = 4,
  CN_STATUS_PANIC = 5,
} CnStatus;

// Which network a metric set describes.
typedef enum CnScope {
  CN_SCOPE_ORIGINAL = 0,
  CN_SCOPE_POSITIVE = 1,
  CN_SCOPE_NEGATIVE = 2,
} CnScope;

// Opaque lexicon set.
typedef struct CnLexicons CnLexicons;

// Opaque signed network.
typedef struct CnNetwork CnNetwork;

// Optional lexicon files; a null entry keeps the bundled list.
typedef struct CnLexiconPaths {
  const char *male_names;
  const char *female_names;
  const char *nicknames;
  const char *titles;
  const char *positive_words;
  const char *negative_words;
  const char *stopwords;
} CnLexiconPaths;

typedef struct CnMetrics {
  size_t node_count;
  size_t edge_count;
  double density;
  double avg_edge_weight;
  double avg_clustering;
  double assortativity;
} CnMetrics;

typedef struct CnWelch {
  double t;
  double df;
  // Two-sided p-value.
  double p;
} CnWelch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call on the same thread.
const char *cn_last_error(void);

// # Safety
// `s` must be null or a string returned by this library.
void cn_string_free(char *s);

// # Safety
// `out` must be valid for writes.
enum CnStatus cn_lexicons_bundled(struct CnLexicons **out);

// # Safety
// `paths` must point to a valid struct whose non-null members are
// NUL-terminated strings; `out` must be valid for writes.
enum CnStatus cn_lexicons_load(const struct CnLexiconPaths *paths, struct CnLexicons **out);

// # Safety
// `lexicons` must be null or a handle from this library, freed once.
void cn_lexicons_free(struct CnLexicons *lexicons);

// Segments `text`, annotates it with the rule-based annotator and builds its
// signed network. `unit_coefficient` is usually 0.01.
//
// # Safety
// Strings must be NUL-terminated; `lexicons` must be a live handle; `out`
// must be valid for writes.
enum CnStatus cn_extract_fallback(const struct CnLexicons *lexicons,
                                  const char *story_id,
                                  const char *writer,
                                  const char *text,
                                  double unit_coefficient,
                                  struct CnNetwork **out);

// Parses one graph record as written by the `extract` command.
//
// # Safety
// `json` must be NUL-terminated; `out` must be valid for writes.
enum CnStatus cn_network_from_json(const char *json, struct CnNetwork **out);

// Serializes a network as one JSON graph record, without a trailing newline.
//
// # Safety
// `net` must be a live handle; `out` must be valid for writes. Free the
// result with `cn_string_free`.
enum CnStatus cn_network_to_json(const struct CnNetwork *net, char **out);

// # Safety
// `net` must be null or a handle from this library, freed once.
void cn_network_free(struct CnNetwork *net);

// # Safety
// `net` must be a live handle; the out pointers must be valid for writes.
enum CnStatus cn_network_counts(const struct CnNetwork *net, size_t *nodes, size_t *edges);

// Edge-induced subgraph of one sign: `sign` is +1 or -1.
//
// # Safety
// `net` must be a live handle; `out` must be valid for writes.
enum CnStatus cn_network_sign_subgraph(const struct CnNetwork *net,
                                       int32_t sign,
                                       struct CnNetwork **out);

// Metrics of the network or of one of its sign subgraphs.
//
// # Safety
// `net` must be a live handle; `out` must be valid for writes.
enum CnStatus cn_network_metrics(const struct CnNetwork *net,
                                 enum CnScope scope,
                                 struct CnMetrics *out);

// Welch's unequal-variance t-test, two-sided.
//
// # Safety
// `a` and `b` must point to `na` and `nb` doubles; `out` must be valid for
// writes.
enum CnStatus cn_welch_t_test(const double *a,
                              size_t na,
                              const double *b,
                              size_t nb,
                              struct CnWelch *out);

// First Wasserstein distance between two empirical samples.
//
// # Safety
// `a` and `b` must point to `na` and `nb` doubles; `out` must be valid for
// writes.
enum CnStatus cn_wasserstein(const double *a, size_t na, const double *b, size_t nb, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHARNET_H */
