#include <math.h>
#include <stdio.h>
#include <string.h>

#include "brlsvrg.h"

#define CHECK(call)                                                   \
  do {                                                                \
    BrStatus s_ = (call);                                             \
    if (s_ != BR_STATUS_OK) {                                         \
      char msg_[256];                                                 \
      br_last_error_message(msg_, sizeof msg_);                       \
      fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_, msg_);  \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  BrDataset *ds = NULL;
  CHECK(br_dataset_parse_libsvm("+1 1:1\n-1 2:1\n+1 1:0.5 2:-0.5\n", 0, &ds));
  if (br_dataset_len(ds) != 3 || br_dataset_dim(ds) != 2) return 2;

  BrObjective *obj = NULL;
  CHECK(br_objective_new(ds, 0.1, &obj));
  double x[2] = {0.0, 0.0}, f = 0.0;
  CHECK(br_objective_loss(obj, x, 2, &f));
  if (fabs(f - log(2.0)) > 1e-15) return 3;

  double xs[2], fs;
  CHECK(br_solve_reference(obj, 1e-12, 100000, xs, 2, &fs));
  double g[2];
  CHECK(br_objective_grad(obj, xs, 2, g));
  if (sqrt(g[0] * g[0] + g[1] * g[1]) > 1e-10) return 4;

  double vecs[6] = {0, 0, 1, 0, 0, 1};
  double out[2];
  CHECK(br_aggregate("{\"base\":\"mean\"}", vecs, 3, 2, 0, out));
  if (fabs(out[0] - 1.0 / 3.0) > 1e-15) return 5;

  BrDataset *bad = NULL;
  if (br_dataset_parse_libsvm("+1 0:1\n", 0, &bad) != BR_STATUS_PARSE_ERROR) return 6;
  char msg[128];
  if (br_last_error_message(msg, sizeof msg) == 0 || strstr(msg, "line 1") == NULL) return 7;

  br_objective_free(obj);
  br_dataset_free(ds);
  printf("ok %s\n", br_version());
  return 0;
}
