#ifndef IMPLIED_PAIR_H
#define IMPLIED_PAIR_H

#include <stddef.h>
#include <stdint.h>

#define IP_CALL 0

#define IP_PUT 1

// Status codes. Zero is success.
typedef enum IpStatus {
  IP_STATUS_OK = 0,
  IP_STATUS_INVALID_INPUT = 1,
  IP_STATUS_NULL_POINTER = 2,
  IP_STATUS_DEGENERATE = 3,
  IP_STATUS_IDENTICAL_STRIKES = 4,
  IP_STATUS_PRICE_OUT_OF_BOUNDS = 5,
  IP_STATUS_BRACKET_EXHAUSTED = 6,
  IP_STATUS_NO_ROOT = 7,
  IP_STATUS_MULTIPLE_ROOTS = 8,
  IP_STATUS_INNER_FAILURE = 9,
  IP_STATUS_UNCONVERGED = 10,
  IP_STATUS_TOO_MANY_PERIODS = 11,
  IP_STATUS_IO = 12,
  IP_STATUS_PARSE = 13,
  IP_STATUS_PANIC = 14,
} IpStatus;

typedef enum IpCellStatus {
  IP_CELL_STATUS_CONVERGED = 0,
  IP_CELL_STATUS_NO_ROOT = 1,
  IP_CELL_STATUS_MULTIPLE_ROOTS = 2,
  IP_CELL_STATUS_DEGENERATE = 3,
  IP_CELL_STATUS_INNER_FAILURE = 4,
  IP_CELL_STATUS_UNCONVERGED = 5,
} IpCellStatus;

// Opaque mixture model.
typedef struct IpMixture IpMixture;

// Opaque calibrated surface.
typedef struct IpSurface IpSurface;

// Solver settings; obtain defaults from `ip_solver_config_default`.
typedef struct IpSolverConfig {
  double sigma_min;
  double sigma_max;
  double rho_min;
  double rho_max;
  double price_tol;
  uint32_t max_iter;
  uint32_t scan_points;
} IpSolverConfig;

typedef struct IpQuote {
  // `IP_CALL` or `IP_PUT`.
  int32_t kind;
  double strike;
  double tau;
  double price;
} IpQuote;

typedef struct IpImpliedPair {
  double sigma_imp;
  double rho_imp;
  double residual1;
  double residual2;
  uint32_t outer_iterations;
  uint32_t inner_iterations;
  // 1 when both residuals are within the price tolerance.
  int32_t converged;
} IpImpliedPair;

typedef struct IpTermStructure {
  double sigma_short;
  double sigma_long;
  double rho;
  double residuals[3];
  int32_t converged;
} IpTermStructure;

typedef struct IpImpliedLattice {
  double rho;
  double eps;
  double residual1;
  double residual2;
  int32_t converged;
} IpImpliedLattice;

typedef struct IpAveragingReport {
  double mc_mean;
  double std_error;
  double analytic;
  double z_score;
  uint64_t n_paths;
} IpAveragingReport;

// One surface cell. `status` uses `IpCellStatus` values; parameters are
// NaN for cells without a root.
typedef struct IpSurfaceCell {
  double k1;
  double k2;
  double sigma_imp;
  double rho_imp;
  int32_t status;
  uint32_t iterations;
  double residual1;
  double residual2;
} IpSurfaceCell;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next library call on the same thread.
const char *ip_last_error_message(void);

// Releases a string returned by this library. NULL is ignored.
void ip_string_free(char *s);

double ip_norm_cdf(double z);

struct IpSolverConfig ip_solver_config_default(void);

// Default search box for `ip_binomial_implied`: `sigma_*` bounds `eps`.
struct IpSolverConfig ip_solver_config_binomial(void);

enum IpStatus ip_bs_price(int32_t kind,
                          double spot,
                          double strike,
                          double tau,
                          double sigma,
                          double rate,
                          double *out_price);

enum IpStatus ip_vega(double spot,
                      double strike,
                      double tau,
                      double sigma,
                      double rate,
                      double *out_vega);

// Jointly implied volatility and average rate. `cfg` may be NULL.
enum IpStatus ip_implied_pair(const struct IpQuote *q1,
                              const struct IpQuote *q2,
                              double spot,
                              const struct IpSolverConfig *cfg,
                              struct IpImpliedPair *out_pair);

// Spot-free variant on call prices and strikes divided by the spot.
enum IpStatus ip_implied_pair_normalized(double g1,
                                         double g2,
                                         double kappa1,
                                         double kappa2,
                                         double tau,
                                         const struct IpSolverConfig *cfg,
                                         struct IpImpliedPair *out_pair);

// Short-expiry quote `q1` plus two quotes `q2`, `q3` sharing a later expiry.
enum IpStatus ip_term_structure_triple(const struct IpQuote *q1,
                                       const struct IpQuote *q2,
                                       const struct IpQuote *q3,
                                       double spot,
                                       const struct IpSolverConfig *cfg,
                                       struct IpTermStructure *out_fit);

// Builds a mixture from `n` states given as parallel arrays.
enum IpStatus ip_mixture_new(double spot,
                             double tau,
                             const double *weights,
                             const double *sigmas,
                             const double *rates,
                             size_t n,
                             struct IpMixture **out_model);

// Parses `{"spot", "tau", "states": [{"p", "sigma", "r"}]}`.
enum IpStatus ip_mixture_from_json(const char *json, struct IpMixture **out_model);

// `"high-rate"` or `"low-rate"`.
enum IpStatus ip_mixture_preset(const char *name, struct IpMixture **out_model);

enum IpStatus ip_mixture_price(const struct IpMixture *model,
                               int32_t kind,
                               double strike,
                               double *out_price);

void ip_mixture_free(struct IpMixture *model);

enum IpStatus ip_binomial_price(double rho,
                                double eps,
                                uint32_t periods,
                                double spot,
                                int32_t kind,
                                double strike,
                                double *out_price);

// Implied `(rho, eps)` from two lattice call prices. `cfg` may be NULL for
// `ip_solver_config_binomial`.
enum IpStatus ip_binomial_implied(double p1,
                                  double p2,
                                  double k1,
                                  double k2,
                                  double spot,
                                  uint32_t periods,
                                  const struct IpSolverConfig *cfg,
                                  struct IpImpliedLattice *out_fit);

// Monte Carlo price under a piecewise-constant curve against Black–Scholes
// at the averaged parameters. `spec_json` is `{"spot", "segments": [{"dt", "sigma", "r"}]}`.
enum IpStatus ip_averaging_check(const char *spec_json,
                                 int32_t kind,
                                 double strike,
                                 uint64_t n_paths,
                                 uint64_t seed,
                                 struct IpAveragingReport *out_report);

// Calibrates every `(k1_axis[i], k2_axis[j])` pair on call quotes from `model`.
enum IpStatus ip_surface_compute(const struct IpMixture *model,
                                 const double *k1_axis,
                                 size_t n1,
                                 const double *k2_axis,
                                 size_t n2,
                                 const struct IpSolverConfig *cfg,
                                 struct IpSurface **out_surface);

// Number of cells, `n1 * n2`. Zero for NULL.
size_t ip_surface_cell_count(const struct IpSurface *surface);

// Cell `index` in row-major order (k1 outer, k2 inner).
enum IpStatus ip_surface_cell(const struct IpSurface *surface,
                              size_t index,
                              struct IpSurfaceCell *out_cell);

// Long-form CSV of the surface; free with `ip_string_free`.
enum IpStatus ip_surface_to_csv(const struct IpSurface *surface, char **out_csv);

void ip_surface_free(struct IpSurface *surface);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IMPLIED_PAIR_H */
