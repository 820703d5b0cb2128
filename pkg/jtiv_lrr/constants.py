DEFAULT_LAMBDA = 10.0
DEFAULT_RHO0 = 1e-4
DEFAULT_RHO_MULT = 2.0
DEFAULT_RHO_MAX = 1e10
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200
DEFAULT_SEED = 0

# Per-view principal subspace kept at solver entry: singular values at or
# above this fraction of the largest. 0 keeps the data as given.
DEFAULT_SIGNAL_RTOL = 0.25

# TRPCA benchmarks start from a larger penalty and grow it more slowly.
DEFAULT_TRPCA_RHO0 = 1e-3
DEFAULT_TRPCA_RHO_MULT = 1.1
DEFAULT_TRPCA_MAX_ITER = 500
DEFAULT_TRPCA_COUPLING = "sum"

DEFAULT_RANK_FRAC = 0.1
DEFAULT_SPARSITY = 0.05
DEFAULT_BENCH_DIMS = (50, 50, 20)
DEFAULT_BENCH_TRIALS = 20

DEFAULT_MI_VIEWS = 20
DEFAULT_MI_SIZE = 40
DEFAULT_MI_BINS = 16
DEFAULT_MI_SEEDS = 5

DEFAULT_KMEANS_RESTARTS = 10
DEFAULT_KMEANS_MAX_ITER = 300
DEFAULT_KMEANS_TOL = 1e-8

DEFAULT_MISSING_RATIOS = (0.1, 0.3, 0.5, 0.7, 0.9)
DEFAULT_LAMBDA_GRID = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 30, 40, 50, 100)
DEFAULT_EVAL_SEEDS = 10

DEFAULT_PLANTED_N = 60
DEFAULT_PLANTED_CLUSTERS = 3
DEFAULT_PLANTED_DIMS = (30, 40, 50)
DEFAULT_PLANTED_NOISE = 0.05
DEFAULT_SUBSPACE_DIM = 3

SVD_RANK_RTOL = 1e-12
IMAG_CORRUPT_TOL = 1e-6

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_MAX_ITER = 2
EXIT_INVALID = 3
EXIT_IO = 4
