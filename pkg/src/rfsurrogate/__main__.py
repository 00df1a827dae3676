import os

# single-threaded BLAS keeps floating-point reductions identical whatever the thread cap
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")


def main() -> int:
    from .cli import main as run
    return run()


if __name__ == "__main__":
    raise SystemExit(main())
